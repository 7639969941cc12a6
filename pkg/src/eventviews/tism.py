"""Translation-invariant spatiotemporal multi-view encoding.

An encoder channel is the composition of three stages: a window that
selects events, a measurement that maps each selected event to a scalar,
and an aggregation that reduces the scalars landing in each map cell.
Map geometry per view::

    TH  rows = time bins, cols = y     (x is marginalised)
    TW  rows = time bins, cols = x     (y is marginalised)
    HW  rows = y,         cols = x     (t is marginalised)

Every channel is produced by one scatter-accumulate pass over the events
(``np.bincount`` / ``ufunc.at``); there is no per-cell loop.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, DegenerateInputError
from .events import EventStream, ViewAxis, in_bounds_after_shift, shift_along_axis

__all__ = [
    "WindowFn",
    "MeasurementFn",
    "AggregationFn",
    "ConversionSpec",
    "EncoderConfig",
    "DenseMap",
    "InvarianceReport",
    "GLOBAL",
    "quantize_time",
    "encode_channel",
    "encode_view",
    "invariant_spec_set",
    "compact_spec_set",
    "check_invariance",
    "parse_specs",
    "DEFAULT_T_BINS",
]

DEFAULT_T_BINS = 224

# Variance uses exact integer power sums while they fit; see _variance().
_F64_EXACT = 2**53
_I64_SAFE = 2**62


@dataclass(frozen=True)
class WindowFn:
    """``num_bins=None`` is the global window; otherwise equal bins along z."""

    num_bins: int | None = None

    def __post_init__(self):
        if self.num_bins is not None and self.num_bins < 1:
            raise ConfigError(f"binned window needs num_bins >= 1, got {self.num_bins}")

    @property
    def is_global(self) -> bool:
        return self.num_bins is None

    @property
    def channels(self) -> int:
        return 1 if self.num_bins is None else self.num_bins

    def __str__(self) -> str:
        return "global" if self.num_bins is None else f"binned{self.num_bins}"


GLOBAL = WindowFn()


class MeasurementFn(enum.Enum):
    ZCOORD = "z"
    ZCOORD_POS = "z+"
    ZCOORD_NEG = "z-"
    POLARITY = "p"
    COUNT = "c"
    COUNT_POS = "c+"
    COUNT_NEG = "c-"

    @property
    def polarity_filter(self) -> int:
        """+1 / -1 when restricted to one polarity, 0 otherwise."""
        if self in (MeasurementFn.ZCOORD_POS, MeasurementFn.COUNT_POS):
            return 1
        if self in (MeasurementFn.ZCOORD_NEG, MeasurementFn.COUNT_NEG):
            return -1
        return 0

    @property
    def uses_z(self) -> bool:
        return self in (MeasurementFn.ZCOORD, MeasurementFn.ZCOORD_POS, MeasurementFn.ZCOORD_NEG)

    @property
    def is_count(self) -> bool:
        return self in (MeasurementFn.COUNT, MeasurementFn.COUNT_POS, MeasurementFn.COUNT_NEG)


class AggregationFn(enum.Enum):
    MAX = "max"
    MIN = "min"
    SUM = "sum"
    MEAN = "mean"
    VARIANCE = "var"


@dataclass(frozen=True)
class ConversionSpec:
    window: WindowFn
    measurement: MeasurementFn
    aggregation: AggregationFn

    @property
    def channels(self) -> int:
        return self.window.channels

    @property
    def tolerance(self) -> float:
        """Allowed absolute deviation when comparing maps of this spec.

        Mean and variance produce non-integer values; everything else is
        an exact integer in float64.
        """
        if self.aggregation in (AggregationFn.VARIANCE, AggregationFn.MEAN):
            return 1e-9
        return 0.0

    def __str__(self) -> str:
        return f"{self.window}/{self.measurement.value}/{self.aggregation.value}"


_SPEC_RE = re.compile(r"^(global|binned(\d+))/(z[+-]?|p|c[+-]?)/(max|min|sum|mean|var|variance)$")


def parse_specs(text: str) -> list[ConversionSpec]:
    """Parse ``compact``, ``invariant`` or a comma list like ``binned2/c/sum``.

    Measurements are written ``z z+ z- p c c+ c-``; ``count`` and
    ``polarity`` are accepted as aliases for ``c`` and ``p``.
    """
    name = text.strip().lower()
    if name == "compact":
        return compact_spec_set()
    if name == "invariant":
        return invariant_spec_set()
    specs = []
    for item in name.split(","):
        item = item.strip().replace("count", "c").replace("polarity", "p")
        m = _SPEC_RE.match(item)
        if not m:
            raise ConfigError(f"cannot parse conversion spec {item!r}")
        window = GLOBAL if m.group(1) == "global" else WindowFn(int(m.group(2)))
        agg = "var" if m.group(4) == "variance" else m.group(4)
        specs.append(ConversionSpec(window, MeasurementFn(m.group(3)), AggregationFn(agg)))
    return specs


@dataclass(frozen=True)
class EncoderConfig:
    view: ViewAxis
    specs: tuple[ConversionSpec, ...]
    t_bins: int = DEFAULT_T_BINS

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            raise ConfigError("encoder config needs at least one conversion spec")
        if self.t_bins < 1:
            raise ConfigError(f"t_bins must be positive, got {self.t_bins}")

    @property
    def channels(self) -> int:
        return sum(s.channels for s in self.specs)

    @classmethod
    def compact(cls, view: ViewAxis, t_bins: int = DEFAULT_T_BINS) -> "EncoderConfig":
        return cls(view, compact_spec_set(), t_bins)

    @classmethod
    def invariant(cls, view: ViewAxis, t_bins: int = DEFAULT_T_BINS) -> "EncoderConfig":
        return cls(view, invariant_spec_set(), t_bins)


@dataclass(frozen=True, eq=False)
class DenseMap:
    """A read-only ``channels x rows x cols`` float64 tensor."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ContractError(f"dense map must be a non-empty 3-D array, got shape {data.shape}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseMap):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    __hash__ = None

    def __repr__(self) -> str:
        return f"DenseMap({self.channels}x{self.rows}x{self.cols})"

    @classmethod
    def concat(cls, maps: Sequence["DenseMap"]) -> "DenseMap":
        return cls(np.concatenate([m.data for m in maps], axis=0))


def quantize_time(t: int, t_start: int, t_end: int, t_bins: int) -> int:
    """Bin index of ``t`` when ``[t_start, t_end]`` is cut into ``t_bins`` bins."""
    if t_bins < 1:
        raise ContractError(f"t_bins must be >= 1, got {t_bins}")
    if not t_start <= t <= t_end:
        raise ContractError(f"timestamp {t} outside [{t_start}, {t_end}]")
    if t_end == t_start:
        return 0
    return (t - t_start) * t_bins // (t_end - t_start + 1)


def _quantize(t: np.ndarray, t_start: int, t_end: int, t_bins: int) -> np.ndarray:
    # int64 is enough: spans up to ~4e16 us at 224 bins.
    return (t - t_start) * t_bins // (t_end - t_start + 1)


def _map_shape(stream: EventStream, view: ViewAxis, t_bins: int) -> tuple[int, int]:
    if view is ViewAxis.TH:
        return t_bins, stream.height
    if view is ViewAxis.TW:
        return t_bins, stream.width
    return stream.height, stream.width


class _Projection:
    """Per-event cell indices for one (stream, view, t_bins), shared by specs."""

    def __init__(self, stream: EventStream, view: ViewAxis, t_bins: int):
        self.stream = stream
        self.view = view
        self.shape = _map_shape(stream, view, t_bins)
        self.ncells = self.shape[0] * self.shape[1]
        self.t_bins = t_bins
        self._window_bins: dict[int, np.ndarray] = {}
        s = stream
        if len(s) == 0:
            self.cell = np.empty(0, dtype=np.int64)
        elif view is ViewAxis.HW:
            self.cell = s.y * s.width + s.x
        else:
            t0, t1 = s.time_span
            tb = _quantize(s.t, t0, t1, t_bins)
            if view is ViewAxis.TH:
                self.cell = tb * s.height + s.y
            else:
                self.cell = tb * s.width + s.x

    def z(self) -> np.ndarray:
        return self.stream.coord(self.view.orthogonal)

    def window_bins(self, window: WindowFn) -> np.ndarray:
        k = window.num_bins
        if k not in self._window_bins:
            s = self.stream
            if self.view is ViewAxis.HW:
                if len(s) == 0:
                    wb = np.empty(0, dtype=np.int64)
                else:
                    t0, t1 = s.time_span
                    if k > t1 - t0 + 1:
                        raise ConfigError(f"{k} time bins exceed the stream's {t1 - t0 + 1} us span")
                    wb = _quantize(s.t, t0, t1, k)
            else:
                axis = self.view.orthogonal
                extent = s.bound(axis)
                if k > extent:
                    raise ConfigError(f"{k} bins exceed the {axis} extent {extent}")
                wb = s.coord(axis) * k // extent
            self._window_bins[k] = wb
        return self._window_bins[k]

    def encode(self, spec: ConversionSpec) -> np.ndarray:
        nbins = spec.channels
        if spec.window.is_global:
            index = self.cell
        else:
            index = self.window_bins(spec.window) * self.ncells + self.cell
        size = nbins * self.ncells

        m = spec.measurement
        sel = None
        if m.polarity_filter:
            sel = self.stream.p == m.polarity_filter
            index = index[sel]
        if m.is_count:
            values = None
        elif m is MeasurementFn.POLARITY:
            values = self.stream.p
        else:
            values = self.z()
            if sel is not None:
                values = values[sel]

        flat = _aggregate(index, values, size, spec.aggregation)
        return flat.reshape(nbins, *self.shape)


def _aggregate(index: np.ndarray, values, size: int, agg: AggregationFn) -> np.ndarray:
    """Reduce ``values`` (``None`` means all ones) into ``size`` cells; empty cells are 0."""
    if agg is AggregationFn.SUM:
        if values is None:
            return np.bincount(index, minlength=size).astype(np.float64)
        return np.bincount(index, weights=values, minlength=size)

    count = np.bincount(index, minlength=size)
    occupied = count > 0
    if values is None:
        values = np.ones(len(index), dtype=np.int64)

    if agg is AggregationFn.MEAN:
        total = np.bincount(index, weights=values, minlength=size)
        out = np.zeros(size)
        np.divide(total, count, out=out, where=occupied)
        return out
    if agg in (AggregationFn.MAX, AggregationFn.MIN):
        ufunc = np.maximum if agg is AggregationFn.MAX else np.minimum
        out = np.full(size, -np.inf if agg is AggregationFn.MAX else np.inf)
        ufunc.at(out, index, values.astype(np.float64))
        out[~occupied] = 0.0
        return out
    return _variance(index, np.asarray(values, dtype=np.int64), count, size)


def _variance(index: np.ndarray, values: np.ndarray, count: np.ndarray, size: int) -> np.ndarray:
    """Population variance per cell.

    Values are offset by their minimum, then n*sum(d^2) - sum(d)^2 is formed
    in exact int64 arithmetic from single-pass power sums. The numerator is
    unchanged by any translation of the inputs, so shifted streams give
    bit-identical variances, and partial sums merge by plain addition. When
    the sums could overflow we fall back to a centred two-pass float form.
    """
    out = np.zeros(size)
    if len(values) == 0:
        return out
    d = values - values.min()
    n_total, d_max = len(d), int(d.max())
    occupied = count > 0
    if n_total * d_max * d_max < _F64_EXACT and (n_total * d_max) ** 2 < _I64_SAFE:
        s1 = np.bincount(index, weights=d, minlength=size).astype(np.int64)
        s2 = np.bincount(index, weights=d * d, minlength=size).astype(np.int64)
        num = count * s2 - s1 * s1
        n = count[occupied].astype(np.float64)
        out[occupied] = num[occupied].astype(np.float64) / (n * n)
        return out

    df = d.astype(np.float64)
    mean = np.zeros(size)
    np.divide(np.bincount(index, weights=df, minlength=size), count, out=mean, where=occupied)
    centred = df - mean[index]
    m2 = np.bincount(index, weights=centred * centred, minlength=size)
    np.divide(m2, count, out=out, where=occupied)
    return out


def encode_channel(stream: EventStream, view: ViewAxis, spec: ConversionSpec, t_bins: int = DEFAULT_T_BINS) -> DenseMap:
    """Encode one conversion spec; ``spec.channels`` channels in window-bin order."""
    if t_bins < 1:
        raise ConfigError(f"t_bins must be positive, got {t_bins}")
    return DenseMap(_Projection(stream, view, t_bins).encode(spec))


def encode_view(stream: EventStream, config: EncoderConfig) -> DenseMap:
    """Stack the channels of every spec in ``config`` in order."""
    proj = _Projection(stream, config.view, config.t_bins)
    return DenseMap(np.concatenate([proj.encode(spec) for spec in config.specs], axis=0))


def invariant_spec_set() -> list[ConversionSpec]:
    """The seven global-window specs that are unchanged by shifts along z."""
    M, A = MeasurementFn, AggregationFn
    return [
        ConversionSpec(GLOBAL, M.POLARITY, A.SUM),
        ConversionSpec(GLOBAL, M.COUNT, A.SUM),
        ConversionSpec(GLOBAL, M.COUNT_POS, A.SUM),
        ConversionSpec(GLOBAL, M.COUNT_NEG, A.SUM),
        ConversionSpec(GLOBAL, M.ZCOORD, A.VARIANCE),
        ConversionSpec(GLOBAL, M.ZCOORD_POS, A.VARIANCE),
        ConversionSpec(GLOBAL, M.ZCOORD_NEG, A.VARIANCE),
    ]


def compact_spec_set() -> list[ConversionSpec]:
    """Count-sum then polarity-sum: the two-channel default encoder."""
    return [
        ConversionSpec(GLOBAL, MeasurementFn.COUNT, AggregationFn.SUM),
        ConversionSpec(GLOBAL, MeasurementFn.POLARITY, AggregationFn.SUM),
    ]


@dataclass(frozen=True)
class InvarianceReport:
    invariant: bool
    max_abs_deviation: float
    tested_deltas: tuple[int, ...]
    skipped_deltas: tuple[int, ...]


def check_invariance(
    stream: EventStream,
    view: ViewAxis,
    spec: ConversionSpec,
    deltas: Sequence[int],
    t_bins: int = DEFAULT_T_BINS,
) -> InvarianceReport:
    """Compare the encoding of ``stream`` with encodings of its shifted copies.

    Deltas that would push events off the sensor are skipped. Raises
    ``DegenerateInputError`` if that leaves nothing to test.
    """
    if len(deltas) == 0:
        raise ContractError("check_invariance needs at least one delta")
    tested = [int(d) for d in deltas if in_bounds_after_shift(stream, view, d)]
    skipped = [int(d) for d in deltas if not in_bounds_after_shift(stream, view, d)]
    if not tested:
        raise DegenerateInputError(
            f"all {len(skipped)} deltas move events off the sensor; use smaller shifts"
        )
    base = encode_channel(stream, view, spec, t_bins).data
    worst = 0.0
    for d in tested:
        shifted = encode_channel(shift_along_axis(stream, view, d), view, spec, t_bins).data
        worst = max(worst, float(np.max(np.abs(shifted - base))))
    return InvarianceReport(worst <= spec.tolerance, worst, tuple(tested), tuple(skipped))
