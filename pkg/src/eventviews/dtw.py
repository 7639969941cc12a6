"""Diverse temporal warping of event timestamps.

A warp plan picks ``l`` disjoint intervals of the stream's time span and
a monotone kernel for each. Inside an interval ``[a, b]`` of duration
``D`` a timestamp moves to ``a + alpha * D * phi((t - a) / D)``, where
``phi`` fixes 0 and 1 and ``alpha`` is 1 for every family but Linear.
Linear therefore changes the interval's length, and everything after it
is shifted by ``(alpha - 1) * D`` so the time axis stays continuous.

Only timestamps change. Warping a stream once and then encoding both
temporal views keeps the TH and TW maps consistent with each other.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError
from .events import EventStream
from .tism import _quantize

__all__ = [
    "WarpFamily",
    "WarpSpec",
    "WarpPlan",
    "warp_unit",
    "sample_plan",
    "apply_warp",
    "warp_times",
    "density_profile",
    "identity_plan",
    "DEFAULT_MAGNITUDE_RANGE",
    "DEFAULT_INTERVALS",
]

DEFAULT_MAGNITUDE_RANGE = (0.5, 2.0)
DEFAULT_INTERVALS = 4

_MIN_POSITIVE = 1e-3
_MIN_ABS_BETA = 1e-6
_MAX_ABS_ETA = 1.0 - 1e-3


class WarpFamily(enum.Enum):
    IDENTITY = "identity"
    LINEAR = "linear"
    POWER = "power"
    EXPONENTIAL = "exponential"
    COSINE = "cosine"


ALL_FAMILIES = tuple(WarpFamily)


def _check_magnitude(family: WarpFamily, magnitude) -> None:
    if family is WarpFamily.IDENTITY:
        return
    if magnitude is None or not math.isfinite(magnitude):
        raise ContractError(f"{family.value} warp needs a finite magnitude, got {magnitude}")
    if family in (WarpFamily.LINEAR, WarpFamily.POWER) and magnitude <= 0:
        raise ContractError(f"{family.value} warp needs magnitude > 0, got {magnitude}")
    if family is WarpFamily.EXPONENTIAL and magnitude == 0:
        raise ContractError("exponential warp needs a nonzero magnitude")
    if family is WarpFamily.COSINE and abs(magnitude) >= 1:
        raise ContractError(f"cosine warp needs |magnitude| < 1, got {magnitude}")


@dataclass(frozen=True)
class WarpSpec:
    family: WarpFamily
    magnitude: float | None = None

    def __post_init__(self):
        _check_magnitude(self.family, self.magnitude)

    @property
    def duration_scale(self) -> float:
        return float(self.magnitude) if self.family is WarpFamily.LINEAR else 1.0

    def __str__(self) -> str:
        if self.family is WarpFamily.IDENTITY:
            return "identity"
        return f"{self.family.value}({self.magnitude:.6g})"


def warp_unit(family: WarpFamily, magnitude, s):
    """Normalised warp kernel on [0, 1]; fixes both endpoints.

    identity, linear  s
    power             s ** (1 / gamma)
    exponential       expm1(beta * s) / expm1(beta)
    cosine            s - eta / (2 pi) * sin(2 pi s)

    ``gamma > 1`` stretches the start of the interval and compresses the
    end, so events thin out early and crowd late. Accepts scalars or arrays.
    """
    _check_magnitude(family, magnitude)
    arr = np.asarray(s, dtype=np.float64)
    if np.any((arr < 0) | (arr > 1)):
        raise ContractError("warp_unit is defined on [0, 1]")
    if family in (WarpFamily.IDENTITY, WarpFamily.LINEAR):
        out = arr.copy()
    elif family is WarpFamily.POWER:
        out = arr ** (1.0 / magnitude)
    elif family is WarpFamily.EXPONENTIAL:
        out = np.expm1(magnitude * arr) / math.expm1(magnitude)
    else:
        out = arr - magnitude / (2 * math.pi) * np.sin(2 * math.pi * arr)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WarpPlan:
    intervals: tuple[tuple[float, float], ...]
    specs: tuple[WarpSpec, ...]
    rng_seed: int | None = None

    def __post_init__(self):
        intervals = tuple((float(a), float(b)) for a, b in self.intervals)
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "specs", tuple(self.specs))
        if len(intervals) != len(self.specs):
            raise ContractError("warp plan needs one spec per interval")
        for a, b in intervals:
            if not a <= b:
                raise ContractError(f"interval [{a}, {b}] is reversed")
        for (_, b0), (a1, _) in zip(intervals, intervals[1:]):
            if not b0 < a1:
                raise ContractError("warp intervals must be sorted and pairwise disjoint")

    def __len__(self) -> int:
        return len(self.intervals)

    def summary(self) -> str:
        """Deterministic one-line-per-interval text rendering."""
        lines = [f"warp plan: {len(self)} intervals, seed={self.rng_seed}"]
        for j, ((a, b), spec) in enumerate(zip(self.intervals, self.specs)):
            lines.append(f"  [{j}] [{a:.3f}, {b:.3f}] {spec}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "intervals": [
                {"start": a, "end": b, "family": s.family.value, "magnitude": s.magnitude}
                for (a, b), s in zip(self.intervals, self.specs)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WarpPlan":
        items = d["intervals"]
        return cls(
            tuple((it["start"], it["end"]) for it in items),
            tuple(WarpSpec(WarpFamily(it["family"]), it["magnitude"]) for it in items),
            d.get("rng_seed"),
        )


def identity_plan(stream: EventStream, l: int = DEFAULT_INTERVALS) -> WarpPlan:
    """``l`` evenly spaced identity intervals over the stream's span."""
    span = stream.time_span
    if span is None or span[0] == span[1]:
        return WarpPlan((), ())
    edges = np.linspace(span[0], span[1], 2 * l)
    return WarpPlan(
        tuple((edges[2 * j], edges[2 * j + 1]) for j in range(l)),
        tuple(WarpSpec(WarpFamily.IDENTITY) for _ in range(l)),
    )


def _draw_magnitude(rng: np.random.Generator, family: WarpFamily, lo: float, hi: float):
    u = rng.uniform(lo, hi)
    if family is WarpFamily.IDENTITY:
        return None
    if family in (WarpFamily.LINEAR, WarpFamily.POWER):
        return max(u, _MIN_POSITIVE)
    if family is WarpFamily.EXPONENTIAL:
        for _ in range(1000):
            if abs(u) >= _MIN_ABS_BETA:
                return u
            u = rng.uniform(lo, hi)
        raise ContractError(f"magnitude range ({lo}, {hi}) keeps producing beta ~ 0")
    # eta lives in (-1, 1); rescale the draw onto it rather than clamping,
    # which with ranges like (0.5, 2) would pin most draws to the bound
    if hi > lo:
        return _MAX_ABS_ETA * (2 * (u - lo) / (hi - lo) - 1)
    return min(max(u, -_MAX_ABS_ETA), _MAX_ABS_ETA)


def sample_plan(
    stream: EventStream,
    l: int = DEFAULT_INTERVALS,
    magnitude_range: tuple[float, float] = DEFAULT_MAGNITUDE_RANGE,
    rng_seed: int = 0,
    families: Sequence[WarpFamily] = ALL_FAMILIES,
) -> WarpPlan:
    """Draw ``l`` disjoint intervals and a kernel for each.

    ``2 * l`` cut points are drawn uniformly over the span, sorted and
    paired; each interval then gets a uniformly chosen family and a
    magnitude from ``U(a, b)``. Linear and power draws are floored at a
    small positive value, exponential draws near zero are redrawn, and
    cosine draws are rescaled from ``[a, b]`` onto ``(-1, 1)``.
    """
    if l < 1:
        raise ContractError(f"l must be >= 1, got {l}")
    lo, hi = magnitude_range
    if not lo <= hi:
        raise ContractError(f"magnitude range ({lo}, {hi}) is reversed")
    if not families:
        raise ContractError("at least one warp family is required")
    span = stream.time_span
    if span is None or span[0] == span[1]:
        raise DegenerateInputError("warping needs at least two distinct timestamps")

    rng = np.random.default_rng(rng_seed)
    cuts = np.sort(rng.uniform(span[0], span[1], size=2 * l))
    families = tuple(families)
    specs = []
    for _ in range(l):
        family = families[rng.integers(len(families))]
        specs.append(WarpSpec(family, _draw_magnitude(rng, family, lo, hi)))
    intervals = tuple((cuts[2 * j], cuts[2 * j + 1]) for j in range(l))
    return WarpPlan(intervals, tuple(specs), rng_seed)


def warp_times(t: np.ndarray, plan: WarpPlan) -> np.ndarray:
    """Real-valued warped timestamps, before rounding."""
    t = np.asarray(t, dtype=np.float64)
    if not len(plan):
        return t.copy()
    starts = np.array([a for a, _ in plan.intervals])
    ends = np.array([b for _, b in plan.intervals])
    alphas = np.array([s.duration_scale for s in plan.specs])
    growth = np.concatenate([[0.0], np.cumsum((alphas - 1.0) * (ends - starts))])

    # growth[k] is the extra length added by the k intervals ending before t
    out = t + growth[np.searchsorted(ends, t, side="left")]
    for j, ((a, b), spec) in enumerate(zip(plan.intervals, plan.specs)):
        duration = b - a
        if duration <= 0:
            continue
        inside = (t >= a) & (t <= b)
        if not inside.any():
            continue
        s = (t[inside] - a) / duration
        out[inside] = a + growth[j] + spec.duration_scale * duration * warp_unit(spec.family, spec.magnitude, s)
    return out


def apply_warp(stream: EventStream, plan: WarpPlan, rescale: bool = False) -> EventStream:
    """Retime ``stream`` according to ``plan``; x, y and p are untouched.

    With ``rescale`` the result is stretched back to the input's total
    duration. Timestamps are rounded to the nearest microsecond, which is
    monotone, so ordering stays non-decreasing.
    """
    span = stream.time_span
    if span is None:
        return stream
    for a, b in plan.intervals:
        if a < span[0] or b > span[1]:
            raise ContractError(f"interval [{a}, {b}] leaves the stream span {span}")
    warped = warp_times(stream.t, plan)
    if rescale and len(stream) > 1:
        new_span = warped[-1] - warped[0]
        if new_span > 0:
            warped = span[0] + (warped - warped[0]) * ((span[1] - span[0]) / new_span)
    return stream.replace(t=np.rint(warped).astype(np.int64), validate=False)


def density_profile(stream: EventStream, t_bins: int) -> np.ndarray:
    """Event count per time bin over the stream's own span."""
    if t_bins < 1:
        raise ContractError(f"t_bins must be positive, got {t_bins}")
    span = stream.time_span
    if span is None:
        return np.zeros(t_bins, dtype=np.int64)
    return np.bincount(_quantize(stream.t, span[0], span[1], t_bins), minlength=t_bins)
