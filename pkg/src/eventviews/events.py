"""Sparse event data model, view geometry and spatial shifts.

An :class:`EventStream` stores its events column-wise in read-only numpy
arrays so encoders can work on a million events without Python loops.
Single :class:`Event` records are materialised only on iteration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractError, EventInvariantError

__all__ = [
    "Event",
    "EventStream",
    "ViewAxis",
    "shift_along_axis",
    "in_bounds_after_shift",
]


class ViewAxis(enum.Enum):
    """A 2-D projection of the H-W-T event volume.

    The value is the name of the coordinate the view marginalises.
    """

    TH = "x"
    TW = "y"
    HW = "t"

    @property
    def orthogonal(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "ViewAxis":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ContractError(f"unknown view {name!r}; expected th, tw or hw") from None


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: int


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    if out.ndim != 1:
        raise ContractError("event columns must be one-dimensional")
    out.flags.writeable = False
    return out


class EventStream:
    """Time-ordered events from a ``width`` x ``height`` sensor.

    Columns ``x``, ``y``, ``t`` are int64 and ``p`` is int8 in {-1, +1}.
    Construction validates every invariant unless ``validate=False`` is
    passed by code that has already guaranteed them.
    """

    __slots__ = ("x", "y", "t", "p", "width", "height")

    def __init__(self, x, y, t, p, width: int, height: int, *, validate: bool = True):
        width, height = int(width), int(height)
        if width <= 0 or height <= 0:
            raise EventInvariantError(f"sensor size must be positive, got {width}x{height}")
        object.__setattr__(self, "x", _frozen(x, np.int64))
        object.__setattr__(self, "y", _frozen(y, np.int64))
        object.__setattr__(self, "t", _frozen(t, np.int64))
        object.__setattr__(self, "p", _frozen(p, np.int8))
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ContractError("event columns differ in length")
        if validate:
            self._validate()

    def __setattr__(self, name, value):
        raise AttributeError("EventStream is immutable")

    def _validate(self) -> None:
        if len(self) == 0:
            return
        bad = np.flatnonzero((self.x < 0) | (self.x >= self.width))
        if bad.size:
            raise EventInvariantError(f"event {bad[0]}: x={self.x[bad[0]]} outside [0, {self.width})")
        bad = np.flatnonzero((self.y < 0) | (self.y >= self.height))
        if bad.size:
            raise EventInvariantError(f"event {bad[0]}: y={self.y[bad[0]]} outside [0, {self.height})")
        bad = np.flatnonzero((self.p != 1) & (self.p != -1))
        if bad.size:
            raise EventInvariantError(f"event {bad[0]}: polarity {self.p[bad[0]]} not in {{-1, +1}}")
        if self.t[0] < 0:
            raise EventInvariantError("timestamps must be non-negative")
        bad = np.flatnonzero(np.diff(self.t) < 0)
        if bad.size:
            k = bad[0] + 1
            raise EventInvariantError(f"event {k}: timestamp {self.t[k]} precedes {self.t[k - 1]}")

    @classmethod
    def from_events(cls, events: Iterable[Event], width: int, height: int) -> "EventStream":
        events = list(events)
        return cls(
            [e.x for e in events],
            [e.y for e in events],
            [e.t for e in events],
            [e.p for e in events],
            width,
            height,
        )

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        return cls([], [], [], [], width, height)

    def replace(self, *, validate: bool = True, **columns) -> "EventStream":
        """Copy with some columns swapped out."""
        fields = {name: getattr(self, name) for name in ("x", "y", "t", "p", "width", "height")}
        fields.update(columns)
        return EventStream(**fields, validate=validate)

    def take(self, index) -> "EventStream":
        """Subset by boolean mask or index array; order is preserved."""
        return EventStream(
            self.x[index], self.y[index], self.t[index], self.p[index],
            self.width, self.height, validate=False,
        )

    def coord(self, axis: str) -> np.ndarray:
        return getattr(self, axis)

    def bound(self, axis: str) -> int:
        if axis == "x":
            return self.width
        if axis == "y":
            return self.height
        raise ContractError(f"axis {axis!r} has no spatial bound")

    @property
    def events(self) -> list[Event]:
        return list(self)

    @property
    def time_span(self) -> tuple[int, int] | None:
        if len(self) == 0:
            return None
        return int(self.t[0]), int(self.t[-1])

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def __getitem__(self, k: int) -> Event:
        return Event(int(self.x[k]), int(self.y[k]), int(self.t[k]), int(self.p[k]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"EventStream(n={len(self)}, sensor={self.width}x{self.height})"


def _check_spatial(view: ViewAxis) -> str:
    if view is ViewAxis.HW:
        raise ContractError("spatial shifts are defined for TH and TW views only")
    return view.orthogonal


def shift_along_axis(stream: EventStream, view: ViewAxis, delta: int) -> EventStream:
    """Translate every event along the view's orthogonal axis.

    Events that leave ``[0, bound)`` are dropped, not clamped.
    """
    axis = _check_spatial(view)
    delta = int(delta)
    if delta == 0:
        return stream
    moved = stream.coord(axis) + delta
    keep = (moved >= 0) & (moved < stream.bound(axis))
    return EventStream(
        **{
            "x": stream.x, "y": stream.y, axis: moved,
            "t": stream.t, "p": stream.p,
        },
        width=stream.width, height=stream.height, validate=False,
    ).take(keep)


def in_bounds_after_shift(stream: EventStream, view: ViewAxis, delta: int) -> bool:
    """True iff ``shift_along_axis`` with the same arguments drops nothing."""
    axis = _check_spatial(view)
    if len(stream) == 0:
        return True
    z = stream.coord(axis)
    return bool(z.min() + delta >= 0 and z.max() + delta < stream.bound(axis))
