"""Seeded synthetic event streams for benchmarks, demos and tests."""

from __future__ import annotations

import numpy as np

from .events import EventStream

DAVIS346 = (346, 260)


def synthetic_stream(
    n_events: int,
    width: int = DAVIS346[0],
    height: int = DAVIS346[1],
    mean_gap_us: float = 1.0,
    seed: int = 0,
) -> EventStream:
    """Uniform pixel positions, exponential inter-arrival times, random polarity."""
    rng = np.random.default_rng(seed)
    x = rng.integers(0, width, n_events)
    y = rng.integers(0, height, n_events)
    t = np.floor(np.cumsum(rng.exponential(mean_gap_us, n_events))).astype(np.int64)
    p = np.where(rng.random(n_events) < 0.5, -1, 1).astype(np.int8)
    return EventStream(x, y, t, p, width, height, validate=False)


def moving_bar(
    width: int = 64,
    height: int = 48,
    duration_us: int = 100_000,
    n_events: int = 5_000,
    bar_x: int = 20,
    bar_width: int = 6,
    seed: int = 0,
) -> EventStream:
    """A vertical bar sweeping down the sensor, events confined to a column band.

    Handy for shift tests: every event has ``bar_x <= x < bar_x + bar_width``.
    """
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, duration_us, n_events))
    y = np.minimum((t * height) // duration_us + rng.integers(-1, 2, n_events), height - 1).clip(0)
    x = bar_x + rng.integers(0, bar_width, n_events)
    p = np.where(rng.random(n_events) < 0.6, 1, -1).astype(np.int8)
    return EventStream(x, y, t, p, width, height)
