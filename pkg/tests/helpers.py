"""Shared random-stream generators for the test suite."""

import itertools

import numpy as np
from hypothesis import strategies as st

from eventviews import (
    GLOBAL,
    AggregationFn,
    ConversionSpec,
    EventStream,
    MeasurementFn,
    WindowFn,
)


def random_stream(rng, n_max=1000, width=None, height=None, t_max=None, n=None):
    """Random valid stream; small sensors by default so oracles stay cheap."""
    width = width or int(rng.integers(3, 9))
    height = height or int(rng.integers(3, 9))
    n = int(rng.integers(0, n_max + 1)) if n is None else n
    t_max = t_max or int(rng.integers(1, 2000))
    t = np.sort(rng.integers(0, t_max, n))
    x = rng.integers(0, width, n)
    y = rng.integers(0, height, n)
    p = np.where(rng.random(n) < 0.5, -1, 1)
    return EventStream(x, y, t, p, width, height)


def all_specs(windows=(GLOBAL, WindowFn(2), WindowFn(3))):
    return [
        ConversionSpec(w, m, a)
        for w, m, a in itertools.product(windows, MeasurementFn, AggregationFn)
    ]


@st.composite
def streams(draw, max_events=60, max_side=12, max_t=500, min_events=0):
    width = draw(st.integers(1, max_side))
    height = draw(st.integers(1, max_side))
    n = draw(st.integers(min_events, max_events))
    t = sorted(draw(st.lists(st.integers(0, max_t), min_size=n, max_size=n)))
    x = draw(st.lists(st.integers(0, width - 1), min_size=n, max_size=n))
    y = draw(st.lists(st.integers(0, height - 1), min_size=n, max_size=n))
    p = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return EventStream(x, y, t, p, width, height)

