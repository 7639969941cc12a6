import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventviews import (
    ContractError,
    DegenerateInputError,
    EncoderConfig,
    EventStream,
    ViewAxis,
    WarpFamily,
    WarpPlan,
    WarpSpec,
    apply_warp,
    density_profile,
    encode_view,
    sample_plan,
    warp_unit,
)
from eventviews.dtw import ALL_FAMILIES, identity_plan, warp_times
from helpers import random_stream
from oracle import oracle_warp_time

F = WarpFamily


def uniform_stream(n=10_000, width=4, height=3):
    return EventStream(np.arange(n) % width, np.arange(n) % height, np.arange(n), np.ones(n), width, height)


# -- kernels ----------------------------------------------------------------

def test_warp_unit_reductions():
    assert warp_unit(F.POWER, 1.0, 0.5) == 0.5
    assert warp_unit(F.COSINE, 0.0, 0.3) == 0.3
    assert warp_unit(F.IDENTITY, None, 0.7) == 0.7
    assert warp_unit(F.LINEAR, 2.0, 0.7) == 0.7


def test_warp_unit_exponential_value():
    expected = (math.exp(0.5) - 1) / (math.e - 1)
    assert warp_unit(F.EXPONENTIAL, 1.0, 0.5) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.37754, abs=1e-5)


def test_warp_unit_power_direction():
    # gamma > 1 delays progress: phi(s) > s, so the start is stretched
    assert warp_unit(F.POWER, 2.0, 0.25) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "family, mag",
    [(F.POWER, 0.0), (F.POWER, -1.0), (F.LINEAR, 0.0), (F.EXPONENTIAL, 0.0),
     (F.COSINE, 1.0), (F.COSINE, -1.5), (F.POWER, float("nan")), (F.POWER, None)],
)
def test_warp_unit_rejects_bad_magnitude(family, mag):
    with pytest.raises(ContractError):
        warp_unit(family, mag, 0.5)
    with pytest.raises(ContractError):
        WarpSpec(family, mag)


def test_warp_unit_domain():
    with pytest.raises(ContractError):
        warp_unit(F.POWER, 2.0, 1.5)


family_mag = st.one_of(
    st.tuples(st.just(F.IDENTITY), st.none()),
    st.tuples(st.just(F.LINEAR), st.floats(0.05, 5)),
    st.tuples(st.just(F.POWER), st.floats(0.05, 5)),
    st.tuples(st.just(F.EXPONENTIAL), st.floats(-5, 5).filter(lambda b: abs(b) > 1e-6)),
    st.tuples(st.just(F.COSINE), st.floats(-0.99, 0.99)),
)


@settings(max_examples=300, deadline=None)
@given(family_mag)
def test_warp_unit_endpoints_and_monotone(fm):
    family, mag = fm
    assert warp_unit(family, mag, 0.0) == 0.0
    assert warp_unit(family, mag, 1.0) == pytest.approx(1.0, abs=1e-15)
    s = np.linspace(0, 1, 2001)
    phi = warp_unit(family, mag, s)
    assert np.all(np.diff(phi) > 0)


# -- plans ------------------------------------------------------------------

def test_plan_validation():
    spec = WarpSpec(F.IDENTITY)
    with pytest.raises(ContractError):
        WarpPlan(((0, 10), (5, 20)), (spec, spec))
    with pytest.raises(ContractError):
        WarpPlan(((10, 0),), (spec,))
    with pytest.raises(ContractError):
        WarpPlan(((0, 10),), (spec, spec))


def test_sample_plan_deterministic():
    s = random_stream(np.random.default_rng(1), n=500)
    assert sample_plan(s, 4, rng_seed=99) == sample_plan(s, 4, rng_seed=99)
    assert sample_plan(s, 4, rng_seed=99) != sample_plan(s, 4, rng_seed=100)


def test_sample_plan_l4():
    s = uniform_stream(1000)
    plan = sample_plan(s, 4, rng_seed=0)
    assert len(plan) == 4 and len(plan.specs) == 4


def test_sample_plan_intervals_disjoint_over_seeds():
    s = uniform_stream(1000)
    t0, t1 = s.time_span
    for seed in range(1000):
        plan = sample_plan(s, 4, rng_seed=seed)
        bounds = np.array(plan.intervals).ravel()
        assert np.all(np.diff(bounds) >= 0)
        assert all(a < b for a, b in plan.intervals)
        assert all(b0 < a1 for (_, b0), (a1, _) in zip(plan.intervals, plan.intervals[1:]))
        assert bounds[0] >= t0 and bounds[-1] <= t1


def test_sample_plan_magnitudes_valid_and_families_uniform():
    s = uniform_stream(1000)
    seen = Counter()
    for seed in range(400):
        for spec in sample_plan(s, 4, magnitude_range=(-3.0, 3.0), rng_seed=seed).specs:
            seen[spec.family] += 1
            if spec.family is F.COSINE:
                assert abs(spec.magnitude) < 1
            if spec.family in (F.POWER, F.LINEAR):
                assert spec.magnitude > 0
    assert set(seen) == set(ALL_FAMILIES)
    # 1600 draws over 5 families: each expected 320, sd ~16
    assert all(250 < c < 390 for c in seen.values())


def test_sample_plan_family_subset():
    s = uniform_stream(100)
    plan = sample_plan(s, 3, rng_seed=5, families=[F.LINEAR])
    assert all(spec.family is F.LINEAR for spec in plan.specs)


@pytest.mark.parametrize("stream", [
    EventStream.empty(2, 2),
    EventStream([0], [0], [5], [1], 2, 2),
    EventStream([0, 1, 1], [0, 0, 1], [5, 5, 5], [1, 1, -1], 2, 2),
])
def test_sample_plan_degenerate(stream):
    with pytest.raises(DegenerateInputError):
        sample_plan(stream, 4, rng_seed=0)


def test_plan_dict_roundtrip():
    plan = sample_plan(uniform_stream(500), 4, rng_seed=7)
    assert WarpPlan.from_dict(plan.to_dict()) == plan


# -- applying warps ---------------------------------------------------------

def test_identity_plan_fixed_point():
    s = random_stream(np.random.default_rng(2), n=800)
    assert apply_warp(s, identity_plan(s)) == s


def test_linear_interval_example():
    s = EventStream([0] * 4, [0] * 4, [0, 50, 100, 150], [1] * 4, 1, 1)
    plan = WarpPlan(((0, 100),), (WarpSpec(F.LINEAR, 2.0),))
    assert apply_warp(s, plan).t.tolist() == [0, 100, 200, 250]


def test_linear_compression_shifts_trailing_events_back():
    s = EventStream([0] * 4, [0] * 4, [0, 50, 100, 150], [1] * 4, 1, 1)
    plan = WarpPlan(((0, 100),), (WarpSpec(F.LINEAR, 0.5),))
    assert apply_warp(s, plan).t.tolist() == [0, 25, 50, 100]


def test_cosine_interval_keeps_endpoints_and_order():
    t = np.arange(0, 1001, 5)
    s = EventStream(np.zeros_like(t), np.zeros_like(t), t, np.ones_like(t), 1, 1)
    plan = WarpPlan(((200, 800),), (WarpSpec(F.COSINE, 0.5),))
    real = warp_times(s.t, plan)
    assert np.all(np.diff(real) > 0)
    out = apply_warp(s, plan).t
    assert out[t == 200][0] == 200 and out[t == 800][0] == 800
    assert np.array_equal(out[t < 200], t[t < 200])
    assert np.array_equal(out[t > 800], t[t > 800])


def test_rescale_restores_duration():
    s = uniform_stream(1000)
    plan = WarpPlan(((100, 300),), (WarpSpec(F.LINEAR, 3.0),))
    assert apply_warp(s, plan).t[-1] == 999 + 400
    out = apply_warp(s, plan, rescale=True)
    assert out.t[0] == 0 and out.t[-1] == 999
    assert np.all(np.diff(out.t) >= 0)


def test_apply_warp_rejects_interval_outside_span():
    s = uniform_stream(100)
    with pytest.raises(ContractError):
        apply_warp(s, WarpPlan(((50, 500),), (WarpSpec(F.IDENTITY),)))


def test_warp_times_match_oracle():
    rng = np.random.default_rng(11)
    for seed in range(50):
        s = random_stream(rng, n=300, t_max=10_000)
        if len(np.unique(s.t)) < 2:
            continue
        plan = sample_plan(s, 4, magnitude_range=(-2.0, 3.0), rng_seed=seed)
        fast = warp_times(s.t, plan)
        slow = np.array([oracle_warp_time(float(t), plan) for t in s.t])
        np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 8), st.integers(2, 400))
def test_warp_properties(seed, l, n):
    rng = np.random.default_rng(seed)
    s = random_stream(rng, n=n, t_max=50_000)
    if len(np.unique(s.t)) < 2:
        return
    plan = sample_plan(s, l, rng_seed=seed)
    out = apply_warp(s, plan)
    assert len(out) == len(s)
    assert np.all(np.diff(out.t) >= 0)
    assert out.t.min() >= 0
    assert np.array_equal(out.x, s.x) and np.array_equal(out.y, s.y) and np.array_equal(out.p, s.p)
    real = warp_times(s.t, plan)
    strict = np.diff(s.t) > 0
    assert np.all(np.diff(real)[strict] > 0)
    assert apply_warp(s, plan) == out


def test_warp_once_encode_twice_is_view_consistent():
    rng = np.random.default_rng(4)
    s = random_stream(rng, n=600, width=8, height=6, t_max=5000)
    warped = apply_warp(s, sample_plan(s, 4, rng_seed=3))
    th = encode_view(warped, EncoderConfig.compact(ViewAxis.TH, 16)).data
    tw = encode_view(warped, EncoderConfig.compact(ViewAxis.TW, 16)).data
    # both views see the same retimed events: per-time-bin totals agree
    assert np.array_equal(th.sum(axis=2), tw.sum(axis=2))


# -- density profile --------------------------------------------------------

def test_density_profile_empty():
    assert density_profile(EventStream.empty(2, 2), 8).tolist() == [0] * 8


def test_density_profile_sum():
    s = random_stream(np.random.default_rng(0), n=777)
    assert density_profile(s, 13).sum() == 777


def test_density_profile_identity():
    s = uniform_stream(2000)
    assert np.array_equal(density_profile(apply_warp(s, identity_plan(s)), 10), density_profile(s, 10))


def test_power_warp_skews_density_late():
    s = uniform_stream(10_000)
    plan = WarpPlan((s.time_span,), (WarpSpec(F.POWER, 2.0),))
    prof = density_profile(apply_warp(s, plan), 10)
    assert prof[:5].sum() < prof[5:].sum()
    assert np.all(np.diff(prof) >= 0)


def test_cosine_magnitudes_spread_over_valid_range():
    s = uniform_stream(100)
    etas = [
        spec.magnitude
        for seed in range(200)
        for spec in sample_plan(s, 4, rng_seed=seed, families=[F.COSINE]).specs
    ]
    assert max(np.abs(etas)) < 1
    assert min(etas) < -0.8 and max(etas) > 0.8
    assert abs(np.mean(etas)) < 0.1
