import math

import numpy as np
import pytest

from huberdecay.regularizer import UNBOUNDED
from huberdecay.rng import SplitMix64
from huberdecay.threshold import (
    ThresholdSpec,
    ThresholdState,
    mean_magnitude,
    update_threshold,
)


def test_mean_magnitude_examples():
    assert mean_magnitude([1.0, -2.0, 3.0]) == 2.0
    assert mean_magnitude([0.0, 0.0]) == 0.0


def test_mean_magnitude_absolute_homogeneity():
    theta = SplitMix64(1).normals(40)
    base = mean_magnitude(theta)
    assert mean_magnitude(2.0 * theta) == 2.0 * base  # power-of-two scale is exact
    assert mean_magnitude(-0.5 * theta) == 0.5 * base
    assert mean_magnitude(3.7 * theta) == pytest.approx(3.7 * base, rel=1e-12)


def test_mean_magnitude_empty_tensor():
    with pytest.raises(ValueError):
        mean_magnitude(np.array([]))


def test_fixed_mode():
    spec = ThresholdSpec(mode="fixed", delta_fixed=0.25)
    state = ThresholdState()
    delta, new_state = update_threshold(spec, state, [1.0, 2.0])
    assert delta == 0.25
    assert new_state is state


def test_fixed_mode_unbounded_and_inf_alias():
    spec = ThresholdSpec(mode="fixed", delta_fixed=UNBOUNDED)
    delta, _ = update_threshold(spec, ThresholdState(), [1.0])
    assert delta is UNBOUNDED
    spec_inf = ThresholdSpec(mode="fixed", delta_fixed=math.inf)
    assert spec_inf.delta_fixed is UNBOUNDED


def test_mean_magnitude_mode():
    spec = ThresholdSpec(mode="mean_magnitude", c=1.0)
    delta, state = update_threshold(spec, ThresholdState(), [1.0, -2.0, 3.0])
    assert delta == 2.0
    assert state.initialized is False  # untouched outside ema mode


def test_ema_one_step_recursion():
    # mu = 0.99 * 1 + 0.01 * 0 = 0.99 on an all-zero tensor
    spec = ThresholdSpec(mode="ema", c=1.0, beta0=0.99)
    state = ThresholdState(mu=1.0, initialized=True)
    delta, new_state = update_threshold(spec, state, np.zeros(8))
    assert delta == 0.99
    assert new_state.mu == 0.99


def test_ema_beta0_zero_equals_mean_magnitude():
    spec_ema = ThresholdSpec(mode="ema", c=0.7, beta0=0.0)
    spec_mm = ThresholdSpec(mode="mean_magnitude", c=0.7)
    state = ThresholdState(mu=123.0, initialized=True)
    rng = SplitMix64(2)
    for _ in range(20):
        theta = rng.normals(12)
        d_ema, state = update_threshold(spec_ema, state, theta)
        d_mm, _ = update_threshold(spec_mm, ThresholdState(), theta)
        assert d_ema == d_mm


def test_ema_initializes_to_first_observation():
    spec = ThresholdSpec(mode="ema", c=1.0, beta0=0.99)
    theta = np.array([1.0, -3.0])
    delta, state = update_threshold(spec, ThresholdState(), theta)
    assert state.initialized
    assert state.mu == 2.0
    assert delta == 2.0


def test_ema_boundedness():
    # if all observations lie in [lo, hi] and mu0 does too, mu stays inside
    spec = ThresholdSpec(mode="ema", c=1.0, beta0=0.95)
    rng = SplitMix64(3)
    lo, hi = 0.5, 2.0
    state = ThresholdState(mu=1.2, initialized=True)
    for _ in range(300):
        mm_target = lo + (hi - lo) * rng.uniform()
        theta = np.full(6, mm_target)
        _, state = update_threshold(spec, state, theta)
        assert lo <= state.mu <= hi


def test_floor_applies_everywhere():
    spec = ThresholdSpec(mode="mean_magnitude", c=1.0, delta_floor=1e-8)
    delta, _ = update_threshold(spec, ThresholdState(), np.zeros(4))
    assert delta == 1e-8
    spec_ema = ThresholdSpec(mode="ema", c=1.0, beta0=0.5, delta_floor=1e-8)
    delta, state = update_threshold(spec_ema, ThresholdState(), np.zeros(4))
    assert delta == 1e-8 and state.mu == 0.0
    spec_fixed = ThresholdSpec(mode="fixed", delta_fixed=1e-12, delta_floor=1e-8)
    delta, _ = update_threshold(spec_fixed, ThresholdState(), np.zeros(4))
    assert delta == 1e-8


def test_scale_covariance_of_mean_magnitude_mode():
    spec = ThresholdSpec(mode="mean_magnitude", c=1.0, delta_floor=1e-12)
    theta = SplitMix64(9).normals(30)
    d1, _ = update_threshold(spec, ThresholdState(), theta)
    d2, _ = update_threshold(spec, ThresholdState(), 2.0 * theta)
    assert d2 == 2.0 * d1
    d3, _ = update_threshold(spec, ThresholdState(), -3.7 * theta)
    assert d3 == pytest.approx(3.7 * d1, rel=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mode": "nope"},
        {"c": 0.0},
        {"c": -1.0},
        {"beta0": 1.0},
        {"beta0": -0.1},
        {"delta_floor": 0.0},
        {"mode": "fixed"},  # missing delta_fixed
        {"mode": "fixed", "delta_fixed": -2.0},
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ThresholdSpec(**kwargs)
