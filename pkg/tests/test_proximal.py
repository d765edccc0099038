import math

import numpy as np
import pytest

from huberdecay.proximal import prox_apply, prox_huber
from huberdecay.regularizer import UNBOUNDED
from huberdecay.rng import SplitMix64


def _random_triple(rng):
    y = 20.0 * rng.uniform() - 10.0
    tau = 2.0 * (1.0 - rng.uniform())
    delta = 5.0 * (1.0 - rng.uniform())
    return y, tau, delta


@pytest.mark.parametrize(
    "y, tau, delta, expected",
    [
        (0.5, 0.1, 1.0, 0.5 / 1.1),  # interior branch
        (2.0, 0.1, 1.0, 1.9),  # shift branch
        (-2.0, 0.1, 1.0, -1.9),
        (0.0, 0.7, 0.3, 0.0),
        (1.1, 0.1, 1.0, 1.0),  # boundary |y| = (1+tau)*delta, both formulas agree
    ],
)
def test_prox_huber_values(y, tau, delta, expected):
    assert prox_huber(y, tau, delta) == pytest.approx(expected, rel=1e-15, abs=1e-15)


def test_prox_boundary_continuity():
    tau, delta = 0.1, 1.0
    b = (1.0 + tau) * delta
    assert prox_huber(b, tau, delta) == pytest.approx(b / (1.0 + tau), rel=1e-15)
    assert b / (1.0 + tau) == pytest.approx(b - tau * delta, rel=1e-12)


def test_prox_tau_zero_is_identity():
    assert prox_huber(0.7, 0.0, 1e-300) == 0.7  # no branching on delta
    x = np.array([0.3, -2.0, 0.0])
    out = prox_apply(x, 0.0, 123.0)
    assert np.array_equal(out, x)
    assert out is not x


def test_prox_nonexpansive_and_capped():
    rng = SplitMix64(99)
    for _ in range(10_000):
        y1, tau, delta = _random_triple(rng)
        y2 = 20.0 * rng.uniform() - 10.0
        p1 = prox_huber(y1, tau, delta)
        p2 = prox_huber(y2, tau, delta)
        assert abs(p1 - p2) <= abs(y1 - y2) + 1e-12
        cap = min(tau / (1.0 + tau) * abs(y1), tau * delta)
        assert abs(p1 - y1) <= cap + 1e-12


def test_prox_preserves_sign_and_shrinks():
    rng = SplitMix64(4)
    for _ in range(5000):
        y, tau, delta = _random_triple(rng)
        p = prox_huber(y, tau, delta)
        assert p == 0.0 or math.copysign(1.0, p) == math.copysign(1.0, y)
        assert abs(p) <= abs(y)


def test_prox_shift_branch_never_hits_zero():
    rng = SplitMix64(42)
    for _ in range(5000):
        _, tau, delta = _random_triple(rng)
        mag = (1.0 + tau) * delta * (1.0 + rng.uniform())  # beyond the boundary
        y = mag if rng.uniform() < 0.5 else -mag
        if abs(y) <= (1.0 + tau) * delta:
            continue
        assert prox_huber(y, tau, delta) != 0.0


def test_prox_small_delta_tends_to_identity():
    rng = SplitMix64(17)
    delta = 1e-12
    for _ in range(2000):
        y = 20.0 * rng.uniform() - 10.0
        if abs(y) < 1e-6:
            continue
        tau = 2.0 * (1.0 - rng.uniform())
        # half-ulp slack: y - tau*delta rounds to the nearest double
        assert abs(prox_huber(y, tau, delta) - y) <= tau * 1e-12 + 1e-15


def test_prox_apply_matches_scalar():
    x = np.array([0.0, 0.5, 2.0, -2.0, 1.1])
    out = prox_apply(x, 0.1, 1.0)
    expected = np.array([prox_huber(v, 0.1, 1.0) for v in x])
    assert np.array_equal(out, expected)
    assert out.shape == x.shape


def test_prox_apply_fixes_origin():
    assert np.array_equal(prox_apply(np.zeros(5), 0.3, 0.7), np.zeros(5))


def test_prox_apply_unbounded_is_l2_shrink():
    x = SplitMix64(3).normals(64)
    tau = 0.25
    assert np.array_equal(prox_apply(x, tau, UNBOUNDED), x / (1.0 + tau))


def test_prox_apply_per_element_delta_and_shapes():
    x = np.array([[0.5, 2.0], [-2.0, 0.1]])
    delta = np.array([1.0, 0.5])
    out = prox_apply(x, 0.1, delta)
    assert out.shape == x.shape
    assert out[0, 0] == prox_huber(0.5, 0.1, 1.0)
    assert out[0, 1] == prox_huber(2.0, 0.1, 0.5)
    with pytest.raises(ValueError):
        prox_apply(np.ones(4), 0.1, np.ones(3))


def test_prox_rejects_bad_inputs():
    with pytest.raises(ValueError):
        prox_huber(math.nan, 0.1, 1.0)
    with pytest.raises(ValueError):
        prox_huber(1.0, -0.1, 1.0)
    with pytest.raises(ValueError):
        prox_huber(1.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        prox_apply(np.array([1.0, math.inf]), 0.1, 1.0)
