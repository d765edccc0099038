import math

import numpy as np
import pytest

from huberdecay.regularizer import UNBOUNDED, huber, huber_grad, regularizer_value
from huberdecay.rng import SplitMix64


@pytest.mark.parametrize(
    "a, delta, expected",
    [
        (0.0, 1.0, 0.0),
        (0.5, 1.0, 0.125),
        (2.0, 1.0, 1.5),
        (-2.0, 1.0, 1.5),
        (1.0, 1.0, 0.5),  # breakpoint: both branch formulas agree
        (-3.0, 0.5, 0.5 * (3.0 - 0.25)),
    ],
)
def test_huber_values(a, delta, expected):
    assert huber(a, delta) == pytest.approx(expected, rel=1e-15)


def test_huber_breakpoint_continuity():
    # both branch formulas at |a| = delta
    for delta in (0.1, 1.0, 3.7):
        quad = 0.5 * delta * delta
        lin = delta * (delta - 0.5 * delta)
        assert huber(delta, delta) == pytest.approx(quad, rel=1e-15)
        assert quad == pytest.approx(lin, rel=1e-12)


@pytest.mark.parametrize("delta", [0.25, 1.0, 2.5])
def test_huber_continuity_at_kink(delta):
    # the two branch formulas disagree by h^2/2 just across the kink
    h = 1e-9
    quadratic = 0.5 * (delta + h) ** 2
    linear = delta * ((delta - h) - 0.5 * delta)
    assert abs(huber(delta + h, delta) - quadratic) <= 1e-12 * delta * delta
    assert abs(huber(delta - h, delta) - linear) <= 1e-12 * delta * delta


@pytest.mark.parametrize(
    "a, delta, expected",
    [
        (0.5, 1.0, 0.5),
        (-3.0, 1.0, -1.0),
        (3.0, 1.0, 1.0),
        (0.0, 2.0, 0.0),
        (1.0, 1.0, 1.0),
    ],
)
def test_huber_grad_is_clip(a, delta, expected):
    assert huber_grad(a, delta) == expected


def test_huber_grad_bounded():
    rng = SplitMix64(11)
    for _ in range(2000):
        a = 20.0 * rng.uniform() - 10.0
        delta = 5.0 * (1.0 - rng.uniform())
        assert abs(huber_grad(a, delta)) <= delta


def test_huber_grad_matches_finite_difference():
    # central differences of the scalar penalty, away from the kinks
    rng = SplitMix64(7)
    delta = 1.0
    h = 1e-6
    checked = 0
    while checked < 10_000:
        a = 6.0 * rng.uniform() - 3.0
        if abs(abs(a) - delta) < 1e-4:
            continue
        fd = (huber(a + h, delta) - huber(a - h, delta)) / (2.0 * h)
        assert abs(fd - huber_grad(a, delta)) <= 1e-6
        checked += 1


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_huber_rejects_non_finite_input(bad):
    with pytest.raises(ValueError):
        huber(bad, 1.0)
    with pytest.raises(ValueError):
        huber_grad(bad, 1.0)


@pytest.mark.parametrize("bad_delta", [0.0, -1.0, math.nan, math.inf])
def test_huber_rejects_bad_delta(bad_delta):
    with pytest.raises(ValueError):
        huber(1.0, bad_delta)
    with pytest.raises(ValueError):
        huber_grad(1.0, bad_delta)


def test_unbounded_mode_is_pure_quadratic():
    assert huber(3.0, UNBOUNDED) == 4.5
    assert huber_grad(3.0, UNBOUNDED) == 3.0
    assert huber_grad(-7.25, UNBOUNDED) == -7.25


def test_regularizer_value_examples():
    assert regularizer_value([0.0, 0.0, 0.0], 1.0) == 0.0
    assert regularizer_value([0.5, 2.0], 1.0) == pytest.approx(1.625, rel=1e-15)


def test_regularizer_value_zero_iff_zero_vector():
    assert regularizer_value(np.zeros(16), 0.5) == 0.0
    theta = np.zeros(16)
    theta[3] = 1e-12
    assert regularizer_value(theta, 0.5) > 0.0


def test_regularizer_value_l2_limit_exact():
    rng = SplitMix64(5)
    theta = rng.normals(33)
    big = float(np.max(np.abs(theta)))  # delta >= max|theta| is all-quadratic
    for delta in (big, 2 * big, UNBOUNDED):
        assert regularizer_value(theta, delta) == 0.5 * float(np.sum(np.square(theta)))


def test_regularizer_value_per_element_delta():
    theta = np.array([0.5, 2.0])
    deltas = np.array([1.0, 0.5])
    expected = huber(0.5, 1.0) + huber(2.0, 0.5)
    assert regularizer_value(theta, deltas) == pytest.approx(expected, rel=1e-15)


def test_regularizer_value_shape_mismatch():
    with pytest.raises(ValueError):
        regularizer_value(np.ones(4), np.ones(3))
