"""Huber penalty on weights: quadratic inside a threshold, linear beyond it.

For a scalar ``a`` and threshold ``delta > 0``::

    H(a) = 0.5 * a**2               if |a| <= delta
         = delta * (|a| - delta/2)  otherwise

Both branches agree at |a| = delta, so H is continuous and continuously
differentiable; its derivative is the clip operator ``clip(a, -delta, +delta)``.
All arithmetic here is float64.
"""

import math

import numpy as np


class Unbounded:
    """Sentinel for an infinite threshold (penalty is pure quadratic everywhere).

    Kept out of the arithmetic so clipping stays exact: callers branch on
    ``delta is UNBOUNDED`` instead of multiplying with an actual infinity.
    """

    __slots__ = ()

    def __repr__(self) -> str:
        return "UNBOUNDED"


UNBOUNDED = Unbounded()


def _check_scalar(a: float) -> float:
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"expected a finite value, got {a!r}")
    return a


def check_delta(delta):
    """Validate a threshold: positive finite float, or the UNBOUNDED sentinel."""
    if delta is UNBOUNDED:
        return delta
    delta = float(delta)
    if not math.isfinite(delta) or delta <= 0.0:
        raise ValueError(
            f"threshold must be positive and finite (or UNBOUNDED), got {delta!r}"
        )
    return delta


def huber(a: float, delta) -> float:
    """Penalty value at ``a`` for threshold ``delta``.

    Returns 0.5*a**2 on |a| <= delta and delta*(|a| - delta/2) beyond. The
    boundary |a| = delta is assigned to the quadratic branch; both formulas
    agree there.
    """
    a = _check_scalar(a)
    delta = check_delta(delta)
    aa = abs(a)
    if delta is UNBOUNDED or aa <= delta:
        return 0.5 * a * a
    return delta * (aa - 0.5 * delta)


def huber_grad(a: float, delta) -> float:
    """Derivative of :func:`huber` at ``a``: ``clip(a, -delta, +delta)``.

    Bounded by delta in absolute value, which is what caps the decay force
    on over-grown weights.
    """
    a = _check_scalar(a)
    delta = check_delta(delta)
    if delta is UNBOUNDED:
        return a
    if a > delta:
        return delta
    if a < -delta:
        return -delta
    return a


def regularizer_value(theta, delta) -> float:
    """Sum of elementwise Huber penalties over a parameter array.

    ``delta`` may be a scalar, an array broadcastable to ``theta``'s shape, or
    UNBOUNDED (pure 0.5*||theta||**2). Zero iff ``theta`` is the zero array.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta contains non-finite values")
    if delta is UNBOUNDED:
        return float(np.sum(0.5 * np.square(theta)))
    delta_arr = np.asarray(delta, dtype=np.float64)
    if not np.all(np.isfinite(delta_arr)) or np.any(delta_arr <= 0.0):
        raise ValueError("delta must be positive and finite")
    try:
        delta_b = np.broadcast_to(delta_arr, theta.shape)
    except ValueError as exc:
        raise ValueError(
            f"delta shape {delta_arr.shape} does not broadcast to theta shape {theta.shape}"
        ) from exc
    aa = np.abs(theta)
    values = np.where(
        aa <= delta_b,
        0.5 * np.square(theta),
        delta_b * (aa - 0.5 * delta_b),
    )
    return float(np.sum(values))
