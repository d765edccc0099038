"""Closed-form proximal operator of the scaled Huber penalty.

For ``tau >= 0`` and threshold ``delta > 0`` the unique minimizer of

    phi(x) = 0.5 * (x - y)**2 + tau * H_delta(x)

has the piecewise closed form::

    prox(y) = y / (1 + tau)             if |y| <= (1 + tau) * delta
            = y - tau * delta * sign(y) otherwise

i.e. a scaled shrink for moderate inputs and a constant-magnitude shift for
large ones. The map is firmly nonexpansive and never produces exact zeros
from the shift branch.
"""

import math

import numpy as np

from .regularizer import UNBOUNDED, check_delta


def prox_huber(y: float, tau: float, delta) -> float:
    """Scalar prox of ``tau * H_delta`` at ``y``.

    ``tau = 0`` short-circuits to the identity without touching ``delta``
    (zero-decay parameter groups must be exactly unregularized). The branch
    boundary |y| = (1+tau)*delta is assigned to the interior branch; both
    formulas agree there.
    """
    y = float(y)
    if not math.isfinite(y):
        raise ValueError(f"expected finite y, got {y!r}")
    tau = float(tau)
    if not math.isfinite(tau) or tau < 0.0:
        raise ValueError(f"tau must be finite and >= 0, got {tau!r}")
    if tau == 0.0:
        return y
    delta = check_delta(delta)
    if delta is UNBOUNDED or abs(y) <= (1.0 + tau) * delta:
        return y / (1.0 + tau)
    return y - tau * delta * math.copysign(1.0, y)


def prox_apply(theta_tilde, tau: float, delta) -> np.ndarray:
    """Elementwise :func:`prox_huber` over an array; output shape == input shape.

    ``delta`` may be a scalar, an array broadcastable to the input shape, or
    UNBOUNDED (pure decoupled-L2 shrink ``theta / (1 + tau)``).
    """
    y = np.asarray(theta_tilde, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("theta_tilde contains non-finite values")
    tau = float(tau)
    if not math.isfinite(tau) or tau < 0.0:
        raise ValueError(f"tau must be finite and >= 0, got {tau!r}")
    if tau == 0.0:
        return y.copy()
    if delta is UNBOUNDED:
        return y / (1.0 + tau)
    delta_arr = np.asarray(delta, dtype=np.float64)
    if not np.all(np.isfinite(delta_arr)) or np.any(delta_arr <= 0.0):
        raise ValueError("delta must be positive and finite")
    try:
        delta_b = np.broadcast_to(delta_arr, y.shape)
    except ValueError as exc:
        raise ValueError(
            f"delta shape {delta_arr.shape} does not broadcast to shape {y.shape}"
        ) from exc
    interior = np.abs(y) <= (1.0 + tau) * delta_b
    return np.where(interior, y / (1.0 + tau), y - tau * delta_b * np.sign(y))
