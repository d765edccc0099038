"""Per-tensor adaptive thresholds for the Huber decay.

Three policies:

* ``fixed``          — a constant delta (possibly UNBOUNDED).
* ``mean_magnitude`` — delta_t = c * mean(|theta_t|).
* ``ema``            — mu_t = beta0 * mu_{t-1} + (1 - beta0) * mean(|theta_t|),
                       delta_t = c * mu_t.

Every emitted delta is clamped from below by ``delta_floor`` so an all-zero
tensor never produces an invalid threshold.
"""

import math
from dataclasses import dataclass

import numpy as np

from .regularizer import UNBOUNDED, Unbounded

MODES = ("fixed", "mean_magnitude", "ema")


@dataclass(frozen=True)
class ThresholdSpec:
    """Threshold policy for one parameter group."""

    mode: str = "mean_magnitude"
    c: float = 1.0
    beta0: float = 0.99
    delta_fixed: float | Unbounded | None = None
    delta_floor: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown threshold mode {self.mode!r}, expected one of {MODES}")
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise ValueError(f"c must be positive and finite, got {self.c!r}")
        if not (0.0 <= self.beta0 < 1.0):
            raise ValueError(f"beta0 must lie in [0, 1), got {self.beta0!r}")
        if not (math.isfinite(self.delta_floor) and self.delta_floor > 0.0):
            raise ValueError(f"delta_floor must be positive, got {self.delta_floor!r}")
        if self.mode == "fixed":
            if self.delta_fixed is None:
                raise ValueError("fixed mode requires delta_fixed")
            if self.delta_fixed is not UNBOUNDED:
                df = float(self.delta_fixed)
                if math.isinf(df) and df > 0:
                    # accept +inf as a convenience spelling of the sentinel
                    object.__setattr__(self, "delta_fixed", UNBOUNDED)
                elif not (math.isfinite(df) and df > 0.0):
                    raise ValueError(f"delta_fixed must be positive, got {self.delta_fixed!r}")
                else:
                    object.__setattr__(self, "delta_fixed", df)


@dataclass(frozen=True)
class ThresholdState:
    """EMA state for one tensor; mu is the running mean magnitude."""

    mu: float = 0.0
    initialized: bool = False


def mean_magnitude(theta) -> float:
    """Mean absolute value of a non-empty tensor; zero iff the tensor is zero."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size == 0:
        raise ValueError("mean_magnitude of an empty tensor")
    value = float(np.mean(np.abs(theta)))
    if not math.isfinite(value):
        raise ValueError("theta contains non-finite values")
    return value


def update_threshold(spec: ThresholdSpec, state: ThresholdState, theta):
    """Emit delta_t for ``theta`` and return ``(delta_t, new_state)``.

    The state is unchanged except for mu in ema mode. An uninitialized ema
    state adopts the first observed mean magnitude (a zero init with large
    beta0 would keep delta vanishingly small for thousands of steps).
    """
    if spec.mode == "fixed":
        if spec.delta_fixed is UNBOUNDED:
            return UNBOUNDED, state
        return max(spec.delta_fixed, spec.delta_floor), state
    mm = mean_magnitude(theta)
    if spec.mode == "mean_magnitude":
        return max(spec.c * mm, spec.delta_floor), state
    # ema
    if state.initialized:
        mu = spec.beta0 * state.mu + (1.0 - spec.beta0) * mm
    else:
        mu = mm
    return max(spec.c * mu, spec.delta_floor), ThresholdState(mu=mu, initialized=True)
