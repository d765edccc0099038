"""Brute-force verification partners for the closed-form code paths.

Everything here is deliberately naive and shares no code with the production
modules beyond primitive arithmetic: the Huber value and the optimizer
recursions are re-transcribed in plain Python so that agreement between the
two routes certifies both. Do not "simplify" by importing from
``proximal``/``optim`` — independence is the point.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # bracket shrink ratio per iteration
_MAX_GOLDEN_ITERS = 80


@dataclass
class OracleReport:
    """Outcome of a brute-force sweep; passed iff max error is within tolerance."""

    cases_run: int
    max_abs_error: float
    worst_case_input: dict | None
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_abs_error <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "cases_run": self.cases_run,
            "max_abs_error": self.max_abs_error,
            "worst_case_input": self.worst_case_input,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _huber_value(x: float, delta: float) -> float:
    # local transcription of the penalty; independent of regularizer.py
    ax = abs(x)
    if ax <= delta:
        return 0.5 * x * x
    return delta * (ax - 0.5 * delta)


def prox_oracle(y: float, tau: float, delta: float, width: float = 1e-10) -> float:
    """Minimize 0.5*(x-y)**2 + tau*H_delta(x) by golden-section search.

    The objective is strongly convex (curvature >= 1 from the quadratic data
    term), so the minimizer is unique and bracketing search localizes it to
    the final interval width. The bracket [-|y|-delta-1, |y|+delta+1] always
    contains the minimizer because the prox never moves a point past the
    origin or away from y.

    Near the minimizer the objective is flat to within float rounding
    (values at two probes can differ by less than eps*|phi|, which would let
    the bracket drift by ~sqrt(eps*phi) and blow the 1e-10 budget), so
    comparisons that the float values cannot settle are re-done in exact
    rational arithmetic. That keeps every discard step valid all the way
    down to the target width.
    """
    y = float(y)
    tau = float(tau)
    delta = float(delta)
    if not math.isfinite(y):
        raise ValueError(f"expected finite y, got {y!r}")
    if not (math.isfinite(tau) and tau >= 0.0):
        raise ValueError(f"tau must be finite and >= 0, got {tau!r}")
    if not (math.isfinite(delta) and delta > 0.0):
        raise ValueError(f"delta must be positive and finite, got {delta!r}")

    def phi(x: float) -> float:
        return 0.5 * (x - y) * (x - y) + tau * _huber_value(x, delta)

    yf, tf, df = Fraction(y), Fraction(tau), Fraction(delta)
    exact_cache = {}

    def phi_exact(x: float) -> Fraction:
        v = exact_cache.get(x)
        if v is None:
            xf = Fraction(x)
            ax = -xf if xf < 0 else xf
            h = xf * xf / 2 if ax <= df else df * (ax - df / 2)
            v = (xf - yf) * (xf - yf) / 2 + tf * h
            exact_cache[x] = v
        return v

    def less(x1: float, f1: float, x2: float, f2: float) -> bool:
        if abs(f1 - f2) > 1e-12 * max(1.0, abs(f1), abs(f2)):
            return f1 < f2
        return phi_exact(x1) < phi_exact(x2)

    a = -abs(y) - delta - 1.0
    b = abs(y) + delta + 1.0
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = phi(c)
    fd = phi(d)
    iters = 0
    while (b - a) > width and iters < _MAX_GOLDEN_ITERS:
        if less(c, fc, d, fd):
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = phi(d)
        iters += 1
    return 0.5 * (a + b)


def prox_check(n_cases: int, seed: int, tolerance: float) -> OracleReport:
    """Compare the closed-form prox against the golden-section oracle.

    Seeded random triples with y in [-10, 10], tau in (0, 2], delta in (0, 5].
    """
    from .proximal import prox_huber  # the route under test
    from .rng import SplitMix64

    if n_cases < 1:
        raise ValueError(f"n_cases must be >= 1, got {n_cases!r}")
    rng = SplitMix64(seed)
    max_err = 0.0
    worst = None
    for _ in range(n_cases):
        y = -10.0 + 20.0 * rng.uniform()
        tau = 2.0 * (1.0 - rng.uniform())  # (0, 2]
        delta = 5.0 * (1.0 - rng.uniform())  # (0, 5]
        err = abs(prox_huber(y, tau, delta) - prox_oracle(y, tau, delta))
        if err > max_err:
            max_err = err
            worst = {"y": y, "tau": tau, "delta": delta}
    return OracleReport(
        cases_run=n_cases, max_abs_error=max_err, worst_case_input=worst, tolerance=tolerance
    )


def grad_check(f, grad_f, points, h: float = 1e-6, tolerance: float = 1e-6, exclude=None):
    """Compare ``grad_f`` against central differences of ``f`` at each point.

    ``points`` is an iterable of 1-D arrays; ``exclude`` is an optional
    predicate marking points too close to non-differentiable loci (those are
    skipped, not failed). Reports the worst componentwise error.
    """
    if not (h > 0.0):
        raise ValueError(f"h must be positive, got {h!r}")
    max_err = 0.0
    worst = None
    cases = 0
    for idx, x in enumerate(points):
        x = np.asarray(x, dtype=np.float64)
        if exclude is not None and exclude(x):
            continue
        cases += 1
        claimed = np.asarray(grad_f(x), dtype=np.float64)
        for i in range(x.size):
            step = np.zeros_like(x)
            step[i] = h
            fd = (f(x + step) - f(x - step)) / (2.0 * h)
            err = abs(fd - claimed[i])
            if err > max_err:
                max_err = err
                worst = {"point_index": idx, "coordinate": i, "value": float(x[i])}
    return OracleReport(
        cases_run=cases, max_abs_error=max_err, worst_case_input=worst, tolerance=tolerance
    )


def _replay_delta(threshold_cfg, theta, ema_state):
    """Threshold recursion, naive form. Returns (delta, ema_state)."""
    mode = threshold_cfg.get("mode", "mean_magnitude")
    c = float(threshold_cfg.get("c", 1.0))
    floor = float(threshold_cfg.get("delta_floor", 1e-8))
    if mode == "fixed":
        df = threshold_cfg["delta_fixed"]
        if df == "unbounded" or (isinstance(df, float) and math.isinf(df)):
            return "unbounded", ema_state
        return max(float(df), floor), ema_state
    total = 0.0
    for x in theta:
        total += abs(x)
    mm = total / len(theta)
    if mode == "mean_magnitude":
        return max(c * mm, floor), ema_state
    if mode == "ema":
        beta0 = float(threshold_cfg.get("beta0", 0.99))
        mu, initialized = ema_state
        mu = beta0 * mu + (1.0 - beta0) * mm if initialized else mm
        return max(c * mu, floor), (mu, True)
    raise ValueError(f"unknown threshold mode {mode!r}")


def replay_reference(optimizer_id: str, config: dict, grads) -> list:
    """Re-run an optimizer trajectory as a straight-line transcription.

    Plain Python floats and loops, one literal line per recursion term; used
    as the differential-testing partner for ``optim``. ``config`` keys:
    theta0 (list), alpha or alphas, beta1, beta2, eps, lam, bias_correction,
    clip_norm (optional), threshold (dict, for the hd variants). Returns the
    list of parameter vectors after each step.
    """
    if optimizer_id not in ("adam", "adamw", "adamhd_euler", "adamhd_prox", "lion"):
        raise ValueError(f"unknown optimizer {optimizer_id!r}")
    theta = [float(x) for x in config["theta0"]]
    n = len(theta)
    beta1 = float(config.get("beta1", 0.9))
    beta2 = float(config.get("beta2", 0.999))
    eps = float(config.get("eps", 1e-8))
    lam = float(config.get("lam", 0.0))
    bias_correction = bool(config.get("bias_correction", True))
    clip_norm = config.get("clip_norm")
    threshold_cfg = config.get("threshold", {"mode": "fixed", "delta_fixed": "unbounded"})
    grads = [list(g) for g in grads]
    if "alphas" in config:
        alphas = [float(a) for a in config["alphas"]]
        if len(alphas) < len(grads):
            raise ValueError("alphas shorter than gradient sequence")
    else:
        alphas = [float(config["alpha"])] * len(grads)

    m = [0.0] * n
    v = [0.0] * n
    ema_state = (0.0, False)
    trajectory = []
    for t, g_in in enumerate(grads, start=1):
        g = [float(x) for x in g_in]
        if len(g) != n:
            raise ValueError("gradient length mismatch")
        if clip_norm is not None:
            total = 0.0
            for x in g:
                total += x * x
            norm = math.sqrt(total)
            if norm > clip_norm:
                g = [x * clip_norm / norm for x in g]
        alpha = alphas[t - 1]

        if optimizer_id == "lion":
            update = []
            for i in range(n):
                c = beta1 * m[i] + (1.0 - beta1) * g[i]
                s = 1.0 if c > 0.0 else (-1.0 if c < 0.0 else 0.0)
                update.append(s)
            theta = [theta[i] - alpha * (update[i] + lam * theta[i]) for i in range(n)]
            m = [beta2 * m[i] + (1.0 - beta2) * g[i] for i in range(n)]
            trajectory.append(list(theta))
            continue

        delta = None
        if optimizer_id in ("adamhd_euler", "adamhd_prox"):
            delta, ema_state = _replay_delta(threshold_cfg, theta, ema_state)

        m = [beta1 * m[i] + (1.0 - beta1) * g[i] for i in range(n)]
        v = [beta2 * v[i] + (1.0 - beta2) * g[i] * g[i] for i in range(n)]
        if bias_correction:
            bc1 = 1.0 - beta1**t
            bc2 = 1.0 - beta2**t
            mh = [m[i] / bc1 for i in range(n)]
            vh = [v[i] / bc2 for i in range(n)]
        else:
            mh = m
            vh = v
        tilde = [theta[i] - alpha * mh[i] / (math.sqrt(vh[i]) + eps) for i in range(n)]

        if optimizer_id == "adam" or lam == 0.0:
            theta = tilde
        elif optimizer_id == "adamw":
            theta = [tilde[i] - alpha * lam * theta[i] for i in range(n)]
        elif optimizer_id == "adamhd_euler":
            clipped = []
            for i in range(n):
                if delta == "unbounded":
                    clipped.append(theta[i])
                else:
                    clipped.append(min(max(theta[i], -delta), delta))
            theta = [tilde[i] - alpha * lam * clipped[i] for i in range(n)]
        else:  # adamhd_prox
            tau = alpha * lam
            nxt = []
            for i in range(n):
                y = tilde[i]
                if delta == "unbounded" or abs(y) <= (1.0 + tau) * delta:
                    nxt.append(y / (1.0 + tau))
                else:
                    s = 1.0 if y > 0.0 else -1.0
                    nxt.append(y - tau * delta * s)
            theta = nxt
        trajectory.append(list(theta))
    return trajectory
