"""Stateful optimizers sharing one per-tensor step interface.

Five methods, all built on the same moment machinery:

* ``adam``          θ' = θ − α·m̂/(√v̂ + ε)
* ``adamw``         θ' = θ − α·m̂/(√v̂ + ε) − α·λ·θ
* ``adamhd_euler``  θ' = θ − α·m̂/(√v̂ + ε) − α·λ·clip(θ, −δ_t, +δ_t)
* ``adamhd_prox``   θ̃ = θ − α·m̂/(√v̂ + ε);  θ' = prox of the scaled Huber
                    penalty at θ̃ (τ = α·λ, threshold δ_t)
* ``lion``          θ' = θ − α·(sign(β1·m + (1−β1)·g) + λ·θ);
                    m' = β2·m + (1−β2)·g

with m/v the usual exponential moving averages of g and g⊙g, optional bias
correction m̂ = m/(1−β1^t), v̂ = v/(1−β2^t), per-tensor adaptive thresholds
δ_t, selective decay via parameter groups (λ-override 0 groups are exactly
unregularized), global-norm gradient clipping, and a cosine schedule with
linear warmup.

The decay sub-update of the W/HD variants is a function of (θ_t, α_t, λ, δ_t)
only — it never reads the second moment. Each step records that displacement
in ``OptimState.last_decay`` (evaluated at the pre-update parameters; for the
Euler-style variants this is exactly the term applied).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .proximal import prox_apply
from .regularizer import UNBOUNDED, Unbounded
from .threshold import ThresholdSpec, ThresholdState, update_threshold

METHODS = ("adam", "adamw", "adamhd_euler", "adamhd_prox", "lion")


class NonFiniteGradientError(ValueError):
    """A step was rejected because a gradient (or its norm) is not finite."""


@dataclass
class HyperParams:
    alpha_base: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lam: float = 0.0
    bias_correction: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.alpha_base) and self.alpha_base > 0.0):
            raise ValueError(f"alpha_base must be positive, got {self.alpha_base!r}")
        if not (0.0 <= self.beta1 < 1.0):
            raise ValueError(f"beta1 must lie in [0, 1), got {self.beta1!r}")
        if not (0.0 <= self.beta2 < 1.0):
            raise ValueError(f"beta2 must lie in [0, 1), got {self.beta2!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError(f"lam must be >= 0, got {self.lam!r}")


@dataclass
class OptimState:
    """Per-tensor optimizer state.

    ``m``/``v`` are the raw (uncorrected) moments; ``step`` counts completed
    updates for this tensor; lion stores its single momentum in ``m`` and
    leaves ``v`` at zero. ``last_delta``/``last_decay`` are diagnostics
    refreshed by each step.
    """

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    threshold_state: ThresholdState = field(default_factory=ThresholdState)
    last_delta: float | Unbounded | None = None
    last_decay: np.ndarray | None = None


def init_state(theta) -> OptimState:
    theta = np.asarray(theta, dtype=np.float64)
    return OptimState(m=np.zeros_like(theta), v=np.zeros_like(theta))


def _check_grad(g, state: OptimState) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError(f"gradient shape {g.shape} does not match state shape {state.m.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError("gradient contains non-finite elements; step rejected")
    return g


def adam_moments(state: OptimState, g, hp: HyperParams):
    """Advance the moment EMAs and return the pair used in the update.

    Updates state in place (raw m, v and the step counter) and returns
    ``(m, v)`` bias-corrected by ``1/(1 − β^t)`` when enabled, raw otherwise.
    """
    g = _check_grad(g, state)
    state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * g
    state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * (g * g)
    state.step += 1
    if hp.bias_correction:
        t = state.step
        return state.m / (1.0 - hp.beta1**t), state.v / (1.0 - hp.beta2**t)
    return state.m, state.v


def _adam_sub_step(theta, g, state, hp, alpha_t):
    m_hat, v_hat = adam_moments(state, g, hp)
    return theta - alpha_t * m_hat / (np.sqrt(v_hat) + hp.epsilon)


def step_adam(theta, g, state: OptimState, hp: HyperParams, alpha_t: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    out = _adam_sub_step(theta, g, state, hp, alpha_t)
    state.last_delta = None
    state.last_decay = None
    return out


def step_adamw(theta, g, state: OptimState, hp: HyperParams, alpha_t: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    theta_tilde = _adam_sub_step(theta, g, state, hp, alpha_t)
    state.last_delta = None
    if hp.lam == 0.0:
        state.last_decay = np.zeros_like(theta)
        return theta_tilde
    decay = alpha_t * hp.lam * theta
    state.last_decay = -decay
    return theta_tilde - decay


def step_adamhd_euler(
    theta, g, state: OptimState, hp: HyperParams, alpha_t: float, spec: ThresholdSpec
) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    g = _check_grad(g, state)  # reject before any state mutation
    # delta_t comes from the pre-update parameters
    delta, state.threshold_state = update_threshold(spec, state.threshold_state, theta)
    state.last_delta = delta
    theta_tilde = _adam_sub_step(theta, g, state, hp, alpha_t)
    if hp.lam == 0.0:
        state.last_decay = np.zeros_like(theta)
        return theta_tilde
    clipped = theta if delta is UNBOUNDED else np.clip(theta, -delta, delta)
    decay = alpha_t * hp.lam * clipped
    state.last_decay = -decay
    return theta_tilde - decay


def step_adamhd_prox(
    theta, g, state: OptimState, hp: HyperParams, alpha_t: float, spec: ThresholdSpec
) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    g = _check_grad(g, state)  # reject before any state mutation
    delta, state.threshold_state = update_threshold(spec, state.threshold_state, theta)
    state.last_delta = delta
    theta_tilde = _adam_sub_step(theta, g, state, hp, alpha_t)
    tau = alpha_t * hp.lam
    # displacement of the decay map at theta_t; a function of (theta, alpha, lam, delta) only
    state.last_decay = prox_apply(theta, tau, delta) - theta
    return prox_apply(theta_tilde, tau, delta)


def step_lion(theta, g, state: OptimState, hp: HyperParams, alpha_t: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    g = _check_grad(g, state)
    c = hp.beta1 * state.m + (1.0 - hp.beta1) * g
    out = theta - alpha_t * (np.sign(c) + hp.lam * theta)
    state.m = hp.beta2 * state.m + (1.0 - hp.beta2) * g
    state.step += 1
    state.last_delta = None
    state.last_decay = None
    return out


_STEP_FNS = {
    "adam": step_adam,
    "adamw": step_adamw,
    "adamhd_euler": step_adamhd_euler,
    "adamhd_prox": step_adamhd_prox,
    "lion": step_lion,
}


def global_grad_norm(grads) -> float:
    """Joint l2 norm over a collection of gradient tensors."""
    total = 0.0
    for g in grads:
        g = np.asarray(g, dtype=np.float64)
        total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_global_norm(grads, max_norm: float):
    """Scale all tensors by max_norm/norm when the joint norm exceeds max_norm.

    Returns ``(grads, raw_norm)``; tensors are left untouched when the norm is
    within bounds. A non-finite norm rejects the step.
    """
    if not (math.isfinite(max_norm) and max_norm > 0.0):
        raise ValueError(f"max_norm must be positive, got {max_norm!r}")
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    norm = global_grad_norm(grads)
    if not math.isfinite(norm):
        raise NonFiniteGradientError(f"non-finite gradient norm {norm!r}; step rejected")
    if norm <= max_norm:
        return grads, norm
    return [g * max_norm / norm for g in grads], norm


@dataclass(frozen=True)
class Schedule:
    """Linear warmup to alpha_base, then cosine decay to alpha_min."""

    alpha_base: float
    warmup_steps: int = 0
    total_steps: int = 1
    alpha_min: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha_base) and self.alpha_base > 0.0):
            raise ValueError(f"alpha_base must be positive, got {self.alpha_base!r}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps!r}")
        if not (0 <= self.warmup_steps <= self.total_steps):
            raise ValueError(
                f"warmup_steps must lie in [0, total_steps], got {self.warmup_steps!r}"
            )
        if not (math.isfinite(self.alpha_min) and self.alpha_min >= 0.0):
            raise ValueError(f"alpha_min must be >= 0, got {self.alpha_min!r}")


def lr_at(schedule: Schedule, t: int) -> float:
    """Learning rate at step t.

    Warmup ramps as αb·(t+1)/warmup for t < warmup; the decay span follows
    αmin + (αb − αmin)·(1 + cos(π·progress))/2. The endpoints t = warmup and
    t = total are pinned to αb and αmin exactly.
    """
    t = int(t)
    if t < 0 or t > schedule.total_steps:
        raise ValueError(f"step {t} outside schedule domain [0, {schedule.total_steps}]")
    if t < schedule.warmup_steps:
        return schedule.alpha_base * (t + 1) / schedule.warmup_steps
    if t == schedule.total_steps:
        return schedule.alpha_min
    if t == schedule.warmup_steps:
        return schedule.alpha_base
    progress = (t - schedule.warmup_steps) / (schedule.total_steps - schedule.warmup_steps)
    return schedule.alpha_min + 0.5 * (schedule.alpha_base - schedule.alpha_min) * (
        1.0 + math.cos(math.pi * progress)
    )


@dataclass
class ParamTensor:
    """A named buffer of parameters belonging to one layer/group."""

    name: str
    value: np.ndarray

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)


@dataclass
class ParamGroup:
    """Tensors sharing a decay coefficient and threshold policy.

    ``lambda_override = 0`` realizes a decay mask: the group is exactly
    unregularized. ``None`` inherits the optimizer-level coefficient.
    """

    tensors: list
    lambda_override: float | None = None
    threshold_spec: ThresholdSpec = field(default_factory=ThresholdSpec)

    def __post_init__(self):
        if self.lambda_override is not None:
            lo = float(self.lambda_override)
            if not (math.isfinite(lo) and lo >= 0.0):
                raise ValueError(f"lambda_override must be >= 0, got {self.lambda_override!r}")
            self.lambda_override = lo


@dataclass
class StepInfo:
    """Diagnostics from one optimizer step."""

    step: int
    alpha: float
    grad_norm: float
    deltas: dict


class Optimizer:
    """Drives one update method over parameter groups.

    Owns the per-tensor state exclusively; tensors are updated in place
    (``ParamTensor.value`` is reassigned). Update order within a step:
    clip gradients, then per tensor: threshold, moments, parameter update.
    """

    def __init__(
        self,
        method: str,
        groups: list,
        hp: HyperParams,
        schedule: Schedule | None = None,
        grad_clip_norm: float | None = None,
    ):
        if method not in METHODS:
            raise ValueError(f"unknown optimizer {method!r}, expected one of {METHODS}")
        self.method = method
        self.groups = list(groups)
        self.hp = hp
        self.schedule = schedule
        self.grad_clip_norm = grad_clip_norm
        self._flat = []
        seen = set()
        for group in self.groups:
            for tensor in group.tensors:
                if tensor.name in seen or any(t is tensor for _, t in self._flat):
                    raise ValueError(f"tensor {tensor.name!r} belongs to more than one group")
                seen.add(tensor.name)
                self._flat.append((group, tensor))
        if not self._flat:
            raise ValueError("optimizer needs at least one tensor")
        self.states = {t.name: init_state(t.value) for _, t in self._flat}
        self.t = 0

    def tensor_names(self):
        return [t.name for _, t in self._flat]

    def step(self, grads) -> StepInfo:
        """Apply one update from gradients aligned with :meth:`tensor_names`."""
        grads = list(grads)
        if len(grads) != len(self._flat):
            raise ValueError(f"expected {len(self._flat)} gradients, got {len(grads)}")
        if self.grad_clip_norm is not None:
            grads, raw_norm = clip_global_norm(grads, self.grad_clip_norm)
        else:
            raw_norm = global_grad_norm(grads)
            if not math.isfinite(raw_norm):
                raise NonFiniteGradientError(
                    f"non-finite gradient norm {raw_norm!r}; step rejected"
                )
        alpha_t = lr_at(self.schedule, self.t) if self.schedule is not None else self.hp.alpha_base
        deltas = {}
        for (group, tensor), g in zip(self._flat, grads):
            lam = group.lambda_override if group.lambda_override is not None else self.hp.lam
            hp = self.hp if lam == self.hp.lam else replace(self.hp, lam=lam)
            state = self.states[tensor.name]
            if self.method in ("adamhd_euler", "adamhd_prox"):
                fn = _STEP_FNS[self.method]
                tensor.value = fn(tensor.value, g, state, hp, alpha_t, group.threshold_spec)
            else:
                fn = _STEP_FNS[self.method]
                tensor.value = fn(tensor.value, g, state, hp, alpha_t)
            deltas[tensor.name] = state.last_delta
        info = StepInfo(step=self.t, alpha=alpha_t, grad_norm=raw_norm, deltas=deltas)
        self.t += 1
        return info
