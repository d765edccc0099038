"""Adam-family optimizers with decoupled Huber weight decay.

The quadratic shrink of plain decoupled L2 is replaced by a Huber penalty:
quadratic on small weights, a capped constant force on over-grown ones, in
both an explicit clipped-decay step and a closed-form proximal step, with
per-tensor adaptive thresholds. Ships with brute-force verification oracles
and a desk-scale experiment harness.
"""

from .harness import (
    ComparisonRecord,
    MetricsRecord,
    RunConfig,
    RunResult,
    matched_loss_compare,
    prune_sparsity,
    run,
    run_config_from_dict,
)
from .models import Problem, logistic_problem, mlp_problem, quadratic_problem
from .optim import (
    HyperParams,
    NonFiniteGradientError,
    Optimizer,
    OptimState,
    ParamGroup,
    ParamTensor,
    Schedule,
    adam_moments,
    clip_global_norm,
    init_state,
    lr_at,
    step_adam,
    step_adamhd_euler,
    step_adamhd_prox,
    step_adamw,
    step_lion,
)
from .oracle import OracleReport, grad_check, prox_check, prox_oracle, replay_reference
from .proximal import prox_apply, prox_huber
from .regularizer import UNBOUNDED, huber, huber_grad, regularizer_value
from .threshold import ThresholdSpec, ThresholdState, mean_magnitude, update_threshold

__version__ = "0.1.0"

__all__ = [
    "UNBOUNDED",
    "ComparisonRecord",
    "HyperParams",
    "MetricsRecord",
    "NonFiniteGradientError",
    "OptimState",
    "Optimizer",
    "OracleReport",
    "ParamGroup",
    "ParamTensor",
    "Problem",
    "RunConfig",
    "RunResult",
    "Schedule",
    "ThresholdSpec",
    "ThresholdState",
    "adam_moments",
    "clip_global_norm",
    "grad_check",
    "huber",
    "huber_grad",
    "init_state",
    "logistic_problem",
    "lr_at",
    "matched_loss_compare",
    "mean_magnitude",
    "mlp_problem",
    "prox_apply",
    "prox_check",
    "prox_huber",
    "prox_oracle",
    "prune_sparsity",
    "quadratic_problem",
    "regularizer_value",
    "replay_reference",
    "run",
    "run_config_from_dict",
    "step_adam",
    "step_adamhd_euler",
    "step_adamhd_prox",
    "step_adamw",
    "step_lion",
    "update_threshold",
]
