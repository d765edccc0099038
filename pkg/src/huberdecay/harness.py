"""Experiment runner: (problem x optimizer x config) cells with step metrics.

A run is fully determined by its config (problem seed, run seed, optimizer
settings), aborts with a diagnostic record on a non-finite loss, and records
per-tensor weight statistics, log-spaced |theta| histograms, and
magnitude-pruning sparsity at a fixed threshold sweep. Matched-loss
comparison evaluates two runs at the first step each reaches a common
training-loss target — the desk-scale stand-in for matched-budget claims.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .optim import (
    HyperParams,
    NonFiniteGradientError,
    Optimizer,
    ParamGroup,
    ParamTensor,
    Schedule,
    lr_at,
)
from .regularizer import UNBOUNDED, Unbounded
from .threshold import ThresholdSpec, update_threshold


class ConfigError(ValueError):
    """A run config could not be parsed; the message names the offending key."""


# Histogram layout: 64 log-spaced bins over |theta| in [1e-8, 10], plus
# underflow (< 1e-8) and overflow (> 10) bins, fixed across runs.
HIST_EDGES = np.logspace(-8.0, 1.0, 65)
HIST_BINS = 66

# Loss-ratio ladder for the steps-to-target table in the run summary.
TARGET_FACTORS = (0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.001)

_SCHEDULE_DEFAULTS = {"warmup_steps": 0, "total_steps": None, "min_lr": 0.0}
_THRESHOLD_DEFAULTS = {
    "mode": "mean_magnitude",
    "c": 1.0,
    "beta0": 0.99,
    "delta_fixed": None,
    "delta_floor": 1e-8,
}
_TOP_DEFAULTS = {
    "problem": {"name": "quadratic", "dim": 64, "condition_number": 100.0, "seed": 0},
    "optimizer": "adamw",
    "lr": 1e-3,
    "beta1": None,
    "beta2": None,
    "eps": 1e-8,
    "weight_decay": 0.0,
    "bias_correction": True,
    "grad_clip_norm": 1.0,
    "schedule": _SCHEDULE_DEFAULTS,
    "threshold": _THRESHOLD_DEFAULTS,
    "total_steps": 1000,
    "batch_size": 0,
    "seed": 0,
    "metric_every": 1,
    "pruning_thresholds": [0.001, 0.003, 0.01, 0.03, 0.1],
    "charts": False,
}


@dataclass(frozen=True)
class RunConfig:
    problem: dict
    optimizer: str
    lr: float
    beta1: float
    beta2: float
    eps: float
    weight_decay: float
    bias_correction: bool
    grad_clip_norm: float | None
    warmup_steps: int
    schedule_total_steps: int
    min_lr: float
    threshold_spec: ThresholdSpec
    total_steps: int
    batch_size: int
    seed: int
    metric_every: int
    pruning_thresholds: tuple
    charts: bool

    def to_dict(self) -> dict:
        """Fully resolved, JSON-ready echo of the config (used for hashing)."""
        delta_fixed = self.threshold_spec.delta_fixed
        if delta_fixed is UNBOUNDED:
            delta_fixed = "unbounded"
        return {
            "problem": dict(self.problem),
            "optimizer": self.optimizer,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "bias_correction": self.bias_correction,
            "grad_clip_norm": self.grad_clip_norm,
            "schedule": {
                "warmup_steps": self.warmup_steps,
                "total_steps": self.schedule_total_steps,
                "min_lr": self.min_lr,
            },
            "threshold": {
                "mode": self.threshold_spec.mode,
                "c": self.threshold_spec.c,
                "beta0": self.threshold_spec.beta0,
                "delta_fixed": delta_fixed,
                "delta_floor": self.threshold_spec.delta_floor,
            },
            "total_steps": self.total_steps,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "metric_every": self.metric_every,
            "pruning_thresholds": list(self.pruning_thresholds),
            "charts": self.charts,
        }


def _merge_section(name: str, defaults: dict, given) -> dict:
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"config key {name!r} must be a mapping")
    out = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {name + '.' + key!r}")
        out[key] = value
    return out


def run_config_from_dict(raw: dict) -> RunConfig:
    """Parse and validate a config mapping, filling documented defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for key in raw:
        if key not in _TOP_DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
    merged = {**_TOP_DEFAULTS, **raw}
    problem = dict(merged["problem"]) if merged["problem"] else {}
    schedule = _merge_section("schedule", _SCHEDULE_DEFAULTS, merged["schedule"])
    thr = _merge_section("threshold", _THRESHOLD_DEFAULTS, merged["threshold"])

    optimizer = merged["optimizer"]
    if optimizer not in ("adam", "adamw", "adamhd_euler", "adamhd_prox", "lion"):
        raise ConfigError(f"unknown config value for 'optimizer': {optimizer!r}")
    beta1 = merged["beta1"]
    beta2 = merged["beta2"]
    if beta1 is None:
        beta1 = 0.9
    if beta2 is None:
        beta2 = 0.99 if optimizer == "lion" else 0.999

    delta_fixed = thr["delta_fixed"]
    if delta_fixed == "unbounded":
        delta_fixed = UNBOUNDED
    try:
        spec = ThresholdSpec(
            mode=thr["mode"],
            c=float(thr["c"]),
            beta0=float(thr["beta0"]),
            delta_fixed=delta_fixed,
            delta_floor=float(thr["delta_floor"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'threshold' section: {exc}") from exc

    total_steps = int(merged["total_steps"])
    if total_steps < 1:
        raise ConfigError(f"'total_steps' must be >= 1, got {total_steps}")
    metric_every = int(merged["metric_every"])
    if metric_every < 1:
        raise ConfigError(f"'metric_every' must be >= 1, got {metric_every}")
    schedule_total = schedule["total_steps"]
    schedule_total = total_steps if schedule_total is None else int(schedule_total)
    if schedule_total < total_steps:
        raise ConfigError("'schedule.total_steps' must cover the run length")
    grad_clip = merged["grad_clip_norm"]
    grad_clip = None if grad_clip is None else float(grad_clip)

    thresholds = tuple(float(t) for t in merged["pruning_thresholds"])
    if any(t < 0 for t in thresholds):
        raise ConfigError("'pruning_thresholds' must be nonnegative")

    try:
        cfg = RunConfig(
            problem=problem,
            optimizer=optimizer,
            lr=float(merged["lr"]),
            beta1=float(beta1),
            beta2=float(beta2),
            eps=float(merged["eps"]),
            weight_decay=float(merged["weight_decay"]),
            bias_correction=bool(merged["bias_correction"]),
            grad_clip_norm=grad_clip,
            warmup_steps=int(schedule["warmup_steps"]),
            schedule_total_steps=schedule_total,
            min_lr=float(schedule["min_lr"]),
            threshold_spec=spec,
            total_steps=total_steps,
            batch_size=int(merged["batch_size"]),
            seed=int(merged["seed"]),
            metric_every=metric_every,
            pruning_thresholds=thresholds,
            charts=bool(merged["charts"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    # fail fast on bad problem / hyperparameter values
    try:
        models.from_config(cfg.problem)
        HyperParams(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
        Schedule(cfg.lr, cfg.warmup_steps, cfg.schedule_total_steps, cfg.min_lr)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


@dataclass
class GroupStats:
    """Weight statistics for one parameter tensor at one step."""

    name: str
    mean_abs: float
    max_abs: float
    delta: float | Unbounded | None = None

    def delta_repr(self):
        if self.delta is None:
            return None
        if self.delta is UNBOUNDED:
            return "unbounded"
        return float(self.delta)


@dataclass
class MetricsRecord:
    step: int
    lr: float
    loss: float
    grad_norm: float
    groups: list
    hist: list
    sparsity: list
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "lr": self.lr,
            "loss": self.loss,
            "grad_norm": self.grad_norm,
            "groups": [
                {
                    "name": g.name,
                    "mean_abs": g.mean_abs,
                    "max_abs": g.max_abs,
                    "delta": g.delta_repr(),
                }
                for g in self.groups
            ],
            "histogram": list(self.hist),
            "sparsity": list(self.sparsity),
            "note": self.note,
        }


@dataclass
class RunResult:
    config: RunConfig
    records: list
    final_params: dict
    aborted: bool = False
    abort_reason: str | None = None
    steps_run: int = 0
    captured_grads: list | None = None


def prune_sparsity(tensors, threshold: float) -> float:
    """Fraction of coordinates with |theta| strictly below the threshold."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold!r}")
    total = 0
    below = 0
    for t in tensors:
        t = np.asarray(t)
        total += t.size
        below += int(np.count_nonzero(np.abs(t) < threshold))
    return below / total if total else 0.0


def weight_histogram(tensors) -> list:
    """Counts over |theta|: underflow, 64 log bins on [1e-8, 10], overflow."""
    counts = np.zeros(HIST_BINS, dtype=np.int64)
    for t in tensors:
        a = np.abs(np.asarray(t)).ravel()
        counts[0] += int(np.count_nonzero(a < HIST_EDGES[0]))
        counts[-1] += int(np.count_nonzero(a > HIST_EDGES[-1]))
        inner, _ = np.histogram(a, bins=HIST_EDGES)
        counts[1:-1] += inner
    return counts.tolist()


def _decayed_values(problem, tensors):
    decayed_names = set()
    for gs in problem.group_specs:
        if gs.decayed:
            decayed_names.update(gs.tensor_names)
    return [t.value for t in tensors if t.name in decayed_names]


def _snapshot(problem, tensors, thresholds):
    groups = [
        GroupStats(
            name=t.name,
            mean_abs=float(np.mean(np.abs(t.value))),
            max_abs=float(np.max(np.abs(t.value))),
        )
        for t in tensors
    ]
    hist = weight_histogram([t.value for t in tensors])
    decayed = _decayed_values(problem, tensors)
    sparsity = [prune_sparsity(decayed, thr) for thr in thresholds]
    return groups, hist, sparsity


def run(config: RunConfig, capture_grads: bool = False) -> RunResult:
    """Execute one run cell; deterministic given the config."""
    problem = models.from_config(config.problem)
    tensors = [ParamTensor(t.name, t.value.copy()) for t in problem.init_params]
    by_name = {t.name: t for t in tensors}
    groups = [
        ParamGroup(
            tensors=[by_name[n] for n in gs.tensor_names],
            lambda_override=None if gs.decayed else 0.0,
            threshold_spec=config.threshold_spec,
        )
        for gs in problem.group_specs
    ]
    hp = HyperParams(
        alpha_base=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.eps,
        lam=config.weight_decay,
        bias_correction=config.bias_correction,
    )
    schedule = Schedule(config.lr, config.warmup_steps, config.schedule_total_steps, config.min_lr)
    opt = Optimizer(config.optimizer, groups, hp, schedule, config.grad_clip_norm)
    order = opt.tensor_names()

    records = []
    captured = [] if capture_grads else None

    def _diagnostic(step, loss, reason):
        g, h, s = _snapshot(problem, tensors, config.pruning_thresholds)
        records.append(
            MetricsRecord(
                step=step,
                lr=lr_at(schedule, step),
                loss=loss,
                grad_norm=math.nan,
                groups=g,
                hist=h,
                sparsity=s,
                note=f"aborted: {reason}",
            )
        )

    for t in range(config.total_steps):
        batch = problem.batch(config.seed, t, config.batch_size)
        params = [by_name[n].value for n in (p.name for p in problem.init_params)]
        loss = problem.loss(params, batch)
        if not math.isfinite(loss):
            _diagnostic(t, loss, "non-finite loss")
            return RunResult(config, records, {x.name: x.value for x in tensors},
                             aborted=True, abort_reason="non-finite loss", steps_run=t,
                             captured_grads=captured)
        grads_by_name = dict(zip((p.name for p in problem.init_params),
                                 problem.grad(params, batch)))
        grads = [grads_by_name[n] for n in order]
        emit = t % config.metric_every == 0
        if emit:
            group_stats, hist, sparsity = _snapshot(problem, tensors, config.pruning_thresholds)
        if capture_grads:
            captured.append([np.array(g, copy=True) for g in grads])
        try:
            info = opt.step(grads)
        except NonFiniteGradientError as exc:
            _diagnostic(t, loss, str(exc))
            return RunResult(config, records, {x.name: x.value for x in tensors},
                             aborted=True, abort_reason=str(exc), steps_run=t,
                             captured_grads=captured)
        if emit:
            for gs in group_stats:
                gs.delta = info.deltas.get(gs.name)
            records.append(
                MetricsRecord(step=t, lr=info.alpha, loss=loss, grad_norm=info.grad_norm,
                              groups=group_stats, hist=hist, sparsity=sparsity)
            )

    # closing record for the final parameters
    batch = problem.batch(config.seed, config.total_steps, config.batch_size)
    params = [by_name[n].value for n in (p.name for p in problem.init_params)]
    loss = problem.loss(params, batch)
    final_grads = problem.grad(params, batch)
    grad_norm = math.sqrt(sum(float(np.sum(np.asarray(g) ** 2)) for g in final_grads))
    group_stats, hist, sparsity = _snapshot(problem, tensors, config.pruning_thresholds)
    if config.optimizer in ("adamhd_euler", "adamhd_prox"):
        for gs in group_stats:
            delta, _ = update_threshold(
                config.threshold_spec, opt.states[gs.name].threshold_state, by_name[gs.name].value
            )
            gs.delta = delta
    records.append(
        MetricsRecord(step=config.total_steps, lr=lr_at(schedule, config.total_steps),
                      loss=loss, grad_norm=grad_norm, groups=group_stats, hist=hist,
                      sparsity=sparsity)
    )
    return RunResult(config, records, {x.name: x.value for x in tensors},
                     steps_run=config.total_steps, captured_grads=captured)


@dataclass
class ComparisonRecord:
    """Matched-loss comparison of two runs at a common target loss."""

    target_loss: float
    reached_a: bool
    reached_b: bool
    step_a: int | None
    step_b: int | None
    ratio: float | None
    sparsity_a: list | None
    sparsity_b: list | None
    thresholds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "target_loss": self.target_loss,
            "reached_a": self.reached_a,
            "reached_b": self.reached_b,
            "step_a": self.step_a,
            "step_b": self.step_b,
            "ratio": self.ratio,
            "sparsity_a": self.sparsity_a,
            "sparsity_b": self.sparsity_b,
            "thresholds": list(self.thresholds),
        }


def _first_hit(records, target):
    for rec in records:
        if rec.loss <= target:
            return rec
    return None


def matched_loss_compare(records_a, records_b, target_loss: float,
                         thresholds=()) -> ComparisonRecord:
    """First-step-to-target for both runs plus sparsity at the hitting step."""
    hit_a = _first_hit(records_a, target_loss)
    hit_b = _first_hit(records_b, target_loss)
    ratio = None
    if hit_a is not None and hit_b is not None:
        if hit_a.step == hit_b.step:
            ratio = 1.0
        elif hit_b.step == 0:
            ratio = math.inf
        else:
            ratio = hit_a.step / hit_b.step
    return ComparisonRecord(
        target_loss=target_loss,
        reached_a=hit_a is not None,
        reached_b=hit_b is not None,
        step_a=None if hit_a is None else hit_a.step,
        step_b=None if hit_b is None else hit_b.step,
        ratio=ratio,
        sparsity_a=None if hit_a is None else list(hit_a.sparsity),
        sparsity_b=None if hit_b is None else list(hit_b.sparsity),
        thresholds=list(thresholds),
    )


def _fmt(x) -> str:
    # repr of a Python float is shortest-roundtrip and byte-stable
    return repr(float(x))


def metrics_csv_text(result: RunResult) -> str:
    """Render the metric stream as CSV, one row per (step, tensor)."""
    thresholds = result.config.pruning_thresholds
    header = "step,lr,loss,grad_norm,group,mean_abs,max_abs,delta," + ",".join(
        f"sparsity@{_fmt(t)}" for t in thresholds
    )
    lines = [header]
    for rec in result.records:
        sparsity_cells = ",".join(_fmt(s) for s in rec.sparsity)
        for gs in rec.groups:
            delta = gs.delta_repr()
            delta_cell = "" if delta is None else (delta if isinstance(delta, str) else _fmt(delta))
            lines.append(
                f"{rec.step},{_fmt(rec.lr)},{_fmt(rec.loss)},{_fmt(rec.grad_norm)},"
                f"{gs.name},{_fmt(gs.mean_abs)},{_fmt(gs.max_abs)},{delta_cell},{sparsity_cells}"
            )
    return "\n".join(lines) + "\n"


def steps_to_target_table(records) -> dict:
    """First recorded step reaching loss <= initial_loss * factor, per factor."""
    if not records:
        return {}
    initial = records[0].loss
    table = {}
    for factor in TARGET_FACTORS:
        hit = _first_hit(records, initial * factor)
        table[str(factor)] = None if hit is None else hit.step
    return table


def summary_dict(result: RunResult) -> dict:
    return {
        "config": result.config.to_dict(),
        "aborted": result.aborted,
        "abort_reason": result.abort_reason,
        "steps_run": result.steps_run,
        "final": result.records[-1].to_dict() if result.records else None,
        "steps_to_target": steps_to_target_table(result.records),
    }


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_line_chart(series, title: str, y_label: str, width=800, height=400) -> str:
    """Tiny self-contained SVG renderer: one polyline per series."""
    margin = 60
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(y)]
    if not pts:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"/>'
    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return margin + (x - x_lo) / x_span * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 20}" font-size="10">{_fmt(x_lo)}</text>',
        f'<text x="{width - margin}" y="{height - margin + 20}" text-anchor="end" '
        f'font-size="10">{_fmt(x_hi)}</text>',
        f'<text x="{margin - 5}" y="{height - margin}" text-anchor="end" '
        f'font-size="10">{_fmt(y_lo)}</text>',
        f'<text x="{margin - 5}" y="{margin}" text-anchor="end" font-size="10">{_fmt(y_hi)}</text>',
        f'<text x="15" y="{height / 2}" font-size="11" '
        f'transform="rotate(-90 15 {height / 2})" text-anchor="middle">{y_label}</text>',
    ]
    for k, (label, xs, ys) in enumerate(series):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        coords = " ".join(
            f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y)
        )
        parts.append(f'<polyline fill="none" stroke="{color}" points="{coords}"/>')
        parts.append(
            f'<text x="{width - margin + 5}" y="{margin + 15 * k}" font-size="10" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def render_loss_chart(result: RunResult) -> str:
    steps = [r.step for r in result.records]
    losses = [r.loss for r in result.records]
    if all(l > 0 for l in losses if math.isfinite(l)):
        ys = [math.log10(l) if math.isfinite(l) and l > 0 else math.nan for l in losses]
        return _svg_line_chart([("loss", steps, ys)], "training loss", "log10(loss)")
    return _svg_line_chart([("loss", steps, losses)], "training loss", "loss")


def render_sparsity_chart(result: RunResult) -> str:
    steps = [r.step for r in result.records]
    series = []
    for i, thr in enumerate(result.config.pruning_thresholds):
        series.append((f"|w|<{_fmt(thr)}", steps, [r.sparsity[i] for r in result.records]))
    return _svg_line_chart(series, "magnitude-pruning sparsity", "fraction below threshold")
