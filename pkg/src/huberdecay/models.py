"""Toy differentiable problems with closed-form gradients.

Three problem families exercise the optimizers at desk scale: an
ill-conditioned quadratic whose optimum mixes small coordinates with a heavy
tail (so capped and quadratic decay behave measurably differently), logistic
regression on noisy separable data, and a small tanh MLP regressing onto a
seeded teacher, with manual backprop and bias tensors kept out of the decay
groups. All randomness flows through the seeded splitmix generator, so a
seed pins the problem bitwise.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .optim import ParamTensor
from .rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class GroupSpec:
    """Which tensors form a decay group; decayed=False marks a decay mask."""

    name: str
    tensor_names: tuple
    decayed: bool = True


@dataclass
class Problem:
    """A differentiable objective over named parameter tensors.

    ``loss_fn``/``grad_fn`` take (params, batch) where params is a list of
    arrays aligned with ``init_params`` and batch is either None (full data)
    or an index array. Both are deterministic given their inputs.
    """

    name: str
    init_params: list
    group_specs: list
    loss_fn: object
    grad_fn: object
    n_samples: int = 0
    meta: dict = field(default_factory=dict)

    def loss(self, params, batch=None) -> float:
        return float(self.loss_fn(params, batch))

    def grad(self, params, batch=None) -> list:
        return self.grad_fn(params, batch)

    def batch(self, run_seed: int, step: int, batch_size: int):
        """Deterministic minibatch indices for a step; None means full data."""
        if self.n_samples == 0 or batch_size <= 0 or batch_size >= self.n_samples:
            return None
        rng = SplitMix64(derive_seed(run_seed, 0xBA7C, step))
        return np.array([rng.randint(self.n_samples) for _ in range(batch_size)], dtype=np.int64)


def quadratic_problem(dim: int, condition_number: float, seed: int) -> Problem:
    """0.5 * (theta - opt)' D (theta - opt) with log-spaced eigenvalues.

    10% of the optimum's coordinates are drawn at 10x scale, creating the
    over-grown-weights regime where a capped decay force diverges from the
    proportional one. Training starts from the origin.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim!r}")
    if not (math.isfinite(condition_number) and condition_number >= 1.0):
        raise ValueError(f"condition_number must be >= 1, got {condition_number!r}")
    rng = SplitMix64(derive_seed(seed, 0x51AD))
    eigs = np.power(10.0, np.linspace(0.0, math.log10(condition_number), dim))
    opt = 0.1 * rng.normals(dim)
    heavy = rng.permutation(dim)[: dim // 10]
    opt[heavy] *= 10.0

    def loss_fn(params, batch):
        r = params[0] - opt
        return 0.5 * float(np.sum(eigs * r * r))

    def grad_fn(params, batch):
        return [eigs * (params[0] - opt)]

    return Problem(
        name="quadratic",
        init_params=[ParamTensor("theta", np.zeros(dim))],
        group_specs=[GroupSpec("all", ("theta",))],
        loss_fn=loss_fn,
        grad_fn=grad_fn,
        meta={"optimum": opt, "eigenvalues": eigs, "heavy_indices": heavy},
    )


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_problem(n_samples: int, dim: int, seed: int) -> Problem:
    """Binary cross-entropy on noisy linearly separable synthetic data."""
    if n_samples < dim:
        raise ValueError(f"need n_samples >= dim, got {n_samples} < {dim}")
    rng = SplitMix64(derive_seed(seed, 0x106))
    for _ in range(100):
        X = rng.normals(n_samples * dim).reshape(n_samples, dim)
        w_true = rng.normals(dim)
        margins = X @ w_true + 0.5 * rng.normals(n_samples)
        y = (margins > 0.0).astype(np.float64)
        if 0.0 < y.mean() < 1.0:
            break
    else:  # pragma: no cover - vanishingly unlikely with n >= 2
        raise RuntimeError("could not draw a two-class sample")

    def _select(batch):
        if batch is None:
            return X, y
        return X[batch], y[batch]

    def loss_fn(params, batch):
        Xb, yb = _select(batch)
        z = Xb @ params[0]
        # log(1 + exp(z)) - y*z, stable for large |z|
        return float(np.mean(np.logaddexp(0.0, z) - yb * z))

    def grad_fn(params, batch):
        Xb, yb = _select(batch)
        z = Xb @ params[0]
        return [Xb.T @ (_sigmoid(z) - yb) / len(yb)]

    return Problem(
        name="logistic",
        init_params=[ParamTensor("w", np.zeros(dim))],
        group_specs=[GroupSpec("all", ("w",))],
        loss_fn=loss_fn,
        grad_fn=grad_fn,
        n_samples=n_samples,
        meta={"X": X, "y": y, "w_true": w_true},
    )


def mlp_problem(widths, n_samples: int, seed: int) -> Problem:
    """tanh MLP regressing onto a seeded teacher network, manual backprop.

    ``widths`` is [d_in, hidden..., d_out] with at least one hidden layer.
    Weights form the decayed group; biases are a decay mask (never shrunk).
    Loss is 0.5 * mean squared residual over the batch.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 3:
        raise ValueError("need at least one hidden layer: widths = [in, hidden..., out]")
    if any(w < 1 for w in widths):
        raise ValueError(f"all widths must be >= 1, got {widths}")
    n_layers = len(widths) - 1

    def _draw_net(rng, weight_scale, bias_scale):
        params = []
        for k in range(n_layers):
            fan_in, fan_out = widths[k], widths[k + 1]
            W = weight_scale * rng.normals(fan_in * fan_out).reshape(fan_in, fan_out)
            W /= math.sqrt(fan_in)
            b = bias_scale * rng.normals(fan_out)
            params.append((W, b))
        return params

    teacher_rng = SplitMix64(derive_seed(seed, 0x7EAC))
    teacher = _draw_net(teacher_rng, 1.5, 0.3)
    data_rng = SplitMix64(derive_seed(seed, 0xDA7A))
    X = data_rng.normals(n_samples * widths[0]).reshape(n_samples, widths[0])

    def _forward(layers, inputs):
        h = inputs
        acts = [h]
        for k, (W, b) in enumerate(layers):
            z = h @ W + b
            h = np.tanh(z) if k < n_layers - 1 else z
            acts.append(h)
        return acts

    Y = _forward(teacher, X)[-1]

    init_rng = SplitMix64(derive_seed(seed, 0x111))
    student = _draw_net(init_rng, 0.5, 0.0)
    tensors = []
    weight_names = []
    bias_names = []
    for k, (W, b) in enumerate(student):
        tensors.append(ParamTensor(f"w{k}", W))
        tensors.append(ParamTensor(f"b{k}", b))
        weight_names.append(f"w{k}")
        bias_names.append(f"b{k}")

    def _unpack(params):
        return [(params[2 * k], params[2 * k + 1]) for k in range(n_layers)]

    def _select(batch):
        if batch is None:
            return X, Y
        return X[batch], Y[batch]

    def loss_fn(params, batch):
        Xb, Yb = _select(batch)
        pred = _forward(_unpack(params), Xb)[-1]
        return 0.5 * float(np.sum((pred - Yb) ** 2)) / len(Xb)

    def grad_fn(params, batch):
        Xb, Yb = _select(batch)
        layers = _unpack(params)
        acts = _forward(layers, Xb)
        d = (acts[-1] - Yb) / len(Xb)
        grads = [None] * (2 * n_layers)
        for k in range(n_layers - 1, -1, -1):
            W, _ = layers[k]
            grads[2 * k] = acts[k].T @ d
            grads[2 * k + 1] = d.sum(axis=0)
            if k > 0:
                d = (d @ W.T) * (1.0 - acts[k] ** 2)  # tanh'
        return grads

    return Problem(
        name="mlp",
        init_params=tensors,
        group_specs=[
            GroupSpec("weights", tuple(weight_names), decayed=True),
            GroupSpec("biases", tuple(bias_names), decayed=False),
        ],
        loss_fn=loss_fn,
        grad_fn=grad_fn,
        n_samples=n_samples,
        meta={"widths": widths},
    )


def from_config(cfg: dict) -> Problem:
    """Build a problem from its config mapping (see README for the schema)."""
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    seed = int(cfg.pop("seed", 0))
    if name == "quadratic":
        dim = int(cfg.pop("dim", 64))
        cond = float(cfg.pop("condition_number", 100.0))
        extra = sorted(cfg)
        if extra:
            raise ValueError(f"unknown problem key {extra[0]!r} for quadratic")
        return quadratic_problem(dim, cond, seed)
    if name == "logistic":
        dim = int(cfg.pop("dim", 16))
        n_samples = int(cfg.pop("n_samples", 128))
        extra = sorted(cfg)
        if extra:
            raise ValueError(f"unknown problem key {extra[0]!r} for logistic")
        return logistic_problem(n_samples, dim, seed)
    if name == "mlp":
        layers = cfg.pop("layers", [4, 8, 2])
        n_samples = int(cfg.pop("n_samples", 64))
        extra = sorted(cfg)
        if extra:
            raise ValueError(f"unknown problem key {extra[0]!r} for mlp")
        return mlp_problem(layers, n_samples, seed)
    raise ValueError(f"unknown problem name {name!r}")
