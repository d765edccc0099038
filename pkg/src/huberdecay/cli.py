"""Command-line entry point: runs, sweeps, comparisons, and oracle checks.

Exit codes are a stable contract for CI: 0 success, 1 run aborted
(non-finite loss), 2 config error, 3 check failure. All artifacts are
written atomically (temp file + rename).
"""

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import harness, models, oracle
from .harness import ConfigError
from .regularizer import huber_grad, regularizer_value
from .rng import SplitMix64, derive_seed

EXIT_OK = 0
EXIT_ABORTED = 1
EXIT_CONFIG = 2
EXIT_CHECK = 3


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are fine, e.g. optimizer=adamhd_prox
    return key, value


def apply_overrides(cfg: dict, sets) -> dict:
    """Apply dotted-path key=value overrides after file parsing."""
    out = json.loads(json.dumps(cfg))  # deep copy, JSON-only content
    for item in sets or ():
        key, value = _parse_override(item)
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return out


def run_id_for(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canon.encode()).hexdigest()[:12]
    return f"{digest}-s{resolved['seed']}"


def _out_root(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("HUBERDECAY_OUT", "runs"))


def _load_run_config(path, sets, seed):
    raw = _load_json(path)
    raw = apply_overrides(raw, sets)
    if seed is not None:
        raw["seed"] = int(seed)
    return harness.run_config_from_dict(raw)


def _write_run_artifacts(out_root: Path, config, result) -> Path:
    resolved = config.to_dict()
    run_dir = out_root / run_id_for(resolved)
    atomic_write_text(run_dir / "config.json", json.dumps(resolved, indent=2) + "\n")
    atomic_write_text(run_dir / "metrics.csv", harness.metrics_csv_text(result))
    atomic_write_text(
        run_dir / "summary.json", json.dumps(harness.summary_dict(result), indent=2) + "\n"
    )
    if config.charts:
        atomic_write_text(run_dir / "charts" / "loss.svg", harness.render_loss_chart(result))
        atomic_write_text(
            run_dir / "charts" / "sparsity.svg", harness.render_sparsity_chart(result)
        )
    return run_dir


def cmd_run(args) -> int:
    config = _load_run_config(args.config, args.set, args.seed)
    result = harness.run(config)
    run_dir = _write_run_artifacts(_out_root(args), config, result)
    status = "aborted" if result.aborted else "ok"
    final = result.records[-1]
    print(f"{status} run_id={run_dir.name} steps={result.steps_run} "
          f"final_loss={final.loss!r} -> {run_dir}")
    return EXIT_ABORTED if result.aborted else EXIT_OK


def _sweep_cell(payload):
    raw, out_root = payload
    config = harness.run_config_from_dict(raw)
    result = harness.run(config)
    run_dir = _write_run_artifacts(Path(out_root), config, result)
    return run_dir.name, result.aborted


def cmd_sweep(args) -> int:
    spec = _load_json(args.config)
    if not isinstance(spec, dict) or set(spec) - {"base", "sweep"}:
        raise ConfigError("sweep config must contain only 'base' and 'sweep' keys")
    base = apply_overrides(spec.get("base", {}), args.set)
    if args.seed is not None:
        base["seed"] = int(args.seed)
    sweep = spec.get("sweep", {})
    if not isinstance(sweep, dict) or not all(isinstance(v, list) for v in sweep.values()):
        raise ConfigError("'sweep' must map dotted keys to value lists")
    keys = sorted(sweep)
    cells = []
    for combo in itertools.product(*(sweep[k] for k in keys)):
        sets = [f"{k}={json.dumps(v)}" for k, v in zip(keys, combo)]
        raw = apply_overrides(base, sets)
        harness.run_config_from_dict(raw)  # validate before fanning out
        cells.append((raw, dict(zip(keys, combo))))

    out_root = _out_root(args)
    payloads = [(raw, str(out_root)) for raw, _ in cells]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_sweep_cell, payloads))
    else:
        outcomes = [_sweep_cell(p) for p in payloads]

    index = [
        {"run_id": run_id, "overrides": overrides, "aborted": aborted}
        for (run_id, aborted), (_, overrides) in zip(outcomes, cells)
    ]
    atomic_write_text(out_root / "sweep_index.json", json.dumps(index, indent=2) + "\n")
    aborted = sum(1 for entry in index if entry["aborted"])
    print(f"sweep: {len(index)} cells, {aborted} aborted -> {out_root}")
    return EXIT_ABORTED if aborted else EXIT_OK


def cmd_compare(args) -> int:
    config_a = _load_run_config(args.config_a, args.set, args.seed)
    config_b = _load_run_config(args.config_b, args.set, args.seed)
    if config_a.problem != config_b.problem:
        raise ConfigError(
            "compare requires identical 'problem' sections (including the problem seed); "
            f"got {config_a.problem!r} vs {config_b.problem!r}"
        )
    result_a = harness.run(config_a)
    result_b = harness.run(config_b)
    record = harness.matched_loss_compare(
        result_a.records, result_b.records, args.target_loss,
        thresholds=config_a.pruning_thresholds,
    )
    payload = {
        "run_a": run_id_for(config_a.to_dict()),
        "run_b": run_id_for(config_b.to_dict()),
        "comparison": record.to_dict(),
    }
    out_root = _out_root(args)
    out_path = out_root / f"compare-{payload['run_a']}-vs-{payload['run_b']}.json"
    atomic_write_text(out_path, json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))
    if result_a.aborted or result_b.aborted:
        return EXIT_ABORTED
    return EXIT_OK


def cmd_prox_check(args) -> int:
    if args.cases < 1:
        raise ConfigError(f"--cases must be >= 1, got {args.cases}")
    report = oracle.prox_check(args.cases, args.seed, args.tol)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_CHECK


def _flatten_problem(problem):
    shapes = [t.value.shape for t in problem.init_params]
    sizes = [t.value.size for t in problem.init_params]

    def unpack(x):
        out = []
        offset = 0
        for shape, size in zip(shapes, sizes):
            out.append(x[offset:offset + size].reshape(shape))
            offset += size
        return out

    def f(x):
        return problem.loss(unpack(x), None)

    def grad_f(x):
        return np.concatenate([np.ravel(g) for g in problem.grad(unpack(x), None)])

    x0 = np.concatenate([np.ravel(t.value) for t in problem.init_params])
    return f, grad_f, x0


def cmd_grad_check(args) -> int:
    if args.cases < 1:
        raise ConfigError(f"--cases must be >= 1, got {args.cases}")
    rng = SplitMix64(derive_seed(args.seed, 0x6C))
    if args.target == "huber":
        delta = 1.0
        dim = 16
        points = []
        while len(points) < args.cases:
            x = 6.0 * rng.uniforms(dim) - 3.0
            if np.any(np.abs(np.abs(x) - delta) < 1e-4):
                continue  # keep clear of the kinks
            points.append(x)
        report = oracle.grad_check(
            lambda x: regularizer_value(x, delta),
            lambda x: np.array([huber_grad(v, delta) for v in x]),
            points,
            h=1e-6,
            tolerance=args.tol,
        )
    else:
        if args.target == "quadratic":
            problem = models.quadratic_problem(8, 50.0, args.seed)
        elif args.target == "logistic":
            problem = models.logistic_problem(48, 6, args.seed)
        else:
            problem = models.mlp_problem([3, 5, 2], 32, args.seed)
        f, grad_f, x0 = _flatten_problem(problem)
        points = [x0 + 0.5 * rng.normals(x0.size) for _ in range(args.cases)]
        report = oracle.grad_check(f, grad_f, points, h=1e-6, tolerance=args.tol)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="huberdecay",
        description="Desk-scale optimizer experiments with decoupled Huber weight decay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one run cell and write its artifacts")
    run_p.add_argument("--config", required=True, help="run config JSON path")
    run_p.add_argument("--out", help="output root (default $HUBERDECAY_OUT or ./runs)")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override, repeatable")
    run_p.add_argument("--seed", type=int, help="override the run seed")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="fan out a cartesian sweep of run cells")
    sweep_p.add_argument("--config", required=True, help="sweep config JSON with base/sweep keys")
    sweep_p.add_argument("--out", help="output root")
    sweep_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep_p.add_argument("--seed", type=int)
    sweep_p.add_argument("--jobs", type=int, default=1, help="worker pool size")
    sweep_p.set_defaults(func=cmd_sweep)

    cmp_p = sub.add_parser("compare", help="matched-loss comparison of two run configs")
    cmp_p.add_argument("config_a", help="first run config JSON")
    cmp_p.add_argument("config_b", help="second run config JSON")
    cmp_p.add_argument("--target-loss", type=float, required=True)
    cmp_p.add_argument("--out", help="output root")
    cmp_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override applied to both configs")
    cmp_p.add_argument("--seed", type=int, help="run seed applied to both configs")
    cmp_p.set_defaults(func=cmd_compare)

    prox_p = sub.add_parser("prox-check", help="certify the closed-form prox against the oracle")
    prox_p.add_argument("--cases", type=int, default=10000)
    prox_p.add_argument("--seed", type=int, default=0)
    prox_p.add_argument("--tol", type=float, default=1e-8)
    prox_p.set_defaults(func=cmd_prox_check)

    grad_p = sub.add_parser("grad-check", help="finite-difference check of a gradient")
    grad_p.add_argument("--target", choices=("huber", "quadratic", "logistic", "mlp"),
                        default="huber")
    grad_p.add_argument("--cases", type=int, default=100, help="number of sample points")
    grad_p.add_argument("--seed", type=int, default=0)
    grad_p.add_argument("--tol", type=float, default=1e-6)
    grad_p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
