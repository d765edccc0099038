import json
from pathlib import Path

import pytest

from huberdecay import cli

RUN_CFG = {
    "problem": {"name": "quadratic", "dim": 12, "condition_number": 30.0, "seed": 5},
    "optimizer": "adamw",
    "lr": 0.01,
    "weight_decay": 0.05,
    "total_steps": 40,
    "seed": 3,
    "metric_every": 2,
}


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(RUN_CFG))
    return path


def _run_dirs(out: Path):
    return sorted(p for p in out.iterdir() if p.is_dir())


def test_run_writes_artifacts(cfg_path, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    (run_dir,) = _run_dirs(out)
    assert (run_dir / "config.json").exists()
    assert (run_dir / "metrics.csv").exists()
    assert (run_dir / "summary.json").exists()
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["aborted"] is False
    assert summary["config"]["optimizer"] == "adamw"
    # atomic writes leave no temp litter
    assert not list(run_dir.glob("*.tmp"))


def test_run_repeat_is_byte_identical(cfg_path, tmp_path):
    cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
    cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "b")])
    (dir_a,) = _run_dirs(tmp_path / "a")
    (dir_b,) = _run_dirs(tmp_path / "b")
    assert dir_a.name == dir_b.name
    assert (dir_a / "metrics.csv").read_bytes() == (dir_b / "metrics.csv").read_bytes()


def test_run_charts_flag(cfg_path, tmp_path):
    out = tmp_path / "out"
    cli.main(["run", "--config", str(cfg_path), "--out", str(out), "--set", "charts=true"])
    (run_dir,) = _run_dirs(out)
    assert (run_dir / "charts" / "loss.svg").exists()
    assert (run_dir / "charts" / "sparsity.svg").exists()


def test_override_supersedes_file_and_is_echoed(cfg_path, tmp_path):
    out = tmp_path / "out"
    assert cli.main([
        "run", "--config", str(cfg_path), "--out", str(out),
        "--set", "optimizer=adamhd_prox", "--set", "threshold.c=1.5", "--seed", "9",
    ]) == 0
    (run_dir,) = _run_dirs(out)
    echoed = json.loads((run_dir / "summary.json").read_text())["config"]
    assert echoed["optimizer"] == "adamhd_prox"
    assert echoed["threshold"]["c"] == 1.5
    assert echoed["seed"] == 9
    assert run_dir.name.endswith("-s9")


def test_unknown_key_rejected_with_diagnostic(cfg_path, tmp_path, capsys):
    code = cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path),
                     "--set", "bogus_knob=1"])
    assert code == cli.EXIT_CONFIG
    assert "bogus_knob" in capsys.readouterr().err


def test_malformed_config_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "malformed" in capsys.readouterr().err


def test_missing_config_rejected(tmp_path):
    missing = tmp_path / "missing.json"
    assert cli.main(["run", "--config", str(missing), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_aborted_run_exit_code(tmp_path):
    cfg = dict(RUN_CFG, lr=1e6, grad_clip_norm=None, total_steps=400, optimizer="adam")
    path = tmp_path / "diverge.json"
    path.write_text(json.dumps(cfg))
    code = cli.main(["run", "--config", str(path), "--out", str(tmp_path / "out")])
    assert code in (cli.EXIT_OK, cli.EXIT_ABORTED)  # divergence depends on dynamics
    if code == cli.EXIT_ABORTED:
        (run_dir,) = _run_dirs(tmp_path / "out")
        assert json.loads((run_dir / "summary.json").read_text())["aborted"] is True


def test_out_root_from_environment(cfg_path, tmp_path, monkeypatch):
    monkeypatch.setenv("HUBERDECAY_OUT", str(tmp_path / "envout"))
    assert cli.main(["run", "--config", str(cfg_path)]) == 0
    assert _run_dirs(tmp_path / "envout")


def test_prox_check_passes_and_names_single_case(capsys):
    assert cli.main(["prox-check", "--cases", "200", "--seed", "1", "--tol", "1e-8"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["cases_run"] == 200
    assert cli.main(["prox-check", "--cases", "1", "--seed", "4"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["cases_run"] == 1
    assert {"y", "tau", "delta"} == set(report["worst_case_input"])


def test_prox_check_zero_tolerance_fails(capsys):
    # floating-point search cannot be exact
    assert cli.main(["prox-check", "--cases", "50", "--tol", "0"]) == cli.EXIT_CHECK
    assert json.loads(capsys.readouterr().out)["passed"] is False


@pytest.mark.parametrize("target", ["huber", "quadratic", "logistic", "mlp"])
def test_grad_check_targets(target, capsys):
    tol = "1e-5" if target == "mlp" else "1e-6"
    assert cli.main(["grad-check", "--target", target, "--cases", "5", "--tol", tol]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_compare_identical_configs_ratio_one(cfg_path, tmp_path, capsys):
    code = cli.main([
        "compare", str(cfg_path), str(cfg_path), "--target-loss", "1.0",
        "--out", str(tmp_path / "out"),
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["comparison"]["ratio"] == 1.0
    compare_files = list((tmp_path / "out").glob("compare-*.json"))
    assert len(compare_files) == 1


def test_compare_rejects_differing_problems(cfg_path, tmp_path, capsys):
    other = dict(RUN_CFG, problem=dict(RUN_CFG["problem"], seed=6))
    other_path = tmp_path / "other.json"
    other_path.write_text(json.dumps(other))
    code = cli.main(["compare", str(cfg_path), str(other_path), "--target-loss", "1.0",
                     "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    assert "problem" in capsys.readouterr().err


def test_sweep_expands_cartesian_product(tmp_path):
    sweep_cfg = {
        "base": dict(RUN_CFG, total_steps=20),
        "sweep": {"optimizer": ["adamw", "adamhd_euler"], "seed": [1, 2]},
    }
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(sweep_cfg))
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    index = json.loads((out / "sweep_index.json").read_text())
    assert len(index) == 4
    assert len(_run_dirs(out)) == 4
    assert {entry["overrides"]["optimizer"] for entry in index} == {"adamw", "adamhd_euler"}


def test_sweep_parallel_jobs(tmp_path):
    sweep_cfg = {
        "base": dict(RUN_CFG, total_steps=15),
        "sweep": {"seed": [1, 2, 3, 4]},
    }
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(sweep_cfg))
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(path), "--out", str(out), "--jobs", "2"]) == 0
    assert len(_run_dirs(out)) == 4


def test_sweep_rejects_bad_spec(tmp_path):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"base": RUN_CFG, "sweep": {"seed": 5}}))
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    path.write_text(json.dumps({"base": RUN_CFG, "extra": {}}))
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
