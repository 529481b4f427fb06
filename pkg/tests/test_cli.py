import csv
import json

import numpy as np
import pytest

import mftsgp.cli as cli
import mftsgp.study as st
from mftsgp.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, load_config, main
from mftsgp.kernels import ConditioningError

PEND = ["--set", "pendulum.T=2.0", "--set", "pendulum.n_t=21", "--set", "pendulum.substeps=100"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_bad_override_is_usage_error(tmp_path):
    assert main(["design", "--out-dir", str(tmp_path), "--set", "novalue"]) == EXIT_USAGE


def test_missing_config_is_usage_error(tmp_path):
    assert main(["design", "--out-dir", str(tmp_path), "--config", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_load_config_merges_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 1, "pendulum": {"T": 5.0}}))
    cfg = load_config(str(p), ["pendulum.n_t=11", "methods=[\"simple\"]", "law=haar"])
    assert cfg == {"seed": 1, "pendulum": {"T": 5.0, "n_t": 11}, "methods": ["simple"], "law": "haar"}


def test_pipeline(tmp_path):
    out = str(tmp_path)
    assert main(["design", "--out-dir", out, "--n-low", "20", "--n-high", "5", "--sweeps", "5"]) == EXIT_OK
    pair = json.loads((tmp_path / "pair.json").read_text())
    assert len(pair["inclusion_map"]) == 5
    for level in ("low", "high"):
        design = tmp_path / f"{level}.csv"
        assert main(["simulate", *PEND, "--out-dir", out, "--design", str(design), "--level", level]) == EXIT_OK
    obs = rows(tmp_path / "obs_low.csv")
    assert obs[0][:2] == ["t", "p0"] and len(obs) == 22 and len(obs[0]) == 21
    assert main(["basis", "--out-dir", out, "--obs", str(tmp_path / "obs_low.csv"), "--law", "empirical",
                 "--k", "3", "--n", "3", "--n-high", "5"]) == EXIT_OK
    fit = ["fit", "--out-dir", out, "--designs", out, "--low-obs", str(tmp_path / "obs_low.csv"),
           "--high-obs", str(tmp_path / "obs_high.csv"), "--basis", str(tmp_path / "basis.npz"),
           "--N", "auto", "--n-max", "3"]
    assert main(fit) == EXIT_OK
    assert main(["predict", "--out-dir", out, "--model", str(tmp_path / "model.npz"),
                 "--points", str(tmp_path / "high.csv")]) == EXIT_OK
    pred = rows(tmp_path / "pred_0000.csv")
    assert pred[0] == ["t", "mean", "var", "lo95", "hi95"] and len(pred) == 22
    # a training point reproduces its observed series; with five points in five
    # dimensions the lengths hit their cap and the nugget smooths slightly
    observed = np.array([float(r[1]) for r in rows(tmp_path / "obs_high.csv")[1:]])
    np.testing.assert_allclose([float(r[1]) for r in pred[1:]], observed, atol=1e-3 * np.ptp(observed))
    assert main(["evaluate", "--out-dir", out, "--model", str(tmp_path / "model.npz"),
                 "--points", str(tmp_path / "high.csv"), "--truth", str(tmp_path / "obs_high.csv")]) == EXIT_OK
    ev = rows(tmp_path / "evaluation.csv")
    assert ev[0] == ["t", "q2", "coverage"]


def test_sobol_command(tmp_path):
    assert main(["sobol", "--out-dir", str(tmp_path), "--level", "low", "--n-mc", "1000",
                 "--set", "pendulum.n_t=5"]) == EXIT_OK
    r = rows(tmp_path / "sobol_low.csv")
    assert r[0] == ["t", "S_M", "S_k", "S_theta0", "S_thetadot0", "S_y0", "interactions"]
    assert len(r) == 6


def test_sobol_too_few_samples_is_usage_error(tmp_path):
    assert main(["sobol", "--out-dir", str(tmp_path), "--n-mc", "10"]) == EXIT_USAGE


def test_bench_loo_command(tmp_path):
    assert main(["bench-loo", "--out-dir", str(tmp_path), "--n-x", "8", "--n-t", "6", "--n-test", "20",
                 "--repeats", "1"]) == EXIT_OK
    assert [r[0] for r in rows(tmp_path / "bench_loo.csv")] == ["mode", "simplified", "loop", "full_regularized"]


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ConditioningError("singular")

    monkeypatch.setattr(cli.dz, "nested_maximin_designs", boom)
    assert main(["design", "--out-dir", str(tmp_path)]) == EXIT_NUMERICAL


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(st.OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["design", "--n-low", "8", "--n-high", "3", "--sweeps", "2"]) == EXIT_OK
    assert (tmp_path / "env" / "low.csv").exists()


REPRO = ["--set", "n_low=20", "--set", "n_high=5", "--set", "n_test=30", "--set", "n_t=21",
         "--set", "sweeps=5", "--set", 'methods=["projection"]', "--set", "N=1"] + PEND


def test_reproduce_figure(tmp_path):
    assert main(["reproduce-figure", "--out-dir", str(tmp_path), "--replications", "1", *REPRO]) == EXIT_OK
    assert (tmp_path / "q2_summary.csv").exists()


def test_reproduce_figure_bad_config(tmp_path):
    assert main(["reproduce-figure", "--out-dir", str(tmp_path), "--set", "law=bogus"]) == EXIT_USAGE


def test_reproduce_figure_partial_failure(tmp_path, monkeypatch):
    def fail(cfg, r, *a):
        raise ValueError("bad replication")

    monkeypatch.setattr(st, "run_replication", fail)
    assert main(["reproduce-figure", "--out-dir", str(tmp_path), "--replications", "2", *REPRO]) == EXIT_PARTIAL
