import json
from dataclasses import replace

import numpy as np
import pytest

import cssid
from cssid.cli import main
from cssid.harness import DEFAULT_VALIDATION_STEPS, MethodSpec, fit_method, free_run, rmse
from cssid.simulator import VALIDATION_SEED_OFFSET


def test_simulate_writes_record_and_scenario(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--scenario", "compartmental-ti", "--seed", "123",
                 "--out", str(out)]) == 0
    assert (out / "trajectory.csv").exists()
    assert json.loads((out / "scenario.json").read_text())["seed"] == 123


def test_identify_writes_three_by_three_matrix(tmp_path):
    sim = tmp_path / "sim"
    est_path = tmp_path / "est.json"
    assert main(["simulate", "--scenario", "compartmental-ti", "--out", str(sim)]) == 0
    assert main(["identify", "--method", "cls", "--data", str(sim),
                 "--out", str(est_path)]) == 0
    data = json.loads(est_path.read_text())
    A = np.asarray(data["A_hat"])
    assert A.shape == (3, 3)
    assert data["method"] == "CLS"
    assert data["B_hat"] is None
    assert data["constraint_residual"] <= 1e-10


def test_pipeline_round_trip_matches_in_process_bit_for_bit(tmp_path):
    sim = tmp_path / "sim"
    est_path = tmp_path / "est.json"
    val_path = tmp_path / "val.json"
    seed = 777
    assert main(["simulate", "--scenario", "compartmental-ti", "--seed", str(seed),
                 "--out", str(sim)]) == 0
    assert main(["identify", "--method", "cls", "--data", str(sim),
                 "--out", str(est_path)]) == 0
    assert main(["validate", "--estimate", str(est_path),
                 "--scenario", str(sim / "scenario.json"), "--out", str(val_path)]) == 0
    via_cli = json.loads(val_path.read_text())["rmse"]

    spec = cssid.with_seed(cssid.scenario_compartmental_ti(), seed)
    reg = cssid.build_regression(cssid.simulate_scenario(spec))
    est, _ = fit_method(reg, MethodSpec("cls"), spec)
    n_val = DEFAULT_VALIDATION_STEPS
    truth = cssid.simulate_scenario(replace(spec, N=n_val), kind="val",
                                    seed=seed + VALIDATION_SEED_OFFSET,
                                    with_noise=False)
    xh = free_run(est, truth.x[0], n_val)
    in_process = rmse(truth.x[1:], xh[1:])
    assert via_cli == in_process.tolist()


def test_montecarlo_summary_schema(tmp_path):
    out = tmp_path / "mc"
    assert main(["montecarlo", "--scenario", "compartmental-ti", "--runs", "1",
                 "--methods", "ls,cls", "--base-seed", "5", "--out", str(out)]) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0] == "method,state,rmse_mean,rmse_std,constraint_violation_max,failures"
    assert len(lines) == 1 + 2 * 3
    assert (out / "histograms.csv").exists()


def test_montecarlo_switching_scenario(tmp_path):
    out = tmp_path / "mc_tv"
    assert main(["montecarlo", "--scenario", "compartmental-tv", "--runs", "1",
                 "--methods", "rwls,rwcls", "--base-seed", "5", "--n-val", "10",
                 "--out", str(out)]) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 3 * 3
    assert lines[1].startswith("rwls@mode1,")


def test_bias_command(tmp_path):
    out = tmp_path / "bias.csv"
    assert main(["bias", "--scenario", "compartmental-ti", "--runs", "5",
                 "--out", str(out)]) == 0
    assert out.read_text().startswith("component,")


def test_unknown_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", "compartmental-ti", "--frobnicate", "1"])
    assert exc.value.code == 2


def test_runtime_failure_prints_machine_readable_error(tmp_path, capsys):
    code = main(["identify", "--method", "cls", "--data", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "est.json")])
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert "error" in payload and "message" in payload
