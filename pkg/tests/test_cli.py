import json
import logging

import pytest

from graphconf.cli import RunConfig, main
from graphconf.errors import ConfigError, MissingEdgeFeatures
from graphconf.io import read_records, read_sets

SMALL = {"n_cal": 60, "n_test": 40, "seed": 7}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run_pipeline(root, synth=SMALL, run=None, method="cp", alpha=None):
    run = run or {"distance": {"oracle_mode": True}}
    sc = write(root / "synth.json", synth)
    rc = write(root / "run.json", run)
    d = {k: str(root / k) for k in ("data", "scores", "model", "sets", "eval")}
    extra = ["--alpha", str(alpha)] if alpha is not None else []
    assert main(["gen", "--config", sc, "--out", d["data"]]) == 0
    assert main(["score", "--config", rc, "--dataset", d["data"], "--out", d["scores"]]) == 0
    assert main(["calibrate", "--config", rc, "--scores", d["scores"], "--out", d["model"], "--method", method, *extra]) == 0
    assert main(["predict", "--config", rc, "--dataset", d["data"], "--scores", d["scores"], "--model", d["model"],
                 "--out", d["sets"], "--method", method]) == 0
    assert main(["eval", "--config", rc, "--sets", d["sets"], "--out", d["eval"], "--method", method]) == 0
    return d


OUTPUTS = ["data/graphs.jsonl", "data/examples.jsonl", "data/config.json", "scores/calibration.csv",
           "scores/candidate_scores.csv", "scores/test_records.csv", "model/model.json", "sets/sets.csv",
           "eval/summary.csv", "eval/summary.txt", "eval/coverage_bins.csv"]


def test_full_pipeline_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    run_pipeline(a)
    run_pipeline(b)
    for rel in OUTPUTS:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_gen_seed_changes_corpus(tmp_path):
    main(["gen", "--config", write(tmp_path / "s1.json", {**SMALL, "seed": 1}), "--out", str(tmp_path / "d1")])
    main(["gen", "--config", write(tmp_path / "s2.json", {**SMALL, "seed": 2}), "--out", str(tmp_path / "d2")])
    assert (tmp_path / "d1/graphs.jsonl").read_bytes() != (tmp_path / "d2/graphs.jsonl").read_bytes()


def test_gen_missing_seed_warns_and_defaults(tmp_path, caplog):
    with caplog.at_level(logging.WARNING, logger="graphconf"):
        assert main(["gen", "--config", write(tmp_path / "s.json", {"n_cal": 5, "n_test": 5}),
                     "--out", str(tmp_path / "d")]) == 0
    assert any("seed" in r.message for r in caplog.records)
    assert json.loads((tmp_path / "d/config.json").read_text())["seed"] == 0


def test_gen_rejects_bad_field(tmp_path, capsys):
    code = main(["gen", "--config", write(tmp_path / "s.json", {"edge_prob": -0.5}), "--out", str(tmp_path / "d")])
    assert code == ConfigError.exit_code
    assert "edge_prob" in capsys.readouterr().err


def test_malformed_json_reports_location(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text('{"seed": 1,\n "n_cal": }')
    assert main(["gen", "--config", str(p), "--out", str(tmp_path / "d")]) == ConfigError.exit_code
    assert "s.json:2:" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path):
    assert main(["gen", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "d")]) == 3


def test_noiseless_truth_scores_are_zero(tmp_path):
    d = run_pipeline(tmp_path, synth={**SMALL, "predictor_accuracy": 1.0})
    assert all(r.score == 0.0 for r in read_records(tmp_path / "scores/calibration.csv"))
    assert all(r.score == 0.0 for r in read_records(tmp_path / "scores/test_records.csv"))
    assert all(s.contains_truth for s in read_sets(tmp_path / "sets/sets.csv"))


def test_edge_feature_weight_without_edge_features(tmp_path, capsys):
    sc = write(tmp_path / "synth.json", SMALL)
    rc = write(tmp_path / "run.json", {"distance": {"beta": 0.33, "gamma": 0.33}})
    main(["gen", "--config", sc, "--out", str(tmp_path / "data")])
    code = main(["score", "--config", rc, "--dataset", str(tmp_path / "data"), "--out", str(tmp_path / "s")])
    assert code == MissingEdgeFeatures.exit_code
    assert "MissingEdgeFeatures" in capsys.readouterr().err


def test_cp_and_zero_scqr_give_identical_sets(tmp_path):
    (tmp_path / "cp").mkdir()
    (tmp_path / "z").mkdir()
    run_pipeline(tmp_path / "cp")
    run_pipeline(tmp_path / "z", run={"distance": {"oracle_mode": True}, "scqr": {"kind": "zero"}}, method="scqr")
    cp_model = json.loads((tmp_path / "cp/model/model.json").read_text())
    z_model = json.loads((tmp_path / "z/model/model.json").read_text())
    assert cp_model["threshold"] == z_model["residual_quantile"]
    assert (tmp_path / "cp/sets/sets.csv").read_bytes() == (tmp_path / "z/sets/sets.csv").read_bytes()
    cp_sum = (tmp_path / "cp/eval/summary.csv").read_text().splitlines()
    z_sum = (tmp_path / "z/eval/summary.csv").read_text().splitlines()
    assert cp_sum[1].split(",")[1:] == z_sum[1].split(",")[1:]


def test_linear_scqr_pipeline_runs(tmp_path):
    run_pipeline(tmp_path, run={"distance": {"oracle_mode": True}, "method": "scqr"}, method="scqr")
    model = json.loads((tmp_path / "model/model.json").read_text())
    assert model["kind"] == "linear" and model["tau"] == pytest.approx(0.9)


def test_tiny_calibration_gives_full_sets(tmp_path):
    d = run_pipeline(tmp_path, synth={"n_cal": 5, "n_test": 20, "seed": 3}, alpha=0.1)
    model = json.loads((tmp_path / "model/model.json").read_text())
    assert model["threshold"] == "inf"
    summary = (tmp_path / "eval/summary.csv").read_text().splitlines()
    row = dict(zip(summary[0].split(","), summary[1].split(",")))
    assert float(row["coverage"]) == 1.0
    assert float(row["mean_reduction_pct"]) == 0.0


def test_predict_rejects_method_mismatch(tmp_path):
    run_pipeline(tmp_path)
    rc = str(tmp_path / "run.json")
    code = main(["predict", "--config", rc, "--dataset", str(tmp_path / "data"), "--scores", str(tmp_path / "scores"),
                 "--model", str(tmp_path / "model"), "--out", str(tmp_path / "x"), "--method", "scqr"])
    assert code == ConfigError.exit_code


def test_oracle_check(tmp_path, capsys):
    sc = write(tmp_path / "synth.json", {"n_cal": 20, "n_test": 20, "seed": 5})
    rc = write(tmp_path / "run.json", {})
    main(["gen", "--config", sc, "--out", str(tmp_path / "data")])
    assert main(["oracle-check", "--config", rc, "--dataset", str(tmp_path / "data"), "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r/oracle_check.json").read_text())
    assert rep["pairs_checked"] == 40 and rep["passed"]
    assert rep["max_descent_violation"] <= 1e-12 and rep["max_sandwich_excess"] <= 1e-10
    assert rep["max_invariance_gap"] <= 1e-12


def test_oracle_check_on_empty_eligible_set(tmp_path, capsys):
    sc = write(tmp_path / "synth.json", {"n_cal": 3, "n_test": 3, "seed": 5, "n_nodes_range": [9, 9], "edge_prob": 0.5})
    rc = write(tmp_path / "run.json", {})
    main(["gen", "--config", sc, "--out", str(tmp_path / "data")])
    capsys.readouterr()
    assert main(["oracle-check", "--config", rc, "--dataset", str(tmp_path / "data"), "--out", str(tmp_path / "r")]) == 0
    assert "0 pairs checked" in capsys.readouterr().out
    assert json.loads((tmp_path / "r/oracle_check.json").read_text())["skipped_too_large"] == 6


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"alpha": 1.5})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"scqr": {"kind": "zero", "depth": 3}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"mystery": 1})
    assert RunConfig.from_dict({"distance": {"structure": "sp"}}).distance.structure.value == "shortest_path"
