import json
import math

import numpy as np
import pytest

from qngwitness.cli import main
from qngwitness.threshold import ThresholdCurve


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def curve_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "curve_n1.csv"
    code = run(
        ["threshold", "-n", "1", "--grid", "1e-12:1e-3:40", "--out", str(path)]
    )
    assert code == 0
    return str(path)


def test_threshold_csv_format(tmp_path):
    out = tmp_path / "c.csv"
    code = run(["threshold", "-n", "1", "--grid", "1e-8:1e-4:12", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    assert any("version" in l for l in meta)
    assert any("config_hash" in l for l in meta)
    header = next(l for l in lines if not l.startswith("#"))
    assert header == "n,r_n1,r_n_max,beta,V,residual"
    rows = [l for l in lines if not l.startswith("#")][1:]
    assert len(rows) == 12
    r_n1 = [float(r.split(",")[1]) for r in rows]
    r_n = [float(r.split(",")[2]) for r in rows]
    assert r_n1 == sorted(r_n1) and r_n == sorted(r_n)


def test_threshold_default_grid_row_count(tmp_path):
    # contract: the default grid has 200 monotone rows (kept small here by
    # passing the documented default explicitly through --grid)
    out = tmp_path / "c.csv"
    code = run(["threshold", "-n", "1", "--grid", "1e-16:1e-2:200", "--out", str(out)])
    assert code == 0
    curve = ThresholdCurve.from_csv(str(out))
    assert len(curve) == 200


def test_threshold_usage_error_on_bad_order():
    assert run(["threshold", "-n", "0", "--out", "/tmp/x.csv"]) == 3


def test_threshold_json(tmp_path):
    out = tmp_path / "c.json"
    assert run(["threshold", "-n", "2", "--grid", "1e-8:1e-4:10",
                "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert obj["format"] == "qng-threshold-curve"
    assert len(obj["samples"]) == 10


def test_witness_positive_and_no_data(tmp_path, curve_csv, capsys):
    counts = tmp_path / "counts.json"
    counts.write_text(
        json.dumps({"order": 1, "trials": 10**6, "count_n": 30000, "count_n1": 10})
    )
    assert run(["witness", "--in", str(counts), "--curve", curve_csv]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"]["state"] == "positive"
    assert out["verdict"]["depth_db"] > 0.0

    counts.write_text(
        json.dumps({"order": 1, "trials": 1000, "count_n": 0, "count_n1": 0})
    )
    assert run(["witness", "--in", str(counts), "--curve", curve_csv]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"]["state"] == "no-data"


def test_witness_straddling(tmp_path, curve_csv, capsys):
    curve = ThresholdCurve.from_csv(curve_csv)
    r = 1e-5
    thr = curve.threshold_at(r)
    trials = 2000
    counts = tmp_path / "counts.json"
    counts.write_text(
        json.dumps(
            {
                "order": 1,
                "trials": trials,
                "count_n": max(1, int(thr * trials)),
                "count_n1": 0,
            }
        )
    )
    assert run(["witness", "--in", str(counts), "--curve", curve_csv]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"]["state"] == "inconclusive"


def test_depth_model_unbounded(tmp_path, curve_csv, capsys):
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"p1": 1.0, "p2": 0.0, "efficiency": 1.0, "n": 1}))
    assert run(["depth", "--in", str(model), "--curve", curve_csv]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["depth_db"] == "unbounded"


def test_depth_counts_input(tmp_path, curve_csv, capsys):
    counts = tmp_path / "counts.json"
    counts.write_text(
        json.dumps({"order": 1, "trials": 10**6, "count_n": 30000, "count_n1": 10})
    )
    assert run(["depth", "--in", str(counts), "--curve", curve_csv]) == 0
    out = json.loads(capsys.readouterr().out)
    assert isinstance(out["depth_db"], float) and out["depth_db"] > 0.0


def test_simulate_and_witness_pipeline(tmp_path, curve_csv, capsys):
    model = tmp_path / "model.json"
    model.write_text(
        json.dumps(
            {"p1": 0.99, "p2": 0.002, "efficiency": 0.5, "n": 1, "trials": 200000}
        )
    )
    counts = tmp_path / "counts.json"
    assert run(
        ["simulate", "--in", str(model), "--seed", "11", "--out", str(counts)]
    ) == 0
    obj = json.loads(counts.read_text())
    assert obj["format"] == "qng-counts"
    assert obj["count_n"] > 0
    # determinism
    counts2 = tmp_path / "counts2.json"
    run(["simulate", "--in", str(model), "--seed", "11", "--out", str(counts2)])
    assert json.loads(counts2.read_text()) == obj

    assert run(["witness", "--in", str(counts), "--curve", curve_csv]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"]["state"] == "positive"


def test_verify_smoke(tmp_path, capsys):
    report_path = tmp_path / "mc.json"
    code = run(
        ["verify", "-n", "2", "--modes", "1", "--runs", "100000", "--seed", "7",
         "--out", str(report_path)]
    )
    assert code == 0
    obj = json.loads(report_path.read_text())
    assert obj["violations"] == 0
    err = capsys.readouterr().err
    assert "0 violations" in err


def test_path_step_ratio(tmp_path):
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"p1": 0.95, "p2": 0.01, "efficiency": 0.5, "n": 1}))
    out = tmp_path / "path.csv"
    assert run(["path", "--in", str(model), "--step-db", "0.5", "--max-db", "5",
                "--out", str(out)]) == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "step,attenuation_db,eta,r_n,r_n1"
    etas = [float(r.split(",")[2]) for r in rows[1:]]
    for a, b in zip(etas, etas[1:]):
        assert b / a == pytest.approx(10.0 ** (-0.05), rel=1e-9)


def test_usage_error_missing_file(capsys):
    assert run(["witness", "--in", "/nonexistent.json", "--curve", "/also-missing.csv"]) == 2


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0