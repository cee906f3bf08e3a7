import csv
import json
import math
import time
from importlib import resources

import pytest

from wate import cli
from wate.data import save_csv
from wate.errors import SandwichUnobtainable
from wate.simulation import generate

HEADER = "model,n,effect,scenario,estimand,method,arbias_pct,rmse,esd,median_se,median_re,cp,failures,M,R,seed"


@pytest.fixture(scope="module")
def model2_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "m2.csv"
    save_csv(generate(2, 400, "het", 17).dataset, path)
    return path


def nhanes_path():
    return str(resources.files("wate") / "data" / "nhanes_like.csv")


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    return code


def test_estimate_json_smoke(model2_csv, tmp_path):
    out = tmp_path / "r.json"
    code = run(["estimate", "--input", model2_csv, "--estimands", "ato", "--methods", "boot2,wb",
                "--replicates", 50, "--seed", 3, "--format", "json", "--out", out])
    assert code == 0
    rep = json.loads(out.read_text())
    assert set(rep) == {"version", "config", "diagnostics", "results"}
    cells = rep["results"]["ato"]
    assert set(cells) == {"boot2", "wbexp2"}
    for rec in cells.values():
        assert math.isfinite(rec["se"]) and rec["se"] > 0
        assert 0 <= rec["p_value"] <= 1
        assert rec["ci_lower"] < rec["estimate"] < rec["ci_upper"]
    assert rep["config"]["methods"] == ["boot2", "wbexp2"]
    assert set(rep["diagnostics"]["asmd"]["ato"]) == {f"X{i}" for i in range(1, 8)}


def test_config_error_before_work(model2_csv, tmp_path, capsys):
    out = tmp_path / "never.csv"
    code = run(["estimate", "--input", model2_csv, "--methods", "boot1", "--replicates", 1, "--out", out])
    assert code != 0
    assert not out.exists()
    assert "ConfigError" in capsys.readouterr().err
    for bad in (["--alpha", 1.5], ["--estimands", "foo"], ["--methods", "boot9"], ["--scale", "mad"]):
        assert run(["estimate", "--input", model2_csv, "--out", out, *bad]) != 0
        assert not out.exists()
    assert run(["simulate", "--mc-reps", 1, "--out", out]) != 0
    assert not list(tmp_path.iterdir())


def test_data_errors_exit_nonzero(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("treatment,outcome,x\n0,1,2\n2,1,2\n")
    assert run(["estimate", "--input", p, "--methods", "sand"]) != 0
    assert "NonBinaryTreatment" in capsys.readouterr().err


def test_estimate_byte_identical_across_threads(model2_csv, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    common = ["estimate", "--input", model2_csv, "--replicates", 20, "--seed", 5]
    assert run(common + ["--out", a, "--threads", 1]) == 0
    assert run(common + ["--out", b, "--threads", 3]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# wate ")
    assert lines[1].startswith("# config ")
    rows = list(csv.DictReader(lines[2:]))
    results = [r for r in rows if r["record"] == "result"]
    assert len(results) == 5 * 7


def test_sandwich_failure_is_a_cell_record(model2_csv, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SandwichUnobtainable("block A11 is singular")

    monkeypatch.setattr(cli, "sandwich_variance", boom)
    out = tmp_path / "r.json"
    assert run(["estimate", "--input", model2_csv, "--estimands", "ate,ato", "--methods", "sand,boot2",
                "--replicates", 10, "--format", "json", "--out", out]) == 0
    rep = json.loads(out.read_text())
    assert rep["results"]["ate"]["sand"]["error"] == "SandwichUnobtainable"
    assert math.isfinite(rep["results"]["ate"]["boot2"]["se"])


def test_simulate_minimal_cell(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--model", 2, "--scenario", "A1", "--mc-reps", 2, "--replicates", 4,
            "--seed", 1, "--n-super", 200_000]
    t0 = time.perf_counter()
    assert run(args + ["--out", a]) == 0
    assert time.perf_counter() - t0 < 10
    assert run(args + ["--out", b, "--threads", 2]) == 0
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text().splitlines()
    assert text[0] == HEADER
    rows = list(csv.DictReader(text))
    assert len(rows) == 5 * 7
    for r in rows:
        assert 0.0 <= float(r["cp"]) <= 1.0
        assert r["M"] == "2" and r["R"] == "4" and r["seed"] == "1"


def test_simulate_json(tmp_path):
    out = tmp_path / "s.json"
    assert run(["simulate", "--mc-reps", 2, "--replicates", 3, "--methods", "sand,wb", "--estimands", "ate",
                "--n", 300, "--n-super", 200_000, "--format", "json", "--out", out]) == 0
    rep = json.loads(out.read_text())
    assert [r["method"] for r in rep["rows"]] == ["sand", "wbexp2"]
    assert rep["rows"][0]["n"] == 300


def test_truth_homogeneous(tmp_path):
    out = tmp_path / "t.csv"
    assert run(["truth", "--effect", "homogeneous", "--n-super", 200_000, "--out", out]) == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert len(rows) == 4 * 5
    for r in rows:
        assert float(r["value"]) == pytest.approx(4.0, abs=0.01)


def test_truth_with_pseudo(tmp_path):
    out = tmp_path / "t.json"
    assert run(["truth", "--model", 2, "--estimands", "ate", "--scenario", "A1,A4", "--n-super", 200_000,
                "--format", "json", "--out", out]) == 0
    rows = json.loads(out.read_text())["rows"]
    assert [(r["kind"], r["scenario"]) for r in rows] == [("true", ""), ("pseudo", "A1"), ("pseudo", "A4")]


def test_stdout_when_no_out(capsys):
    assert run(["truth", "--model", 1, "--estimands", "ate", "--n-super", 100_000]) == 0
    assert capsys.readouterr().out.startswith("model,effect,estimand")


def test_packaged_dataset_loads():
    from wate.data import load_csv

    ds = load_csv(nhanes_path(), "fish", "log2_mercury")
    assert ds.n == 1107 and ds.p == 8
