import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from grcv.cli import COLUMNS, KNOWN_SIZES, RunConfig, build_parser, config_from_args, main, split_for
from helpers import libsvm_text


def write_data(path, seed=0, m=45, separable=False):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, 2))
    if separable:
        y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
        X[:, 0] = y * (1.0 + np.abs(X[:, 0]))
        X[:, 1] *= 0.05
    else:
        y = np.sign(X[:, 0] + 0.7 * rng.normal(size=m))
        y[y == 0] = 1
    path.write_text(libsvm_text(X, y))
    return path


@pytest.fixture
def data(tmp_path):
    return write_data(tmp_path / "toy.txt")


def read_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize("method, k", [("gr-cv", "5"), ("in-cv", "1"), ("grid", "27")])
def test_run_methods(data, capsys, method, k):
    assert main(["run", "--data", str(data), "--method", method, "-T", "3"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(COLUMNS)
    (row,) = read_rows(out)
    assert row["Dataset"] == "toy" and row["k"] == k
    assert row["Method"] == {"gr-cv": "GR-CV", "in-cv": "In-CV", "grid": "G-S"}[method]
    assert "." in row["E_t(%)"] and len(row["E_t(%)"].split(".")[1]) == 2


def test_bad_T_exits_2(data, capsys):
    assert main(["run", "--data", str(data), "-T", "1"]) == 2
    assert "T must be ≥ 2" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["run", "--data", "/nonexistent/file"],
        ["run", "--data", "{data}", "--method", "bogus"],
        ["run", "--data", "{data}", "--l1", "40", "--l2", "40"],
        ["run", "--data", "{data}", "--sigma", "2"],
        ["run", "--data", "{data}", "--grid", "1,0.1"],
        ["frobnicate"],
    ],
)
def test_config_errors_exit_2(data, argv):
    assert main([a.format(data=data) for a in argv]) == 2


def test_malformed_file_exits_2(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 1:0.5\n-1 2-3\n")
    assert main(["run", "--data", str(bad)]) == 2


def test_json_output(data, tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", "--data", str(data), "--format", "json", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["rows"][0]["k"] == 5
    assert doc["details"][0]["trace"]["k"] == 5


def test_env_override(data, capsys, monkeypatch):
    monkeypatch.setenv("GRCV_METHOD", "grid")
    monkeypatch.setenv("GRCV_GRID", "0.1,1")
    assert main(["run", "--data", str(data)]) == 0
    assert read_rows(capsys.readouterr().out)[0]["k"] == "6"
    # command line wins over the environment
    assert main(["run", "--data", str(data), "--method", "in-cv"]) == 0
    assert read_rows(capsys.readouterr().out)[0]["k"] == "1"


def test_env_bad_value_exits_2(data, monkeypatch):
    monkeypatch.setenv("GRCV_SEED", "abc")
    assert main(["run", "--data", str(data)]) == 2


def test_data_dir_lookup(tmp_path, capsys, monkeypatch):
    write_data(tmp_path / "mini.txt")
    monkeypatch.setenv("GRCV_DATA_DIR", str(tmp_path))
    assert main(["run", "--data", "mini", "--method", "grid"]) == 0
    assert read_rows(capsys.readouterr().out)[0]["Dataset"] == "mini"


def test_report_is_deterministic(data, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["run", "--data", str(data), "--seed", "7"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_split_defaults():
    ns = build_parser().parse_args(["run", "--data", "heart"])
    cfg = config_from_args(ns)

    class Fake:
        def __len__(self):
            return 270

    spec = split_for(cfg, Fake())
    assert (spec.l1, spec.l2) == KNOWN_SIZES["heart"]
    cfg = RunConfig(data="other.txt", l2=10)
    spec = split_for(cfg, Fake())
    assert (spec.l1, spec.l2) == (260, 10)
    spec = split_for(RunConfig(data="x"), Fake())
    assert (spec.l1, spec.l2) == (189, 81)


def test_sweep_folds_rows(data, capsys):
    assert main(["sweep-folds", "--data", str(data), "--T-list", "2,3,4,5", "--grid", "0.1,1,10"]) == 0
    rows = read_rows(capsys.readouterr().out)
    assert len(rows) == 12
    assert [r["T"] for r in rows] == [str(T) for T in (2, 3, 4, 5) for _ in range(3)]


def test_sweep_single_T_matches_run(data, capsys):
    assert main(["sweep-folds", "--data", str(data), "--T-list", "3"]) == 0
    sweep = read_rows(capsys.readouterr().out)
    for method, row in zip(("gr-cv", "in-cv", "grid"), sweep):
        assert main(["run", "--data", str(data), "--method", method]) == 0
        (single,) = read_rows(capsys.readouterr().out)
        assert {k: v for k, v in row.items() if k != "T"} == single


def test_sweep_separable_zero_test_error(tmp_path, capsys):
    path = write_data(tmp_path / "sep.txt", separable=True)
    assert main(["sweep-folds", "--data", str(path), "--T-list", "2,3"]) == 0
    rows = read_rows(capsys.readouterr().out)
    assert all(r["E_t(%)"] == "0.00" for r in rows)


def test_diagnose_passes(tmp_path, capsys):
    path = write_data(tmp_path / "d20.txt", m=20)
    assert main(["diagnose", "--data", str(path), "--l1", "20", "--l2", "0", "-T", "2", "--samples", "30"]) == 0
    (row,) = read_rows(capsys.readouterr().out)
    assert row["independent"] == "30" and row["passed"] == "True"


def test_diagnose_fault_hook(tmp_path, capsys):
    path = write_data(tmp_path / "d20.txt", m=20)
    argv = ["diagnose", "--data", str(path), "--l1", "20", "--l2", "0", "-T", "2", "--samples", "5", "--inject-fault"]
    assert main(argv + ["--format", "json"]) == 1
    doc = json.loads(capsys.readouterr().out)
    assert doc["dependent"] == 5 and doc["passed"] is False


def test_module_entry_point(data):
    proc = subprocess.run(
        [sys.executable, "-m", "grcv", "run", "--data", str(data), "--method", "grid", "--grid", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.startswith("Dataset,")


def test_empty_file_exits_2(tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["run", "--data", str(empty)]) == 2
    assert "cannot read" in capsys.readouterr().err
