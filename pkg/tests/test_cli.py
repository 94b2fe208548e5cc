import csv
import io
import json
import subprocess
import sys

import pytest

from windtree.cli import fmt, run, to_json


def call(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok_and_trapping(capsys):
    code, out, _ = call(capsys, "validate", "--theta-tan", "1/1", "--a", "0.4", "--r", "0.1", "--json")
    assert code == 0
    d = json.loads(out)
    assert d["ok"] and d["in_square_regime"] and d["regime"] == "InfiniteWithTypeII"
    code, out, _ = call(capsys, "validate", "--theta-tan", "1/1", "--a", "0.8", "--r", "0.1")
    assert code == 2 and "TrappingConfiguration" in out


def test_config_errors(capsys):
    assert call(capsys, "tail", "--preset", "tail", "--n", "100")[0] == 2  # missing --seed
    assert call(capsys, "tail", "--preset", "tail", "--n", "0", "--seed", "1")[0] == 2
    assert call(capsys, "corridors", "--theta-tan", "1/x", "--a", "0.3", "--r", "0.1")[0] == 2
    assert call(capsys, "nonsense")[0] == 2
    code, _, err = call(capsys, "trace", "--preset", "finite", "--seed", "1", "--n", "5")
    assert code == 2 and "TrappingConfiguration" in err


def test_corridors_table(capsys):
    code, out, _ = call(capsys, "corridors", "--theta-tan", "1/1", "--a", "0.35355339", "--r", "0.05")
    assert code == 0 and out.startswith("4 open corridors")
    code, out, _ = call(capsys, "corridors", "--preset", "finite", "--json")
    assert code == 0
    d = json.loads(out)
    assert d["count"] == 0 and d["regime"] == "FiniteHorizon"


def test_trace_csv(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, _, _ = call(capsys, "trace", "--preset", "canonical", "--seed", "3", "--n", "50", "--out", str(path))
    assert code == 0
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["n", "cell_x", "cell_y", "x", "y", "t", "s", "phi", "end_kind", "corridor_class"]
    assert len(rows) == 52


@pytest.mark.parametrize("cmd,extra,header", [
    ("tail", ["--n", "20000"], ["class", "bin_lo", "bin_hi", "count", "ccdf"]),
    ("msd", ["--k", "64", "--n", "100"], ["n", "msd", "stderr", "k_samples"]),
    ("corr", ["--m", "5000", "--jmax", "50"], ["j", "c_j", "stderr", "partial_sum"]),
    ("moment", ["--n", "20000"], ["R", "moment", "stderr"]),
    ("ctime", ["--k", "16", "--t-max", "100"], ["t", "msd_t", "ratio"]),
])
def test_csv_headers(capsys, cmd, extra, header):
    code, out, _ = call(capsys, cmd, "--preset", "tail", "--seed", "5", *extra)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == header and len(rows) > 2


def test_msd_first_row(capsys):
    _, out, _ = call(capsys, "msd", "--preset", "tail", "--seed", "5", "--k", "64", "--n", "100")
    assert out.splitlines()[1] == "0,0,0,64"


def test_tail_json(capsys):
    code, out, _ = call(capsys, "tail", "--preset", "tail", "--seed", "42", "--n", "200000", "--json")
    assert code == 0
    d = json.loads(out)
    assert d["seed"] == 42 and d["n_samples"] == 200000
    assert set(d["fits"]) >= {"Horizontal", "Vertical", "ObliquePlus", "ObliqueMinus"}
    assert "runtime" not in out


def test_insufficient_data_exit(capsys):
    code, _, err = call(capsys, "tail", "--preset", "tail", "--seed", "1", "--n", "1000", "--json")
    assert code == 0  # per-class failures are reported inside the JSON
    code, _, err = call(capsys, "corr", "--preset", "tail", "--seed", "1", "--m", "20", "--jmax", "50")
    assert code == 3 and "InsufficientData" in err


@pytest.mark.parametrize("argv", [
    ["tail", "--preset", "tail", "--seed", "9", "--n", "150000", "--json"],
    ["msd", "--preset", "tail", "--seed", "9", "--k", "200", "--n", "300"],
])
def test_byte_identical_across_workers(argv):
    outs = []
    for workers in ("1", "2", "1"):
        r = subprocess.run([sys.executable, "-m", "windtree", *argv, "--workers", workers],
                           capture_output=True, check=True)
        outs.append(r.stdout)
    assert outs[0] == outs[1] == outs[2]


def test_timing_goes_to_stderr(capsys):
    code, out, err = call(capsys, "validate", "--preset", "tail", "--json", "--timing")
    assert code == 0 and "runtime_s=" in err and "runtime" not in out


def test_number_formatting():
    assert fmt(0.1) == "0.10000000000000001"
    assert json.loads(to_json({"x": float("nan"), "y": [1, 2.5]})) == {"x": None, "y": [1, 2.5]}
