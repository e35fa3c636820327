from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from deltareach.cli import (
    DELTA_ENV,
    EXIT_BUDGET,
    EXIT_ERROR,
    EXIT_SAT,
    EXIT_UNSAT,
    UsageError,
    main,
    parse_range,
    parse_sets,
)
from helpers import model_path

BALL = str(model_path("bouncing_ball"))

RAMP = """
var x in [0, 10];
param p in [0, 1];
mode 1 { d/dt[x] = p; }
init mode 1 with x = 0;
"""

PLANE = """
var x in [-10, 10];
param p1 in [0, 1];
param p2 in [0, 4];
mode 1 { d/dt[x] = 3.5 - 2 * p1 - p2; }
init mode 1 with x = 0;
"""


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(DELTA_ENV, raising=False)


def _json(capsys) -> dict:
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_parse_range_forms():
    assert parse_range("[0.9, 1.1]") == (parse_range("0.9")[0], parse_range("1.1")[0])
    assert parse_range("1:2") == (1, 2)
    assert parse_range("30.02") == (parse_range("30.02")[0],) * 2
    for bad in ("[2,1]", "abc", "1:"):
        with pytest.raises(UsageError):
            parse_range(bad)
    assert parse_sets(["eps=[0,0.25]"]) == {"eps": (0, parse_range("0.25")[0])}
    with pytest.raises(UsageError):
        parse_sets(["eps"])


def test_check_delta_sat_writes_default_witness(capsys):
    code = main(["check", BALL, "--goal", "x <= 0.1", "-k", "0", "--json"])
    assert code == EXIT_SAT
    rec = _json(capsys)
    assert set(rec) == {"model", "query", "initial_state", "var_count", "verdict", "seconds"}
    assert rec["verdict"] == "delta-sat"
    assert rec["var_count"] == 7
    assert "x = 10" in rec["initial_state"] or "x >= 10" in rec["initial_state"]
    assert Path("bouncing_ball.witness").read_text().startswith("witness-trace 1")


def test_check_text_output(capsys):
    assert main(["check", BALL, "--goal", "x <= 0.1", "-k", "0", "--witness", "w.txt"]) == EXIT_SAT
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "delta-sat"
    assert "path 1 (k = 0)" in out
    assert Path("w.txt").is_file()


def test_check_unsat(capsys):
    assert main(["check", BALL, "--goal", "x >= 10.5", "-k", "2", "--json"]) == EXIT_UNSAT
    assert _json(capsys)["verdict"] == "unsat"
    assert not Path("bouncing_ball.witness").exists()


def test_check_budget(capsys):
    assert main(["check", BALL, "--goal", "x <= 0.1", "-k", "0", "--time-limit", "0", "--json"]) == EXIT_BUDGET
    assert _json(capsys)["verdict"] == "budget-exceeded"


def test_set_overrides_parameters(capsys):
    # with alpha = 0.5 the first apex is 2.5, so 3 is out of reach after one bounce
    args = ["check", BALL, "--goal", "mode=2 && x >= 3 && v <= 0", "-k", "1", "--json"]
    assert main(args) == EXIT_SAT
    capsys.readouterr()
    assert main(args + ["--set", "alpha=0.5"]) == EXIT_UNSAT
    assert "alpha = 0.5" in _json(capsys)["initial_state"]


@pytest.mark.parametrize("argv", [
    ["check", "missing.model", "--goal", "mode=1"],
    ["check", BALL, "--goal", "mode=9"],
    ["check", BALL, "--goal", "z >= 1"],
    ["check", BALL, "--goal", "x >= 1", "--set", "nope=1"],
    ["check", BALL, "--goal", "x >= 1", "--set", "g=[2,1]"],
    ["check", BALL, "--goal", "x >= 1", "--delta", "0"],
    ["check", BALL, "--goal", "x >= 1", "--workers", "0"],
    ["check", BALL],
    ["frobnicate"],
])
def test_usage_errors_exit_3(argv, capsys):
    assert main(argv) == EXIT_ERROR
    assert capsys.readouterr().err


def test_invalid_model_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.model"
    bad.write_text("var x in [0, 1];\nmode 1 { d/dt[x] = y; }\n")
    assert main(["check", str(bad), "--goal", "mode=1"]) == EXIT_ERROR
    assert "2:" in capsys.readouterr().err


def test_delta_environment_variable(monkeypatch, capsys):
    monkeypatch.setenv(DELTA_ENV, "not-a-number")
    assert main(["check", BALL, "--goal", "x <= 0.1", "-k", "0"]) == EXIT_ERROR
    assert DELTA_ENV in capsys.readouterr().err
    # an explicit flag wins over the environment
    assert main(["check", BALL, "--goal", "x <= 0.1", "-k", "0", "--delta", "1e-3"]) == EXIT_SAT
    monkeypatch.setenv(DELTA_ENV, "-1")
    assert main(["check", BALL, "--goal", "x <= 0.1", "-k", "0"]) == EXIT_ERROR
    monkeypatch.setenv(DELTA_ENV, "0.001")
    assert main(["check", BALL, "--goal", "x <= 0.1", "-k", "0"]) == EXIT_SAT


def test_synth_json(tmp_path, capsys):
    m = tmp_path / "ramp.model"
    m.write_text(RAMP)
    code = main(["synth", str(m), "--goal", "x >= 0.5", "-k", "0", "--M", "1", "--param", "p",
                 "--range", "0:1", "--delta", "1e-3", "--json"])
    assert code == EXIT_SAT
    rec = _json(capsys)
    assert 0.499 <= rec["threshold"] <= 0.501


def test_synth_budget_reports_bracket(tmp_path, capsys):
    m = tmp_path / "ramp.model"
    m.write_text(RAMP)
    code = main(["synth", str(m), "--goal", "x >= 0.5", "-k", "0", "--M", "1", "--param", "p",
                 "--range", "0:1", "--time-limit", "0"])
    assert code == EXIT_BUDGET
    assert "bracket [0, 1]" in capsys.readouterr().out


def test_sweep_json(tmp_path, capsys):
    m = tmp_path / "plane.model"
    m.write_text(PLANE)
    code = main(["sweep", str(m), "--goal", "x >= 0.5", "-k", "0", "--M", "1", "--p1", "p1",
                 "--samples", "0,0.5,1", "--p2", "p2", "--range", "0:4", "--delta", "1e-3", "--json"])
    assert code == EXIT_SAT
    rec = _json(capsys)
    assert rec["a"] == pytest.approx(2.0, rel=0.01)
    assert rec["c"] == pytest.approx(3.0, rel=0.01)


def _ball_witness(capsys) -> str:
    assert main(["check", BALL, "--goal", "x <= 0.1", "-k", "0", "--witness", "ball.w"]) == EXIT_SAT
    capsys.readouterr()
    return "ball.w"


def test_trace_csv(capsys):
    w = _ball_witness(capsys)
    assert main(["trace", BALL, w, "--duration", "5", "--step", "0.01", "--out", "ball.csv"]) == EXIT_SAT
    raw = Path("ball.csv").read_bytes()
    assert b"\r\n" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["t", "mode", "x", "v"]
    assert len(rows) == 1 + 501
    assert float(rows[1][2]) == 10.0 and rows[1][1] == "1"
    xs = [float(r[2]) for r in rows[1:]]
    assert min(xs) >= -1e-6
    assert {r[1] for r in rows[1:]} == {"1", "2"}
    # the first apex after the bounce is alpha^2 * 10
    apex = max(float(r[2]) for r in rows[1:] if 1.6 < float(r[0]) < 4.0)
    assert apex == pytest.approx(8.1, abs=0.05)


def test_trace_stdout_matches_file(capsys):
    w = _ball_witness(capsys)
    main(["trace", BALL, w, "--duration", "1", "--step", "0.5", "--out", "a.csv"])
    main(["trace", BALL, w, "--duration", "1", "--step", "0.5"])
    assert capsys.readouterr().out == Path("a.csv").read_text()


@pytest.mark.parametrize("extra", [["--step", "0"], ["--step", "-1"], ["--step", "0.1", "--period", "0"]])
def test_trace_rejects_bad_steps(extra, capsys):
    w = _ball_witness(capsys)
    assert main(["trace", BALL, w, "--duration", "1", *extra]) == EXIT_ERROR


def test_trace_missing_witness(capsys):
    assert main(["trace", BALL, "none.w", "--duration", "1", "--step", "0.1"]) == EXIT_ERROR


def test_periodic_stimulus_gives_two_upstrokes(capsys):
    bcf = str(model_path("bcf"))
    assert main(["check", bcf, "--goal", "mode=4", "--set", "eps=[0.9,1.1]", "--witness", "bcf.w"]) == EXIT_SAT
    capsys.readouterr()
    assert main(["trace", bcf, "bcf.w", "--duration", "1000", "--step", "1", "--period", "500",
                 "--out", "bcf.csv"]) == EXIT_SAT
    rows = list(csv.DictReader(Path("bcf.csv").read_text().splitlines()))
    u = [float(r["u"]) for r in rows]
    ups = sum(1 for a, b in zip(u, u[1:]) if a < 0.5 <= b)
    assert ups == 2


def test_bench_single_case(capsys):
    assert main(["bench", "--case", "ball-floor"]) == EXIT_SAT
    out = capsys.readouterr().out
    assert out.startswith("PASS ball-floor")
    assert "1/1 cases match" in out


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "deltareach", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("check", "synth", "sweep", "trace", "bench"):
        assert sub in res.stdout
