import json

import numpy as np
import pytest

from flatbisim.cli import main
from flatbisim.model import ENV_SAT_CONFLICTS, SCHEMA, demo_path
from flatbisim.ode import trajectory_from_csv, trajectory_to_csv

RELAY = str(demo_path("relay_demo"))
LATTICE = str(demo_path("lattice_demo"))
SOCIAL = str(demo_path("social"))
CIRCADIAN = str(demo_path("circadian"))


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for var in ("FLATBISIM_CELL_BUDGET", "FLATBISIM_WINDOW_BUDGET", ENV_SAT_CONFLICTS):
        monkeypatch.delenv(var, raising=False)


def test_abstract_summary_and_dot(tmp_path, capsys):
    dot = tmp_path / "a.dot"
    assert main(["abstract", RELAY, "--dot", str(dot)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "mode,plant,states,edges"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["q0", "bnf"], ["q1", "bnf"], ["*", "product"]]
    assert dot.read_text().startswith("digraph")


def test_check_exit_codes_and_dimacs(tmp_path, capsys):
    assert main(["check", RELAY, "--spec", "safety", "--bound", "3"]) == 0
    assert capsys.readouterr().out.startswith("result,UNSAT\nbound,3\n")
    cnf = tmp_path / "f.cnf"
    assert main(["check", RELAY, "--spec", "safety", "--bound", "4", "--dimacs", str(cnf)]) == 1
    assert "result,SAT" in capsys.readouterr().out
    first = cnf.read_text().splitlines()[0]
    assert first.startswith("c varmap sha256:")


def test_assess_default_bound_from_model(capsys):
    assert main(["assess", RELAY, "--spec", "safety", "--no-timing"]) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["bound"] == 4 and out["verdict"] == "vulnerable"
    assert out["witness"]["steps"][-1]["label"] == "collapsed"
    assert out["concretized_path"]["validated"] is False
    assert "timing" not in out


def test_assess_report_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["assess", RELAY, "--spec", "safety", "--report", str(p), "--no-timing"]) == 1
    assert a.read_bytes() == b.read_bytes()
    assert capsys.readouterr().out.splitlines() == ["vulnerable,bound=4"] * 2


def test_assess_outputs_trace_and_plot(tmp_path):
    trace, png = tmp_path / "w.csv", tmp_path / "w.png"
    code = main(["assess", LATTICE, "--spec", "safety", "--report", str(tmp_path / "r.json"),
                 "--trace", str(trace), "--plot", str(png)])
    assert code == 1
    assert trace.read_text().startswith("step,state,name,mode,label,loop_back,x0,x1\n")
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_assess_not_vulnerable_writes_no_trace(tmp_path, capsys):
    trace = tmp_path / "w.csv"
    assert main(["assess", RELAY, "--spec", "safety", "--bound", "2", "--trace", str(trace)]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "not-vulnerable-at-bound"
    assert not trace.exists()


def test_assess_bound_max(capsys):
    assert main(["assess", RELAY, "--spec", "safety", "--bound", "0", "--bound-max", "8",
                 "--no-timing"]) == 1
    assert json.loads(capsys.readouterr().out)["statistics"]["bounds_tried"] == [0, 1, 2, 3, 4]


def test_timeout_exit_code(monkeypatch, capsys):
    monkeypatch.setenv(ENV_SAT_CONFLICTS, "1")
    assert main(["assess", RELAY, "--spec", "safety"]) == 3
    assert json.loads(capsys.readouterr().out)["verdict"] == "timeout"
    assert main(["check", RELAY, "--spec", "safety"]) == 3


@pytest.mark.parametrize("argv", [
    [],
    ["assess", RELAY],
    ["frobnicate", RELAY],
    ["assess", RELAY, "--spec", "nope"],
    ["assess", "/no/such/model.json", "--spec", "safety"],
    ["simulate", RELAY, "--plant", "c"],
    ["simulate", SOCIAL, "--plant", "nope"],
])
def test_usage_and_model_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_malformed_model_reports_where(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": SCHEMA, "plants": {"c": {"type": "bnf", "n": 0}}}))
    assert main(["abstract", str(bad)]) == 2
    assert "plants.c" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "Exit codes" in capsys.readouterr().out


@pytest.mark.parametrize("model,plant,flat,states", [
    (SOCIAL, "social", "E", ["P", "M"]),
    (CIRCADIAN, "circadian", "C_N", ["M_P", "P_0", "P_1", "P_2", "C"]),
])
def test_simulate_recover_round_trip(tmp_path, capsys, model, plant, flat, states):
    sim, rec, png = tmp_path / "sim.csv", tmp_path / "rec.csv", tmp_path / "rec.png"
    assert main(["simulate", model, "--plant", plant, "--csv", str(sim),
                 "--plot", str(tmp_path / "sim.png")]) == 0
    assert main(["recover", model, "--plant", plant, "--input", str(sim), "--csv", str(rec),
                 "--plot", str(png)]) == 0
    err = capsys.readouterr().err
    assert f"max_rel_error,{states[0]}," in err
    t_in, c_in = trajectory_from_csv(sim.read_text())
    t_out, c_out = trajectory_from_csv(rec.read_text())
    np.testing.assert_array_equal(t_in, t_out)
    # interior samples, away from the finite-difference edges
    mid = slice(10, -10)
    for name in states:
        ok = np.isfinite(c_out[name][mid])
        assert ok.mean() > 0.95
        ref = c_in[name][mid][ok]
        assert np.max(np.abs(c_out[name][mid][ok] - ref) / np.maximum(np.abs(ref), 1e-3)) < 1e-3
    assert png.exists()


def test_recover_rejects_nonuniform_time(tmp_path, capsys):
    t = np.array([0.0, 0.1, 0.2, 0.35, 0.4, 0.5])
    f = tmp_path / "x.csv"
    f.write_text(trajectory_to_csv(t, {"E": np.ones_like(t)}))
    assert main(["recover", SOCIAL, "--plant", "social", "--input", str(f)]) == 2
    assert "uniform" in capsys.readouterr().err


def test_recover_missing_flat_column(tmp_path, capsys):
    t = np.linspace(0, 1, 11)
    f = tmp_path / "x.csv"
    f.write_text(trajectory_to_csv(t, {"P": np.ones_like(t)}))
    assert main(["recover", SOCIAL, "--plant", "social", "--input", str(f)]) == 2
    assert "'E'" in capsys.readouterr().err
