import csv
import io
import json
import re
import shutil
import subprocess
from pathlib import Path

import pytest

from flexagg.cli import main
from flexagg.controllers import offline_optimal_flow
from flexagg.scenario_io import load_scenario, save_scenario
from flexagg.synth import example1, fleet_scenario

ROOT = Path(__file__).resolve().parents[1]
EX1 = ROOT / "scenarios" / "example1.json"


def strip_stamp(text: str) -> str:
    return re.sub(r'"timestamp": "[^"]*"', '"timestamp": ""', text)


@pytest.fixture
def flat_ex1(tmp_path):
    p = tmp_path / "flat.json"
    save_scenario(example1(), p)
    return p


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_run_example1(tmp_path):
    assert main(["run", "--scenario", str(EX1), "--controller", "ppc", "--beta", "1", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["mpe"] == 0 and doc["schema"] == 1 and doc["trajectory"] == [0, 0, 1]
    assert (tmp_path / "steps.csv").read_text().startswith("t,u_kw,delivered_kwh,cost_increment,residual_kwh\n")


def test_run_console_script(tmp_path):
    exe = shutil.which("flexctl")
    if exe is None:
        pytest.skip("console script not installed")
    proc = subprocess.run([exe, "run", "--scenario", str(EX1), "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and "feasible" in proc.stdout


def test_missing_scenario(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
    assert "not found" in capsys.readouterr().err


def test_budget_exit(tmp_path):
    p = tmp_path / "fleet.json"
    save_scenario(fleet_scenario(0), p)
    assert main(["run", "--scenario", str(p), "--node-budget", "10", "--out", str(tmp_path / "o")]) == 3


def test_infeasible_exit(tmp_path):
    doc = json.loads(EX1.read_text())
    doc["aggregator"]["sessions"][0]["energy_kwh"] = 3.0
    doc["action_levels_kw"] = [0, 0.5]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--scenario", str(p), "--controller", "offline-brute", "--out", str(tmp_path / "o")]) == 2


def test_permissive_deadend_still_reports_infeasible(tmp_path):
    doc = json.loads(EX1.read_text())
    # 0.4 kWh steps can never sum to exactly 1 kWh
    doc["action_levels_kw"] = [0, 0.4]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    out = tmp_path / "o"
    assert main(["run", "--scenario", str(p), "--permissive-deadend", "--out", str(out)]) == 2
    assert len(json.loads((out / "report.json").read_text())["events"]) == 3


def test_validation_errors_exit_1(tmp_path, capsys):
    doc = json.loads(EX1.read_text())
    doc["action_levels_kw"] = [1, 0]
    p = tmp_path / "v.json"
    p.write_text(json.dumps(doc))
    assert main(["validate", "--scenario", str(p)]) == 1
    assert json.loads(capsys.readouterr().out)["violations"][0]["rule"] == "levels not increasing"
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path)]) == 1


def test_validate_ok(capsys):
    assert main(["validate", "--scenario", str(EX1), "--check-feasible"]) == 0
    assert json.loads(capsys.readouterr().out)["trajectory_count"] == "3"


def test_mef_example1(capsys):
    assert main(["mef", "--scenario", str(EX1)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["counts"] == ["2", "1"]
    assert doc["probs"] == pytest.approx([2 / 3, 1 / 3])
    assert doc["capacity_nats"] == pytest.approx(1.0986, abs=1e-4)


def test_mef_dead_end(capsys):
    assert main(["mef", "--scenario", str(EX1), "--prefix", "1,1"]) == 2
    assert json.loads(capsys.readouterr().out)["dead_end"] is True


def test_mef_unconstrained_uniform(tmp_path, capsys):
    doc = json.loads(EX1.read_text())
    doc["aggregator"] = {"kind": "unconstrained"}
    doc["action_levels_kw"] = [0, 1, 2]
    p = tmp_path / "u.json"
    p.write_text(json.dumps(doc))
    assert main(["mef", "--scenario", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["probs"] == pytest.approx([1 / 3] * 3)


def test_sessions_csv_override(tmp_path, capsys):
    s = tmp_path / "s.csv"
    s.write_text("session_id,arrival,departure,energy_kwh,peak_rate_kw\nx,2,3,1.0,1.0\n")
    assert main(["mef", "--scenario", str(EX1), "--sessions", str(s)]) == 0
    assert json.loads(capsys.readouterr().out)["counts"] == ["2", "0"]


def test_sweep_shape_and_flags(flat_ex1, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--scenario", str(flat_ex1), "--betas", "0.001,1,1000", "--out", str(out)]) == 0
    table = rows((out / "sweep.csv").read_text())
    assert len(table) == 4 and table[-1]["label"] == "offline-brute"
    assert all(r["feasible"] == "True" for r in table)
    assert all(r["within_5pct"] == "True" for r in table[:3])


def test_sweep_flags_gap(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--scenario", str(EX1), "--betas", "0.001,1,1000", "--out", str(out)]) == 0
    table = rows((out / "sweep.csv").read_text())
    assert [r["within_5pct"] for r in table[:3]] == ["False"] * 3


def test_compare_curves(tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--scenario", str(EX1), "--betas", "0.1,10", "--out", str(out)]) == 0
    table = rows((out / "compare.csv").read_text())
    mpc0 = [r for r in table if r["curve"] == "mpc" and float(r["param"]) == 0.0][0]
    assert float(mpc0["cost"]) == 0.0 and float(mpc0["mpe"]) == 1.0
    off1 = [r for r in table if r["curve"] == "offline" and float(r["param"]) == 1.0][0]
    sc, _ = load_scenario(EX1)
    assert float(off1["cost"]) == float(offline_optimal_flow(sc).cost)
    assert all(float(r["mpe"]) == 0.0 for r in table if r["curve"].startswith("ppc"))
    summary = json.loads((out / "compare_summary.json").read_text())
    assert summary["instances"][0]["mpc_cost_gamma1"] == 1.0


def test_generate(tmp_path):
    assert main(["generate", "--count", "1", "--seed", "4", "--out", str(tmp_path)]) == 0
    sc, _ = load_scenario(tmp_path / "fleet-4.json")
    assert len(sc.aggregator.sessions) == 30 and sc.horizon == 24


def test_literal_mpe_flag(tmp_path):
    out = tmp_path / "lit"
    assert main(["run", "--scenario", str(EX1), "--literal-mpe", "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["mpe"] == pytest.approx(1 - 1 / 3) and doc["meta"]["mpe_formula"] == "literal"


@pytest.mark.parametrize(
    "argv, files",
    [
        (["run", "--controller", "mpc"], ["report.json", "steps.csv"]),
        (["run", "--provider", "sampled", "--samples", "4", "--seed", "3"], ["report.json", "steps.csv"]),
        (["sweep", "--betas", "0.1,1,10"], ["sweep.csv", "sweep_meta.json"]),
        (["compare", "--betas", "1"], ["compare.csv", "compare_summary.json"]),
    ],
)
def test_outputs_are_deterministic(tmp_path, argv, files):
    a, b = tmp_path / "a", tmp_path / "b"
    main(argv + ["--scenario", str(EX1), "--out", str(a)])
    main(argv + ["--scenario", str(EX1), "--out", str(b)])
    for f in files:
        assert strip_stamp((a / f).read_text()) == strip_stamp((b / f).read_text())
