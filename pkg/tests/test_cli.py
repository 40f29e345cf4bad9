import csv
import json

import numpy as np
import pytest

from polysweep import reports
from polysweep.cli import main
from polysweep.discopt import SolveOptions
from polysweep.errors import ScenarioError
from polysweep.scenario import example21_scenario, scenario_from_dict
from polysweep.sweep import analytic_oracle


def write_scenario(tmp_path, **over):
    d = example21_scenario(nu=100).to_dict()
    d.update(over)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(d))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_scenario_round_trip():
    sc = example21_scenario(with_ocp=True)
    again = scenario_from_dict(json.loads(json.dumps(sc.to_dict())))
    assert again.to_dict() == sc.to_dict()


@pytest.mark.parametrize("bad", [
    {"n": 0},
    {"controls": {"builtin": "nope"}},
    {"x0": [1.0]},
    {"extra": 1},
])
def test_scenario_validation(bad):
    d = example21_scenario().to_dict()
    d.update(bad)
    with pytest.raises(ScenarioError):
        scenario_from_dict(d)


def test_knot_scenario_shapes():
    d = {"name": "k", "n": 1, "m": 1, "mesh": {"T": 1, "nu": 2}, "x0": [0.0],
         "controls": {"u_knots": [[[1.0]], [[1.0]], [[1.0]]], "b_knots": [[1.0], [1.0]]}}
    with pytest.raises(ScenarioError):
        scenario_from_dict(d)


def test_simulate_omega2_constant(tmp_path):
    sc = write_scenario(tmp_path, x0=[0.2, 0.5])
    assert main(["simulate", sc, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "trajectory.csv")[1:]
    assert len(rows) == 101
    assert all(r[1:3] == rows[0][1:3] for r in rows)
    assert float(rows[0][1]) == 0.2 and float(rows[0][2]) == 0.5


def test_simulate_levels_convergence_table(tmp_path):
    sc = write_scenario(tmp_path)
    assert main(["simulate", sc, "--mesh-levels", "3", "--out", str(tmp_path)]) == 0
    for k in range(3):
        assert (tmp_path / f"trajectory_level{k}.csv").exists()
    doc = json.loads((tmp_path / "run.json").read_text())
    errs = [r["sup_error"] for r in doc["convergence"]]
    assert errs[0] > errs[1] > errs[2]
    assert doc["reference"] == "closed-form trajectory"
    last = read_csv(tmp_path / "trajectory_level2.csv")[-1]
    assert np.allclose([float(last[1]), float(last[2])], analytic_oracle((2.0, 0.5), 1.0), atol=5e-3)


def test_simulate_is_bit_identical(tmp_path):
    sc = write_scenario(tmp_path)
    main(["simulate", sc, "--out", str(tmp_path / "a")])
    main(["simulate", sc, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert (tmp_path / "a" / "run.json").read_bytes() == (tmp_path / "b" / "run.json").read_bytes()


def test_simulate_invalid_start_exit_2(tmp_path, capsys):
    sc = write_scenario(tmp_path, x0=[0.0, 3.0])
    assert main(["simulate", sc, "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "InfeasibleStart"


def test_simulate_explicit_reports_node(tmp_path, capsys):
    sc = write_scenario(tmp_path)
    assert main(["simulate", sc, "--explicit", "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ExplicitStepInfeasible" and err["node"] is not None


def test_output_dir_from_environment(tmp_path, monkeypatch):
    sc = write_scenario(tmp_path, x0=[0.2, 0.5])
    monkeypatch.setenv("POLYSWEEP_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", sc]) == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()


def test_verify_bounds_empty_and_small(tmp_path):
    assert main(["verify-bounds", "--samples", "0", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "bounds.json").read_text())
    assert doc["properties"] == [] and doc["passed"]
    assert main(["verify-bounds", "--samples", "50", "--seed", "7", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "bounds.json").read_text())
    table = next(p for p in doc["properties"] if p["name"] == "hoffman_example")["table"]
    for row in table:
        assert row["ratio"] == pytest.approx(1 / row["t"], rel=1e-9)


def test_slater_command(tmp_path):
    sc = write_scenario(tmp_path)
    assert main(["slater", sc, "--radius", "1", "--refine", "2", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "slater.json").read_text())
    assert doc["epsilon"] == pytest.approx(0.5, abs=1e-6) and doc["status"] == "uniform_slater"


def test_optimize_budget_exit_5(tmp_path):
    assert main(["optimize", "example21", "--budget", "500", "--out", str(tmp_path)]) == 5
    doc = json.loads((tmp_path / "solution.json").read_text())
    assert doc["budget_exhausted"] and doc["level"] == 0
    sc, k, triple = reports.solution_from_dict(doc)
    assert triple.mesh.nu == 10 and sc.name == "example21"


def test_check_kkt_on_solution(tmp_path, steering_runs):
    inst, res, _ = steering_runs[0]
    doc = reports.solution_to_dict(example21_scenario(with_ocp=True), 0, SolveOptions(), res)
    sol = tmp_path / "solution.json"
    reports.write_json(doc, sol)
    _, _, back = reports.solution_from_dict(reports.read_json(sol))
    assert np.array_equal(back.x, res.triple.x) and np.array_equal(back.u, res.triple.u)
    assert main(["check-kkt", str(sol), "--out", str(tmp_path)]) == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["status"] == "certified" and cert["max_residual"] <= 1e-6
    assert cert["ntc0"] >= 1e-3 and cert["ntc1"] >= 1e-3
    doc["triple"]["x"][5][1] += 0.05
    reports.write_json(doc, sol)
    assert main(["check-kkt", str(sol), "--out", str(tmp_path)]) == 4
    assert json.loads((tmp_path / "certificate.json").read_text())["status"] == "infeasible"


def test_triple_document_is_detached(steering):
    from polysweep.discopt import build_problem
    triple = build_problem(steering, 0).start
    before = triple.x.copy()
    doc = reports.triple_to_dict(triple)
    doc["x"][3][0] += 1.0
    assert np.array_equal(triple.x, before)


def test_missing_scenario_exit_1(tmp_path):
    assert main(["simulate", str(tmp_path / "none.json")]) == 1
