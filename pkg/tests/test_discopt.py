import numpy as np
import pytest

from _oracles import steering_grid_oracle
from polysweep.control import Mesh, constant_path
from polysweep.discopt import (
    DiscreteTriple,
    Reference,
    SolveOptions,
    SweepOCP,
    TerminalCost,
    build_problem,
    evaluate_cost,
    feasibility_report,
    solve,
)
from polysweep.errors import BudgetExhausted, ReferenceMissing
from polysweep.geometry import Polyhedron

BOX = Polyhedron([[1, 0], [-1, 0], [0, 1], [0, -1]], [3.0, 3.0, 3.0, 3.0])


def resting_ocp(phi=TerminalCost("linear", [0.0, 0.0])):
    mesh = Mesh.uniform(1.0, 16)
    path = constant_path(mesh, [[0.0, 1.0], [1.0, 0.0]], [1.0, 1.0])
    path = type(path)(path.mesh, path.u_knots, path.b_knots, normalized_delta=0.0)
    return SweepOCP(phi, BOX, Reference(path, np.zeros((17, 2))), 1.0, 0.1, 2)


def reference_triple(inst):
    ref = inst.scenario.reference
    return DiscreteTriple(ref.mesh, ref.path.u_knots, ref.path.b_knots, ref.states)


def test_build_problem_level0(steering):
    inst = build_problem(steering, 0)
    assert inst.nu == 10
    assert np.array_equal(inst.start.x[0], [2.0, 0.5])
    assert np.array_equal(inst.start.u[0], steering.reference.path.u_knots[0])
    assert feasibility_report(inst, inst.start).residuals["initial"] == 0.0


def test_delta_halves_per_level(steering):
    assert [steering.delta_k(k) for k in range(3)] == [0.1, 0.05, 0.025]
    assert build_problem(steering, 1).delta == 0.05


def test_xi_is_endpoint_gap(steering):
    inst = build_problem(steering, 1)
    gap = np.linalg.norm(inst.start.x[-1] - steering.reference.states[-1])
    assert inst.xi == pytest.approx(gap, abs=1e-15)
    assert np.allclose(inst.omega_inflated.offsets, steering.target_set.offsets + inst.xi)


def test_reference_missing(steering):
    with pytest.raises(ReferenceMissing):
        build_problem(steering, 7)


def test_cost_at_reference_is_terminal_value(steering):
    inst = build_problem(steering, 6)  # level mesh equals the reference mesh
    tr = reference_triple(inst)
    assert evaluate_cost(inst, tr) == pytest.approx(steering.terminal_cost.value(tr.x[-1]), abs=1e-13)


def test_constant_triple_zero_reference_derivative():
    ocp = resting_ocp(TerminalCost("quadratic", [0.5, -0.5]))
    inst = build_problem(ocp, 1)
    tr = DiscreteTriple(inst.mesh, inst.start.u, inst.start.b, np.zeros((5, 2)))
    assert evaluate_cost(inst, tr) == pytest.approx(0.25)


def test_velocity_perturbation_adds_half_h_v_squared(steering):
    inst = build_problem(steering, 6)
    tr = reference_triple(inst)
    h = inst.mesh.steps[-1]
    v = 0.7
    b = tr.b.copy()
    b[-1, 0] += h * v  # changes only the last step's b-velocity
    bumped = DiscreteTriple(tr.mesh, tr.u, b, tr.x)
    assert evaluate_cost(inst, bumped) - evaluate_cost(inst, tr) == pytest.approx(0.5 * h * v * v, rel=1e-9)


def test_feasibility_flags(steering):
    inst = build_problem(steering, 0)
    tr = inst.start
    assert feasibility_report(inst, tr, 1e-8).feasible
    u = tr.u.copy()
    u[3] *= 1.5
    assert "u_const" in feasibility_report(inst, DiscreteTriple(tr.mesh, u, tr.b, tr.x)).flagged()
    x = tr.x.copy()
    x[-1] = [3.0, 1.0]
    rep = feasibility_report(inst, DiscreteTriple(tr.mesh, tr.u, tr.b, x))
    assert "endpoint" in rep.flagged()
    assert rep.values["endpoint_exact_excess"] > 0


def test_solve_at_resting_reference_returns_zero_cost():
    inst = build_problem(resting_ocp(), 0)
    res = solve(inst, SolveOptions(rounds=1, polish=False))
    assert res.cost == 0.0


def test_solve_budget_and_determinism(steering):
    inst = build_problem(steering, 0)
    outs = []
    for _ in range(2):
        with pytest.raises(BudgetExhausted) as err:
            solve(inst, SolveOptions(seed=3, budget=1500))
        outs.append(err.value.result)
    a, b = outs
    assert a.budget_exhausted
    assert np.array_equal(a.triple.u, b.triple.u) and np.array_equal(a.triple.x, b.triple.x)
    assert a.cost <= evaluate_cost(inst, inst.start)


def test_solve_never_worsens_feasibility(steering_runs):
    for inst, res, _ in steering_runs.values():
        start = feasibility_report(inst, inst.start, 1e-6).max_residual
        assert res.report.max_residual <= start + 1e-6


def test_penalty_schedule_residuals_nonincreasing(steering_runs):
    inst, res, _ = steering_runs[0]
    rounds = res.diagnostics["rounds"]
    weights = [r["weight"] for r in rounds]
    assert weights == [10.0 * 10 ** i for i in range(5)]
    pens = [r["penalty"] for r in rounds]
    assert all(b <= a + 1e-12 for a, b in zip(pens, pens[1:]))


def test_solution_beats_grid_oracle(steering_runs):
    inst, res, _ = steering_runs[0]
    best, count = steering_grid_oracle(inst)
    assert count > 0
    assert res.cost <= best + 1e-8
