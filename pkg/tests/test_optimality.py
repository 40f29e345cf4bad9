import numpy as np
import pytest

from _oracles import coderivative_brute_force, corrupt_dynamics, random_coderivative_case
from polysweep.control import ControlPath, Mesh
from polysweep.discopt import Reference, SweepOCP, TerminalCost, build_problem
from polysweep.errors import InconsistentInput, Infeasible, PLICQViolation
from polysweep.geometry import Polyhedron
from polysweep.optimality import coderivative_member, p_set_element, q_pattern, recover_multipliers

U1 = [[0.0, 1.0]]
BOX = Polyhedron([[1, 0], [-1, 0], [0, 1], [0, -1]], [3.0, 3.0, 3.0, 3.0])


def test_q_pattern_cases():
    assert q_pattern(U1, [1.0], [0, 0], [0.0], [1, 1]) == ["zero"]
    assert q_pattern(U1, [1.0], [0, 1], [0.0], [0, 1]) == ["nonneg"]
    assert q_pattern(U1, [1.0], [0, 1], [0.0], [0, -1]) == ["zero"]
    assert q_pattern(U1, [1.0], [0, 1], [2.0], [3, 0]) == ["free"]
    with pytest.raises(InconsistentInput):
        q_pattern(U1, [1.0], [0, 1], [2.0], [0, 1])


def test_p_set_element_examples():
    assert np.allclose(p_set_element(U1, [1.0], [0, 1], [0, 2], [3, 0]), [2.0])
    with pytest.raises(Infeasible):
        p_set_element(U1, [1.0], [0, 1], [0, 2], [0, 1])
    p = p_set_element([[0, 1], [1, 0]], [1.0, 1.0], [1, 1], [1, 1], [0, 0])
    assert np.allclose(p, [1.0, 1.0])


def test_p_set_element_rejects_non_normal_v():
    with pytest.raises(InconsistentInput):
        p_set_element(U1, [1.0], [0, 1], [0, -1], [1, 0])


def test_coderivative_member_construction():
    ok, cert = coderivative_member(U1, [1.0], [0, 1], [0, 1], [3, 0], ([0, 0], [[3, 0]], [0]))
    assert ok and np.allclose(cert.p, [1.0]) and np.allclose(cert.q, [0.0])


def test_coderivative_member_wrong_sign():
    # active, p = 0, <u, y> > 0 requires q >= 0; q = -1 is rejected
    ok, cert = coderivative_member(U1, [1.0], [0, 1], [0, 0], [0, 1], ([0, -1], [[0, -1]], [1]))
    assert not ok and cert is None
    ok, _ = coderivative_member(U1, [1.0], [0, 1], [0, 0], [0, 1], ([0, 1], [[0, 1]], [-1]))
    assert ok


def test_coderivative_zero_element():
    ok, cert = coderivative_member(U1, [1.0], [0, 1], [0, 0], [0, 0], ([0, 0], [[0, 0]], [0]))
    assert ok and np.all(cert.q == 0)


def test_coderivative_random_against_brute_force(rng):
    accepted = rejected = 0
    for _ in range(60):
        u, b, x, v, y, cand = random_coderivative_case(rng)
        try:
            ok, cert = coderivative_member(u, b, x, v, y, cand)
        except Infeasible:
            ok, cert = False, None
        if ok:
            accepted += 1
            assert np.allclose(cert.x_part, cand[0], atol=1e-10, rtol=0)
            assert np.allclose(cert.u_part, cand[1], atol=1e-10, rtol=0)
            assert np.allclose(cert.b_part, cand[2], atol=1e-10, rtol=0)
        else:
            rejected += 1
            assert not coderivative_brute_force(u, b, x, v, y, cand)
    assert accepted > 0 and rejected > 0


def halfspace_ocp(b_of_t, x0, m_second=None):
    mesh = Mesh.uniform(1.0, 640)
    t = mesh.nodes
    normals = [[0.0, 1.0]] if m_second is None else [[0.0, 1.0], m_second[0]]
    U = np.tile(np.array(normals), (t.size, 1, 1))
    B = b_of_t(t).reshape(t.size, -1)
    path = ControlPath(mesh, U, B, normalized_delta=0.0)
    from polysweep.sweep import catching_up
    states = catching_up(path, x0).states
    return SweepOCP(TerminalCost("linear", [0.0, 0.0]), BOX, Reference(path, states), 1.0, 0.1, 1)


def test_recovery_single_halfspace_eta():
    # boundary moves down at speed 2: -dx/h = (0, 2) = 2 u_1
    inst = build_problem(halfspace_ocp(lambda t: 1.0 - 2.0 * t, [0.0, 1.0]), 0)
    res = recover_multipliers(inst, inst.start)
    assert res.multipliers.eta[0, 0] == pytest.approx(2.0)
    assert res.max_residual <= 1e-9


def test_recovery_interior_motion_forces_zero():
    inst = build_problem(halfspace_ocp(lambda t: np.ones_like(t), [0.0, 0.0]), 0)
    res = recover_multipliers(inst, inst.start)
    assert res.multipliers.eta[0, 0] == 0.0 and res.multipliers.gamma[0, 0] == 0.0


def test_recovery_plicq_gate():
    # x2 <= 1 and -x2 <= -1 are both active and positively dependent
    ocp = halfspace_ocp(lambda t: np.stack([np.ones_like(t), -np.ones_like(t)], axis=1), [0.0, 1.0],
                        m_second=[[0.0, -1.0]])
    inst = build_problem(ocp, 0)
    with pytest.raises(PLICQViolation) as err:
        recover_multipliers(inst, inst.start)
    assert err.value.node == 0


def test_recovery_on_solution(steering_runs):
    inst, sol, _ = steering_runs[0]
    res = recover_multipliers(inst, sol.triple)
    ms = res.multipliers
    assert res.max_residual <= 1e-6
    assert res.ntc0 >= 1e-3 and res.ntc1 >= 1e-3
    assert abs(ms.normalization() - 1.0) <= 1e-12
    assert np.all(ms.eta >= 0) and ms.lam >= 0 and np.all(ms.alpha1 >= 0) and np.all(ms.alpha2 >= 0)
    # hand check of the state recursion and the terminal transversality
    h = inst.mesh.steps
    u = sol.triple.u
    for j in range(inst.nu):
        assert np.allclose((ms.px[j + 1] - ms.px[j]) / h[j], u[j].T @ ms.gamma[j], atol=1e-6)
    grad = inst.scenario.terminal_cost.grad(sol.triple.x[-1])
    normal = sum((w * inst.omega_inflated.normals[f] for w, f in zip(ms.omega, ms.omega_facets)), np.zeros(2))
    assert np.allclose(-ms.px[-1], ms.lam * grad + normal + u[-1].T @ ms.eta[-1], atol=1e-6)


def test_recovery_rejects_corrupted_dynamics(steering_runs):
    inst, sol, _ = steering_runs[0]
    with pytest.raises(Infeasible):
        recover_multipliers(inst, corrupt_dynamics(sol.triple, 6, [0.0, 0.02]))
