import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import projection_kkt_gap, truncated_distance_slsqp
from polysweep.bounds import random_ball_point, random_polyhedron
from polysweep.control import example21_path
from polysweep.errors import (
    DimensionMismatch,
    EmptyPolyhedron,
    EmptyTruncation,
    NotApplicable,
    NotFeasible,
    OutOfDomain,
)
from polysweep.geometry import (
    Polyhedron,
    SlaterCertificate,
    active_indices,
    contains,
    distance,
    distance_upper_bound,
    hoffman_ratio,
    plicq_check,
    project,
    residual,
    slater_margin,
    truncated_distance,
)

HALF = Polyhedron([[0.0, 1.0]], [1.0])


def ex21(t):
    return example21_path().polyhedron(t)


def test_contains_examples():
    assert contains(HALF, [0, 0])
    assert not contains(HALF, [0, 2])
    assert not contains(ex21(0.5), [8, 1])


def test_contains_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        contains(HALF, [0, 0, 0])


def test_residual_examples():
    val, parts = residual(HALF, [0, 2])
    assert val == 1.0 and np.array_equal(parts, [1.0])
    val, _ = residual(ex21(0.5), [8, 1])
    assert val == pytest.approx(0.5 ** -2 - 1)
    val, parts = residual(HALF, [3, -4])
    assert val <= 0 and np.all(parts == 0)


def test_project_halfspace():
    r = project(HALF, [0, 2])
    assert np.allclose(r.point, [0, 1]) and r.distance == pytest.approx(1.0)
    assert np.allclose(r.multipliers, [1.0])


def test_project_interior_point_is_fixed():
    r = project(HALF, [0.3, -0.2])
    assert np.array_equal(r.point, [0.3, -0.2]) and r.distance == 0 and np.all(r.multipliers == 0)


@pytest.mark.parametrize("t", [0.5, 0.2, 0.1, 0.05, 0.01])
def test_example21_distance(t):
    # distance from (t^-3, 1) is t^-3 - t^-1
    d = distance(ex21(t), [t ** -3, 1.0])
    assert d == pytest.approx(t ** -3 - t ** -1, rel=1e-9)


def test_project_empty_raises():
    P = Polyhedron([[1.0, 0.0], [-1.0, 0.0]], [0.0, -1.0])
    assert P.is_empty
    with pytest.raises(EmptyPolyhedron):
        project(P, [0.0, 0.0])


def test_zero_normal_rules():
    vacuous = Polyhedron([[0.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
    assert not vacuous.is_empty
    assert np.allclose(project(vacuous, [0, 3]).point, [0, 1])
    assert Polyhedron([[0.0, 0.0]], [-1.0]).is_empty


def test_truncated_distance_inside_ball():
    P = Polyhedron([[0.0, 1.0]], [0.0])
    assert truncated_distance(P, [0, 1], 2.0) == pytest.approx(1.0)


def test_truncated_distance_corner_value():
    # Closest point of {x1 >= 5} inside the ball of radius 6 to (0, 6) is (5, sqrt(11)).
    P = Polyhedron([[-1.0, 0.0]], [-5.0])
    expected = math.hypot(5.0, 6.0 - math.sqrt(11.0))
    got = truncated_distance(P, [0.0, 6.0], 6.0)
    assert got == pytest.approx(expected, abs=1e-10)
    assert got <= 2 * 6 / (6 - 5) * distance(P, [0.0, 6.0])


def test_truncated_distance_errors():
    P = Polyhedron([[-1.0, 0.0]], [-5.0])
    with pytest.raises(EmptyTruncation):
        truncated_distance(P, [0.0, 0.0], 4.0)
    with pytest.raises(OutOfDomain):
        truncated_distance(P, [0.0, 7.0], 6.0)


def test_slater_example21_at_zero():
    cert = slater_margin(ex21(0.0), 1.0)
    assert cert.margin == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(cert.point, [0.0, 0.5], atol=1e-9)
    assert cert.radius == 1.0


def test_constant_witness_margin_over_time():
    path = example21_path()
    for t in np.linspace(0, 1, 21):
        u, b = path.eval(t)
        assert np.min(b - u @ np.array([0.0, 0.5])) >= 0.5 - 1e-15


def test_slater_degenerate_slab():
    cert = slater_margin(Polyhedron([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0]), 1.0)
    assert cert.margin == pytest.approx(0.0, abs=1e-9)


def test_slater_certificate_invariants(rng):
    for _ in range(20):
        P = random_polyhedron(rng)
        cert = slater_margin(P, 5.0)
        assert np.max(np.abs(cert.point)) <= 5.0
        assert cert.margin == pytest.approx(float(np.min(P.offsets - P.normals @ cert.point)), abs=1e-12)


def test_distance_upper_bound_halfspace():
    cert = SlaterCertificate(np.array([0.0, 0.0]), 1.0, 1.0)
    assert distance_upper_bound(HALF, [0, 2], cert) == pytest.approx(1.0)


def test_distance_upper_bound_example21():
    P = ex21(0.5)
    cert = SlaterCertificate(np.array([0.0, 0.5]), 0.5, 1.0)
    assert distance_upper_bound(P, [8, 1], cert) >= 6.0


def test_distance_upper_bound_inside_raises():
    with pytest.raises(NotApplicable):
        distance_upper_bound(HALF, [0, 0], SlaterCertificate(np.zeros(2), 1.0, 1.0))


@pytest.mark.parametrize("t", [0.5, 0.1])
def test_hoffman_ratio_example21(t):
    assert hoffman_ratio(ex21(t), [t ** -3, 1.0]) == pytest.approx(1 / t, rel=1e-9)


def test_hoffman_ratio_unit_halfspace():
    assert hoffman_ratio(HALF, [0, 2]) == pytest.approx(1.0)
    with pytest.raises(NotApplicable):
        hoffman_ratio(HALF, [0, 0])


def test_active_indices_examples():
    assert active_indices(HALF, [0, 1]) == (0,)
    assert active_indices(HALF, [0, 0]) == ()
    assert active_indices(ex21(0.5), [2, 1]) == (0, 1)
    with pytest.raises(NotFeasible):
        active_indices(HALF, [0, 2])


def test_plicq_examples():
    assert plicq_check([[0, 1], [1, 0]])
    assert not plicq_check([[0, 1], [0, -1]])
    assert plicq_check([])


def test_projection_contract_random(rng):
    for _ in range(100):
        P = random_polyhedron(rng)
        x = rng.normal(scale=4.0, size=P.n)
        r = project(P, x)
        assert projection_kkt_gap(P.normals, P.offsets, x, r.point) <= 1e-8 * (1 + np.linalg.norm(x))
        # variational inequality against sampled points of P
        for _ in range(100):
            y = project(P, rng.normal(scale=4.0, size=P.n)).point
            assert (x - r.point) @ (y - r.point) <= 1e-8 * (1 + np.linalg.norm(x - r.point)) * (1 + np.linalg.norm(y))
        assert np.allclose(x - r.point, P.normals.T @ r.multipliers, atol=1e-8)
        inactive = [i for i in range(P.m) if i not in r.active]
        assert np.all(r.multipliers[inactive] == 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_projection_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    P = random_polyhedron(rng)
    x, y = rng.normal(scale=3.0, size=(2, P.n))
    px, py = project(P, x).point, project(P, y).point
    assert project(P, px).distance <= 1e-9
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-9


def test_truncated_distance_matches_slsqp(rng):
    for _ in range(25):
        P = random_polyhedron(rng, n=int(rng.integers(1, 4)), m=int(rng.integers(1, 5)))
        d0 = distance(P, np.zeros(P.n))
        r = d0 + rng.uniform(0.1, 2.0)
        x = random_ball_point(rng, P.n, r)
        ours = truncated_distance(P, x, r)
        other = truncated_distance_slsqp(P.normals, P.offsets, x, r)
        assert ours <= other + 1e-7
        assert ours == pytest.approx(other, abs=1e-5)


def test_slater_implies_plicq_on_boundary(rng):
    for _ in range(30):
        P = random_polyhedron(rng)
        if slater_margin(P, 10.0).margin <= 0:
            continue
        for _ in range(5):
            x = project(P, rng.normal(scale=6.0, size=P.n)).point
            act = active_indices(P, x)
            assert plicq_check(P.normals[list(act)])
