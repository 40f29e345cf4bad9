"""Time stepping for the sweeping inclusion over a moving polyhedron."""

import csv
from dataclasses import dataclass

import numpy as np

from .control import Mesh, sup_norm_diff
from .errors import (
    EmptyPolyhedron,
    EmptyPolyhedronAtNode,
    ExplicitStepInfeasible,
    InfeasibleStart,
    NotFeasible,
    NumericalFailure,
    OutOfDomain,
)
from .geometry import ACTIVE_TOL, FEAS_TOL, Polyhedron, active_indices, contains, project


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on a mesh with per-step normal-cone multipliers.

    ``-(x_{j+1} - x_j) / h_j = sum_i eta[j, i] * u_i`` where the normals are
    taken at ``t_{j+1}`` (implicit) or ``t_j`` (explicit).
    """

    mesh: Mesh
    states: np.ndarray
    step_multipliers: np.ndarray
    active_sets: list
    initial_active: tuple = ()
    scheme: str = "implicit"

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def m(self):
        return self.step_multipliers.shape[1]

    def at(self, t):
        """Piecewise-linear interpolation of the states."""
        return np.array([np.interp(t, self.mesh.nodes, self.states[:, k]) for k in range(self.n)])

    def speeds(self):
        return np.linalg.norm(np.diff(self.states, axis=0), axis=1) / self.mesh.steps


def _nodal(path, t, node):
    P = path.polyhedron(t)
    if P.is_empty:
        raise EmptyPolyhedronAtNode(node, float(t))
    return P


def _explicit_step(P_now, P_next, x, h, node, t):
    """Smallest displacement ``-h sum eta_i u_i`` (eta >= 0 on the active set at ``x``)
    that lands in ``P_next``."""
    S = list(active_indices(P_now, x, ACTIVE_TOL))
    eta = np.zeros(P_now.m)
    if not S:
        if contains(P_next, x, FEAS_TOL):
            return x.copy(), eta, ()
        raise ExplicitStepInfeasible(node, t)
    U = P_now.normals[S]
    G = U @ U.T
    G = G + 1e-12 * max(1.0, np.trace(G)) * np.eye(len(S))
    L = np.linalg.cholesky(G)
    # kappa = h * eta = L^{-T} zeta, so that ||U^T kappa|| ~ ||zeta||.
    Linv_T = np.linalg.inv(L).T
    if P_next.is_empty:
        raise EmptyPolyhedron("next set is empty")
    k = len(S)
    A = np.vstack([-Linv_T, -P_next.normals @ U.T @ Linv_T])
    c = np.concatenate([np.zeros(k), P_next.offsets - P_next.normals @ x])
    try:
        zeta = project(Polyhedron(A, c), np.zeros(k)).point
    except (EmptyPolyhedron, NumericalFailure):
        raise ExplicitStepInfeasible(node, t) from None
    kappa = np.maximum(Linv_T @ zeta, 0.0)
    x_new = x - U.T @ kappa
    if not contains(P_next, x_new, FEAS_TOL * max(1.0, np.linalg.norm(x_new))):
        raise ExplicitStepInfeasible(node, t)
    eta[S] = kappa / h
    return x_new, eta, tuple(i for i, kv in zip(S, kappa) if kv > 0)


def catching_up(path, x0, mesh=None, explicit=False):
    """Simulate the sweeping process by time stepping.

    Implicit (default): ``x_{j+1} = proj_{C(t_{j+1})}(x_j)``. Explicit: the
    step uses only normals active at ``(t_j, x_j)`` and chooses the smallest
    such displacement that lands in ``C(t_{j+1})``.

    Raises
    ------
    InfeasibleStart
        ``x0`` is not in ``C(0)``.
    EmptyPolyhedronAtNode
        Some nodal polyhedron is empty.
    ExplicitStepInfeasible
        Explicit mode only: no admissible displacement exists.
    """
    mesh = path.mesh if mesh is None else mesh
    t = mesh.nodes
    x = np.asarray(x0, dtype=float).copy()
    P0 = _nodal(path, t[0], 0)
    x = P0._check(x)
    if not contains(P0, x, FEAS_TOL * max(1.0, np.linalg.norm(x))):
        raise InfeasibleStart(f"x0={x.tolist()} is not in C(0)")
    try:
        init_active = active_indices(P0, x, ACTIVE_TOL)
    except NotFeasible:
        init_active = ()
    nu = mesh.nu
    states = np.empty((nu + 1, x.size))
    states[0] = x
    etas = np.zeros((nu, path.m))
    actives = []
    P_now = P0
    for j in range(nu):
        h = t[j + 1] - t[j]
        P_next = path.polyhedron(t[j + 1])
        try:
            if explicit:
                x, eta, act = _explicit_step(P_now, P_next, x, h, j, float(t[j]))
            else:
                pr = project(P_next, x)
                x, eta, act = pr.point, pr.multipliers / h, pr.active
        except EmptyPolyhedron:
            raise EmptyPolyhedronAtNode(j + 1, float(t[j + 1])) from None
        states[j + 1] = x
        etas[j] = eta
        actives.append(tuple(act))
        P_now = P_next
    states.setflags(write=False)
    etas.setflags(write=False)
    return Trajectory(mesh, states, etas, actives, tuple(init_active),
                      "explicit" if explicit else "implicit")


def analytic_oracle(x0, t):
    """Exact trajectory for the rotating-halfspace example on ``[0, 1]``.

    Feasible starts with ``x0_2 >= x0_1`` never move. Otherwise the state rests
    until ``t1 = x0_2 / x0_1``, then slides along the rotating facet on the
    circle of radius ``||x0||`` until it reaches ``x_2 = 1`` at
    ``t2 = 1 / sqrt(||x0||^2 - 1)``, and finally follows ``(1/t, 1)``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,):
        raise OutOfDomain("the example lives in R^2")
    if not (0.0 <= t <= 1.0):
        raise OutOfDomain(f"t={t!r} outside [0, 1]")
    x1, x2 = x0
    if x2 > 1.0 or x2 < 0.0:
        raise OutOfDomain(f"x0={x0.tolist()} is not in C(0)")
    if x2 >= x1:
        return x0.copy()
    t1 = x2 / x1
    if t <= t1:
        return x0.copy()
    r = float(np.hypot(x1, x2))
    t2 = 1.0 / np.sqrt(r * r - 1.0) if r > 1.0 else np.inf
    if t <= t2:
        return r / np.sqrt(1.0 + t * t) * np.array([1.0, t])
    return np.array([1.0 / t, 1.0])


def sup_error(traj, reference):
    """Max over mesh nodes of ``||x_j - reference(t_j)||``."""
    return float(max(np.linalg.norm(x - reference(tj)) for tj, x in zip(traj.mesh.nodes, traj.states)))


@dataclass(frozen=True)
class ConvergenceTable:
    steps: np.ndarray
    errors: np.ndarray
    ratios: np.ndarray
    trajectories: list

    def rows(self):
        return [(float(h), float(e)) for h, e in zip(self.steps, self.errors)]


def _refine(mesh, factor):
    t = mesh.nodes
    pieces = [np.linspace(t[j], t[j + 1], factor + 1)[:-1] for j in range(mesh.nu)]
    return Mesh(np.concatenate(pieces + [t[-1:]]))


def convergence_study(path, x0, base_mesh, levels, reference=None, explicit=False):
    """Sup-node errors on ``base_mesh`` refined dyadically ``levels`` times.

    ``reference`` maps a time to the exact state. Without it, a run on a mesh
    four times finer than the finest level serves as reference.
    """
    levels = int(levels)
    meshes = [_refine(base_mesh, 2 ** k) for k in range(levels)]
    if reference is None:
        fine = catching_up(path, x0, _refine(base_mesh, 2 ** (levels + 1)), explicit=explicit)
        reference = fine.at
    trajs = [catching_up(path, x0, mh, explicit=explicit) for mh in meshes]
    errs = np.array([sup_error(tr, reference) for tr in trajs])
    hs = np.array([float(np.max(mh.steps)) for mh in meshes])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = errs[:-1] / errs[1:]
    return ConvergenceTable(hs, errs, ratios, trajs)


@dataclass(frozen=True)
class StabilityReport:
    sup_dx_sq: float
    dx0_sq: float
    control_diff: float
    empirical_K: float
    max_speed: tuple


def stability_experiment(path1, path2, x0_1, x0_2, mesh):
    """Compare two runs on a common mesh against ``||x0 - x0'||^2 + K ||Δ(u, b)||``."""
    tr1 = catching_up(path1, x0_1, mesh)
    tr2 = catching_up(path2, x0_2, mesh)
    dx = tr1.states - tr2.states
    sup_dx_sq = float(np.max(np.sum(dx * dx, axis=1)))
    d0 = np.asarray(x0_1, dtype=float) - np.asarray(x0_2, dtype=float)
    dx0_sq = float(d0 @ d0)
    cd = sup_norm_diff(path1, path2)
    excess = max(sup_dx_sq - dx0_sq, 0.0)
    K = excess / cd if cd > 0 else (0.0 if excess == 0.0 else np.inf)
    return StabilityReport(sup_dx_sq, dx0_sq, cd, float(K),
                           (float(np.max(tr1.speeds())), float(np.max(tr2.speeds()))))


def active_bitmask(indices):
    return sum(1 << int(i) for i in indices)


def write_trajectory_csv(traj, fh):
    """Rows ``t, x_1..x_n, eta_1..eta_m, active``; row ``j >= 1`` carries step ``j-1 -> j``."""
    w = csv.writer(fh, lineterminator="\n")
    n, m = traj.n, traj.m
    w.writerow(["t"] + [f"x_{k + 1}" for k in range(n)] + [f"eta_{i + 1}" for i in range(m)] + ["active"])
    for j, tj in enumerate(traj.mesh.nodes):
        eta = np.zeros(m) if j == 0 else traj.step_multipliers[j - 1]
        act = traj.initial_active if j == 0 else traj.active_sets[j - 1]
        w.writerow([f"{tj:.17g}"] + [f"{v:.17g}" for v in traj.states[j]]
                   + [f"{v:.17g}" for v in eta] + [str(active_bitmask(act))])


def read_trajectory_csv(fh):
    """Inverse of :func:`write_trajectory_csv` (active masks decoded to tuples)."""
    rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    n = sum(1 for h in head if h.startswith("x_"))
    m = sum(1 for h in head if h.startswith("eta_"))
    data = np.array([[float(v) for v in r[:-1]] for r in body])
    masks = [int(r[-1]) for r in body]
    decode = [tuple(i for i in range(m) if mk >> i & 1) for mk in masks]
    return Trajectory(Mesh(data[:, 0]), data[:, 1:1 + n], data[1:, 1 + n:1 + n + m],
                      decode[1:], decode[0])
