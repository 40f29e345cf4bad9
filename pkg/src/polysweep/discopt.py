"""Discrete approximations of the Mayer problem for the controlled sweeping process.

A level-``k`` problem lives on the uniform mesh with ``nu0 * 2**k`` steps and
penalizes deviation of the discrete velocities of ``(u, b, x)`` from those of a
reference triple. The solver works in a reduced space in which the discrete
sweeping inclusion holds by construction: at every node each constraint
carries one signed number ``sigma``; its positive part is the normal-cone
multiplier of the step and its negative part the slack of the constraint.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, nnls

from .control import ControlPath, Mesh
from .errors import BudgetExhausted, DimensionMismatch, NoFeasibleStart, ReferenceMissing
from .geometry import Polyhedron, active_indices, project

BAND = 1e-7


@dataclass(frozen=True)
class TerminalCost:
    """``phi(x) = c @ x`` (kind ``"linear"``) or ``0.5 ||x - target||^2`` (``"quadratic"``)."""

    kind: str
    vector: np.ndarray

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic"):
            raise ValueError(f"unsupported terminal cost {self.kind!r}")
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=float))

    def value(self, x):
        if self.kind == "linear":
            return float(self.vector @ x)
        d = x - self.vector
        return 0.5 * float(d @ d)

    def grad(self, x):
        if self.kind == "linear":
            return self.vector.copy()
        return np.asarray(x, dtype=float) - self.vector


@dataclass(frozen=True, eq=False)
class Reference:
    """Reference controls and trajectory, both piecewise linear on ``path.mesh``."""

    path: ControlPath
    states: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.states, dtype=float)
        if X.shape[0] != len(self.path.mesh):
            raise DimensionMismatch("one reference state per reference node is required")
        object.__setattr__(self, "states", X)

    @property
    def mesh(self):
        return self.path.mesh

    def stacked(self):
        """Node values of ``(u, b, x)`` flattened in that order."""
        N = len(self.mesh)
        return np.hstack([self.path.u_knots.reshape(N, -1), self.path.b_knots, self.states])

    def state_at(self, t):
        return np.array([np.interp(t, self.mesh.nodes, self.states[:, k]) for k in range(self.states.shape[1])])


@dataclass(frozen=True, eq=False)
class SweepOCP:
    terminal_cost: TerminalCost
    target_set: Polyhedron
    reference: Reference
    epsilon: float
    delta0: float
    nu0: int
    x0: np.ndarray = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.delta0 < 0:
            raise ValueError("delta0 must be nonnegative")
        x0 = self.reference.states[0] if self.x0 is None else np.asarray(self.x0, dtype=float)
        if not np.allclose(x0, self.reference.states[0], atol=1e-12):
            raise ValueError("x0 must match the reference initial state")
        object.__setattr__(self, "x0", x0)
        P0 = self.reference.path.node_polyhedron(0)
        if np.max(P0.normals @ x0 - P0.offsets) > 1e-9:
            raise ValueError("x0 is not feasible at t = 0")

    @property
    def T(self):
        return self.reference.mesh.T

    @property
    def m(self):
        return self.reference.path.m

    @property
    def n(self):
        return self.reference.path.n

    def delta_k(self, k):
        return self.delta0 / 2.0 ** k


@dataclass(frozen=True, eq=False)
class DiscreteTriple:
    mesh: Mesh
    u: np.ndarray
    b: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        b = np.array(self.b, dtype=float)
        x = np.array(self.x, dtype=float)
        N = len(self.mesh)
        if u.ndim != 3 or u.shape[0] != N or b.shape != u.shape[:2] or x.ndim != 2 or x.shape[0] != N:
            raise DimensionMismatch("triple shapes do not match the mesh")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x", x)

    def velocities(self):
        h = self.mesh.steps
        N = len(self.mesh)
        stacked = np.hstack([self.u.reshape(N, -1), self.b, self.x])
        return np.diff(stacked, axis=0) / h[:, None]

    def stacked(self):
        N = len(self.mesh)
        return np.hstack([self.u.reshape(N, -1), self.b, self.x])


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    scenario: SweepOCP
    k: int
    mesh: Mesh
    delta: float
    xi: float
    epsilon: float
    omega_inflated: Polyhedron
    piece_interval: np.ndarray
    piece_dur: np.ndarray
    piece_rate: np.ndarray
    piece_start: np.ndarray
    piece_end: np.ndarray
    start: DiscreteTriple
    start_eta: np.ndarray
    initial_active: tuple

    @property
    def m(self):
        return self.scenario.m

    @property
    def n(self):
        return self.scenario.n

    @property
    def nu(self):
        return self.mesh.nu

    def theta(self, triple):
        """Per-step integrals of velocity deviation, shape (nu, mn + m + n)."""
        h = self.mesh.steps
        G = np.zeros((self.nu, self.piece_rate.shape[1]))
        np.add.at(G, self.piece_interval, self.piece_dur[:, None] * self.piece_rate)
        return triple.velocities() * h[:, None] - G


def _nested(coarse, fine):
    idx = np.searchsorted(fine.nodes, coarse.nodes)
    idx = np.clip(idx, 0, fine.nodes.size - 1)
    lo = np.clip(idx - 1, 0, fine.nodes.size - 1)
    gap = np.minimum(np.abs(fine.nodes[idx] - coarse.nodes), np.abs(fine.nodes[lo] - coarse.nodes))
    return bool(np.all(gap <= 1e-12 * max(1.0, fine.T)))


def tracking_triple(mesh, u, b_ref, x0, target, initial_active=None, allowed=None):
    """Feasible triple following ``target`` states under the controls ``u``.

    At each node the step is the nonnegative combination of the allowed
    normals closest to the target velocity; offsets of the constraints used
    are moved to touch the current state, the others keep ``b_ref`` unless
    the state would violate them. ``allowed[j]`` defaults to all constraints
    (only ``initial_active`` at node 0, where offsets are pinned).
    Returns ``(triple, eta)``.
    """
    nu = mesh.nu
    h = mesh.steps
    m = u.shape[1]
    x = np.empty((nu + 1, u.shape[2]))
    b = np.array(b_ref, dtype=float, copy=True)
    eta = np.zeros((nu, m))
    x[0] = x0
    for j in range(nu):
        idx = list(range(m)) if allowed is None else sorted(allowed[j])
        if j == 0 and initial_active is not None:
            idx = [i for i in idx if i in initial_active]
        v = (target[j + 1] - x[j]) / h[j]
        e = np.zeros(m)
        if idx:
            coef, _ = nnls(u[j][idx].T, -v)
            e[idx] = coef
        e[e < 1e-14] = 0.0
        if j > 0:
            g = u[j] @ x[j]
            b[j] = np.where(e > 0, g, np.maximum(b_ref[j], g))
        eta[j] = e
        x[j + 1] = x[j] - h[j] * (u[j].T @ e)
    g = u[nu] @ x[nu]
    b[nu] = np.maximum(b_ref[nu], g)
    return DiscreteTriple(mesh, u, b, x), eta


def build_problem(scenario, k):
    """Level-``k`` discrete problem with closed-form quadrature data.

    Raises
    ------
    ReferenceMissing
        If the reference mesh does not refine the level-``k`` mesh.
    """
    k = int(k)
    ref = scenario.reference
    mesh = Mesh.uniform(scenario.T, scenario.nu0 * 2 ** k)
    if not _nested(mesh, ref.mesh):
        raise ReferenceMissing(f"reference mesh does not refine the level-{k} mesh")
    G = ref.stacked()
    rt = ref.mesh.nodes
    dur = np.diff(rt)
    rate = np.diff(G, axis=0) / dur[:, None]
    mid = 0.5 * (rt[:-1] + rt[1:])
    interval = np.clip(np.searchsorted(mesh.nodes, mid, side="right") - 1, 0, mesh.nu - 1)
    path_k = ref.path.resample(mesh)
    target = np.array([ref.state_at(t) for t in mesh.nodes])
    P0 = path_k.node_polyhedron(0)
    init_active = active_indices(P0, scenario.x0, BAND)
    # A step may use the constraints active for the reference at either end.
    slack = np.abs(np.einsum("jin,jn->ji", path_k.u_knots, target) - path_k.b_knots)
    act = slack <= BAND * np.maximum(1.0, np.abs(path_k.b_knots))
    allowed = [set(np.flatnonzero(act[j] | act[j + 1]).tolist()) for j in range(mesh.nu)]
    start, eta = tracking_triple(mesh, path_k.u_knots, path_k.b_knots, scenario.x0, target,
                                 init_active, allowed)
    xi = float(np.linalg.norm(start.x[-1] - ref.states[-1]))
    om = scenario.target_set
    infl = Polyhedron(om.normals, om.offsets + xi * np.linalg.norm(om.normals, axis=1))
    return ProblemInstance(scenario, k, mesh, scenario.delta_k(k), xi, float(scenario.epsilon), infl,
                           interval, dur, rate, G[:-1], G[1:], start, eta, tuple(init_active))


def _velocity_cost(inst, vel):
    d = vel[inst.piece_interval] - inst.piece_rate
    return 0.5 * float(np.sum(inst.piece_dur * np.sum(d * d, axis=1)))


def evaluate_cost(inst, triple):
    """Terminal cost plus the exact velocity-deviation integral."""
    if not triple.mesh.same_as(inst.mesh) or triple.u.shape[1:] != (inst.m, inst.n):
        raise DimensionMismatch("triple does not match the problem mesh/shape")
    return inst.scenario.terminal_cost.value(triple.x[-1]) + _velocity_cost(inst, triple.velocities())


def _localization_integrals(inst, stacked, vel):
    ra = stacked[inst.piece_interval] - inst.piece_start
    rb = stacked[inst.piece_interval] - inst.piece_end
    i1 = float(np.sum(inst.piece_dur / 3.0 * np.sum(ra * ra + ra * rb + rb * rb, axis=1)))
    d = vel[inst.piece_interval] - inst.piece_rate
    i2 = float(np.sum(inst.piece_dur * np.sum(d * d, axis=1)))
    return i1, i2


def _cone_residual(U, v):
    if U.shape[0] == 0:
        return float(np.linalg.norm(v))
    _, r = nnls(U.T, v)
    return float(r)


@dataclass(frozen=True)
class FeasibilityReport:
    residuals: dict
    values: dict
    tol: float

    @property
    def max_residual(self):
        return max(self.residuals.values())

    @property
    def feasible(self):
        return self.max_residual <= self.tol

    def flagged(self):
        return sorted(k for k, v in self.residuals.items() if v > self.tol)


def feasibility_report(inst, triple, tol=1e-8):
    """Residual of every constraint family of the discrete problem."""
    sc = inst.scenario
    h = inst.mesh.steps
    nu = inst.nu
    dyn = 0.0
    for j in range(nu):
        s = triple.u[j] @ triple.x[j] - triple.b[j]
        dyn = max(dyn, float(np.max(s, initial=0.0)))
        act = np.abs(s) <= BAND * max(1.0, float(np.max(np.abs(triple.b[j]))))
        v = -(triple.x[j + 1] - triple.x[j]) / h[j]
        dyn = max(dyn, _cone_residual(triple.u[j][act], v))
    hidden_end = float(np.max(triple.u[nu] @ triple.x[nu] - triple.b[nu], initial=0.0))
    hidden_end = max(hidden_end, 0.0)
    ref = sc.reference
    ini = max(float(np.max(np.abs(triple.u[0] - ref.path.u_knots[0]))),
              float(np.max(np.abs(triple.b[0] - ref.path.b_knots[0]))),
              float(np.max(np.abs(triple.x[0] - sc.x0))))
    om = inst.omega_inflated
    end = max(float(np.max(om.normals @ triple.x[nu] - om.offsets)), 0.0)
    exact = project(sc.target_set, triple.x[nu]).distance - inst.xi
    norms = np.linalg.norm(triple.u, axis=2)
    ucon = float(np.max(np.maximum(np.maximum(norms - (1 + inst.delta), (1 - inst.delta) - norms), 0.0)))
    i1, i2 = _localization_integrals(inst, triple.stacked(), triple.velocities())
    residuals = {
        "dynamics": dyn,
        "hidden_terminal": hidden_end,
        "initial": ini,
        "endpoint": end,
        "u_const": ucon,
        "ic1": max(i1 - inst.epsilon / 2, 0.0),
        "ic2": max(i2 - inst.epsilon / 2, 0.0),
    }
    values = {"ic1": i1, "ic2": i2, "endpoint_exact_excess": float(exact), "epsilon_half": inst.epsilon / 2}
    return FeasibilityReport(residuals, values, tol)


# -- reduced parameterization -------------------------------------------------

class _Reduced:
    """Map between reduced vectors ``z`` and feasible-by-construction triples."""

    def __init__(self, inst):
        self.inst = inst
        sc = inst.scenario
        self.m, self.n, self.nu = inst.m, inst.n, inst.nu
        self.h = inst.mesh.steps
        self.u0 = sc.reference.path.u_knots[0].copy()
        self.b0 = sc.reference.path.b_knots[0].copy()
        self.x0 = sc.x0.copy()
        self.act0 = list(inst.initial_active)
        self.nu_u = self.nu * self.m * self.n
        self.size = self.nu_u + len(self.act0) + self.nu * self.m

    def decode(self, z):
        m, n, nu, h = self.m, self.n, self.nu, self.h
        u = np.empty((nu + 1, m, n))
        u[0] = self.u0
        u[1:] = z[:self.nu_u].reshape(nu, m, n)
        tau = z[self.nu_u:self.nu_u + len(self.act0)]
        sig = z[self.nu_u + len(self.act0):].reshape(nu, m)
        b = np.empty((nu + 1, m))
        x = np.empty((nu + 1, n))
        eta = np.zeros((nu, m))
        b[0] = self.b0
        x[0] = self.x0
        eta[0, self.act0] = np.abs(tau)
        x[1] = x[0] - h[0] * (u[0].T @ eta[0])
        for j in range(1, nu):
            s = sig[j - 1]
            e = np.maximum(s, 0.0)
            b[j] = u[j] @ x[j] + np.maximum(-s, 0.0)
            eta[j] = e
            x[j + 1] = x[j] - h[j] * (u[j].T @ e)
        b[nu] = u[nu] @ x[nu] + np.abs(sig[nu - 1])
        return u, b, x, eta

    def encode(self, triple, eta):
        nu = self.nu
        z = [triple.u[1:].ravel(), eta[0, self.act0]]
        sig = np.empty((nu, self.m))
        for j in range(1, nu):
            slack = triple.b[j] - triple.u[j] @ triple.x[j]
            sig[j - 1] = np.where(eta[j] > 0, eta[j], -np.maximum(slack, 0.0))
        sig[nu - 1] = np.maximum(triple.b[nu] - triple.u[nu] @ triple.x[nu], 0.0)
        z.append(sig.ravel())
        return np.concatenate(z)


@dataclass
class SolveOptions:
    seed: int = 0
    rounds: int = 5
    weight0: float = 10.0
    weight_factor: float = 10.0
    step0: float = 0.1
    step_min: float = 1e-5
    max_sweeps: int = 8
    fd_step: float = 1e-6
    polish: bool = True
    budget: int | None = None
    penalty_tol: float = 1e-6


@dataclass
class SolveResult:
    triple: DiscreteTriple
    eta: np.ndarray
    cost: float
    report: FeasibilityReport
    diagnostics: dict = field(default_factory=dict)
    budget_exhausted: bool = False


class _Budget(Exception):
    pass


def _penalty(inst, u, b, x, vel):
    norms = np.linalg.norm(u[1:], axis=2)
    pen = float(np.sum(np.maximum(norms - (1 + inst.delta), 0.0) ** 2)
                + np.sum(np.maximum((1 - inst.delta) - norms, 0.0) ** 2))
    om = inst.omega_inflated
    pen += float(np.sum(np.maximum(om.normals @ x[-1] - om.offsets, 0.0) ** 2))
    N = u.shape[0]
    stacked = np.hstack([u.reshape(N, -1), b, x])
    i1, i2 = _localization_integrals(inst, stacked, vel)
    pen += max(i1 - inst.epsilon / 2, 0.0) ** 2 + max(i2 - inst.epsilon / 2, 0.0) ** 2
    return pen


def _velocities(h, u, b, x):
    N = u.shape[0]
    stacked = np.hstack([u.reshape(N, -1), b, x])
    return np.diff(stacked, axis=0) / h[:, None]


def solve(inst, options=None):
    """Minimize the level-``k`` cost over the reduced variables.

    Quadratic-penalty rounds (weight multiplied each round) around a compass
    pattern search, each round finished by an L-BFGS-B polish with central
    finite-difference gradients. The start is the tracking triple of the
    reference controls.

    Raises
    ------
    NoFeasibleStart
        The reference-based start violates the constraints.
    BudgetExhausted
        The evaluation budget ran out; ``err.result`` holds the best point.
    """
    opt = SolveOptions() if options is None else options
    start_rep = feasibility_report(inst, inst.start, tol=opt.penalty_tol)
    if not start_rep.feasible:
        raise NoFeasibleStart(f"reference start violates {start_rep.flagged()}")
    red = _Reduced(inst)
    rng = np.random.default_rng(opt.seed)
    phi = inst.scenario.terminal_cost
    h = red.h
    count = [0]

    def parts(z):
        u, b, x, _ = red.decode(z)
        vel = _velocities(h, u, b, x)
        return phi.value(x[-1]) + _velocity_cost(inst, vel), _penalty(inst, u, b, x, vel)

    def objective(z, w):
        count[0] += 1
        if opt.budget is not None and count[0] > opt.budget:
            raise _Budget
        c, p = parts(z)
        return c + w * p

    z = red.encode(inst.start, inst.start_eta)
    weight = opt.weight0
    history = []
    exhausted = False
    try:
        for rnd in range(opt.rounds):
            fz = objective(z, weight)
            step = opt.step0
            sweeps = 0
            while step >= opt.step_min:
                improved = False
                sweeps += 1
                for i in rng.permutation(z.size):
                    for sgn in (1.0, -1.0):
                        trial = z.copy()
                        trial[i] += sgn * step
                        ft = objective(trial, weight)
                        if ft < fz:
                            z, fz, improved = trial, ft, True
                            break
                if not improved or sweeps >= opt.max_sweeps:
                    step *= 0.5
                    sweeps = 0
            if opt.polish:
                def grad(zz, w=weight):
                    g = np.empty_like(zz)
                    for i in range(zz.size):
                        e = np.zeros_like(zz)
                        e[i] = opt.fd_step
                        g[i] = (objective(zz + e, w) - objective(zz - e, w)) / (2 * opt.fd_step)
                    return g

                res = minimize(objective, z, args=(weight,), jac=grad, method="L-BFGS-B",
                               options={"maxiter": 200, "ftol": 1e-15, "gtol": 1e-10})
                if res.fun < fz:
                    z, fz = res.x.copy(), float(res.fun)
            c, p = parts(z)
            history.append({"round": rnd, "weight": weight, "objective": fz, "cost": c, "penalty": p,
                            "evaluations": count[0]})
            weight *= opt.weight_factor
    except _Budget:
        # z is the best point of the interrupted round
        exhausted = True

    u, b, x, eta = red.decode(z)
    triple = DiscreteTriple(inst.mesh, u, b, x)
    rep = feasibility_report(inst, triple, tol=opt.penalty_tol)
    fallback = False
    if rep.max_residual > start_rep.max_residual + opt.penalty_tol:
        triple, eta, rep, fallback = inst.start, inst.start_eta, start_rep, True
    cost = evaluate_cost(inst, triple)
    diag = {"rounds": history, "evaluations": count[0], "seed": opt.seed, "fallback_to_start": fallback,
            "start_cost": evaluate_cost(inst, inst.start), "xi": inst.xi, "delta": inst.delta,
            "residuals": rep.residuals}
    result = SolveResult(triple, eta, cost, rep, diag, exhausted)
    if exhausted:
        raise BudgetExhausted(f"evaluation budget {opt.budget} exhausted", result)
    return result
