"""Piecewise-linear control pairs (u, b) on a time mesh."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, OutOfDomain
from .geometry import Polyhedron, slater_margin


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Strictly increasing nodes ``0 = t_0 < ... < t_nu = T``."""

    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a mesh needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError("first mesh node must be 0")
        if not np.all(np.diff(t) > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", _frozen(t))

    @classmethod
    def uniform(cls, T, nu):
        t = np.linspace(0.0, float(T), int(nu) + 1)
        t[-1] = float(T)
        return cls(t)

    @property
    def T(self):
        return float(self.nodes[-1])

    @property
    def steps(self):
        return np.diff(self.nodes)

    @property
    def nu(self):
        return self.nodes.size - 1

    def __len__(self):
        return self.nodes.size

    def same_as(self, other):
        return self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes)


def merge_meshes(*meshes):
    T = meshes[0].T
    for mh in meshes[1:]:
        if abs(mh.T - T) > 1e-12 * max(1.0, T):
            raise ValueError("meshes cover different horizons")
    nodes = np.unique(np.concatenate([mh.nodes for mh in meshes]))
    nodes = nodes[nodes <= T]
    # Collapse nodes closer than rounding noise.
    keep = np.concatenate([[True], np.diff(nodes) > 1e-14 * max(1.0, T)])
    nodes = nodes[keep]
    nodes[-1] = T
    return Mesh(nodes)


@dataclass(frozen=True, eq=False)
class ControlPath:
    """Control pair interpolated linearly between mesh nodes.

    Parameters
    ----------
    mesh : Mesh
    u_knots : array_like, shape (len(mesh), m, n)
    b_knots : array_like, shape (len(mesh), m)
    normalized_delta : float or None
        If given, ``| ||u_i(t_j)|| - 1 | <= normalized_delta`` at every node.
    """

    mesh: Mesh
    u_knots: np.ndarray
    b_knots: np.ndarray
    normalized_delta: float | None = None

    def __post_init__(self):
        U = np.asarray(self.u_knots, dtype=float)
        B = np.asarray(self.b_knots, dtype=float)
        N = len(self.mesh)
        if U.ndim != 3 or U.shape[0] != N:
            raise DimensionMismatch(f"u_knots must have shape ({N}, m, n), got {U.shape}")
        if B.shape != U.shape[:2]:
            raise DimensionMismatch(f"b_knots must have shape {U.shape[:2]}, got {B.shape}")
        object.__setattr__(self, "u_knots", _frozen(U))
        object.__setattr__(self, "b_knots", _frozen(B))
        if self.normalized_delta is not None and not self.normalization_holds():
            raise ValueError("normalized flag set but some ||u_i(t_j)|| leaves [1-delta, 1+delta]")

    @property
    def m(self):
        return self.u_knots.shape[1]

    @property
    def n(self):
        return self.u_knots.shape[2]

    def normalization_holds(self, delta=None):
        delta = self.normalized_delta if delta is None else delta
        norms = np.linalg.norm(self.u_knots, axis=2)
        return bool(np.all(np.abs(norms - 1.0) <= delta + 1e-12))

    def eval(self, t):
        """Interpolated ``(u, b)`` at time ``t``; exact at the knots."""
        nodes = self.mesh.nodes
        T = nodes[-1]
        if not (0.0 <= t <= T):
            raise OutOfDomain(f"t={t!r} outside [0, {T!r}]")
        j = int(np.searchsorted(nodes, t, side="right")) - 1
        if j >= nodes.size - 1:
            return self.u_knots[-1].copy(), self.b_knots[-1].copy()
        if t == nodes[j]:
            return self.u_knots[j].copy(), self.b_knots[j].copy()
        w = (t - nodes[j]) / (nodes[j + 1] - nodes[j])
        u = (1 - w) * self.u_knots[j] + w * self.u_knots[j + 1]
        b = (1 - w) * self.b_knots[j] + w * self.b_knots[j + 1]
        return u, b

    def polyhedron(self, t):
        u, b = self.eval(t)
        return Polyhedron(u, b)

    def node_polyhedron(self, j):
        return Polyhedron(self.u_knots[j], self.b_knots[j])

    def resample(self, mesh):
        """Values at the nodes of ``mesh`` (exact if ``mesh`` refines this path's mesh)."""
        vals = [self.eval(t) for t in mesh.nodes]
        return ControlPath(mesh, np.array([v[0] for v in vals]), np.array([v[1] for v in vals]))


def evaluate(path, t):
    return path.eval(t)


def sup_norm(path):
    """``max_{i,t} ||u_i(t)|| + max_{i,t} |b_i(t)|``; knots suffice for linear pieces."""
    return float(np.max(np.linalg.norm(path.u_knots, axis=2)) + np.max(np.abs(path.b_knots)))


def sup_norm_diff(p1, p2):
    if p1.mesh.same_as(p2.mesh):
        q1, q2 = p1, p2
    else:
        mesh = merge_meshes(p1.mesh, p2.mesh)
        q1, q2 = p1.resample(mesh), p2.resample(mesh)
    du = q1.u_knots - q2.u_knots
    db = q1.b_knots - q2.b_knots
    return float(np.max(np.linalg.norm(du, axis=2)) + np.max(np.abs(db)))


def w11_norm(path):
    """Initial values plus total variation of every component, exact for linear pieces."""
    U, B = path.u_knots, path.b_knots
    init = np.sum(np.linalg.norm(U[0], axis=1)) + np.sum(np.abs(B[0]))
    var = np.sum(np.linalg.norm(np.diff(U, axis=0), axis=2)) + np.sum(np.abs(np.diff(B, axis=0)))
    return float(init + var)


@dataclass(frozen=True)
class SlaterReport:
    epsilon: float
    witness_times: list
    inter_node_bound: float
    grid: np.ndarray
    margins: np.ndarray
    witnesses: np.ndarray
    radius: float


def _refined_grid(mesh, refine):
    t = mesh.nodes
    pieces = [np.linspace(t[j], t[j + 1], refine + 1)[:-1] for j in range(mesh.nu)]
    return np.concatenate(pieces + [t[-1:]])


def _margin_of(path, t, x):
    u, b = path.eval(t)
    return float(np.min(b - u @ x))


def check_uniform_slater(path, R, refine=1):
    """Minimum Slater margin of ``C(t)`` over a refined grid inside the box ``|x_k| <= R``.

    Returns a report with ``epsilon`` (grid minimum), the grid times attaining
    it, and ``inter_node_bound``: a lower bound for the margin valid for every
    ``t`` in ``[0, T]``. On each grid interval the node witness is kept fixed;
    its margin is a minimum of affine functions of ``t`` and hence concave, so
    checking both endpoints bounds it over the whole interval.
    """
    refine = int(refine)
    if refine < 1:
        raise ValueError("refine must be >= 1")
    grid = _refined_grid(path.mesh, refine)
    certs = [slater_margin(path.polyhedron(t), R) for t in grid]
    margins = np.array([c.margin for c in certs])
    witnesses = np.array([c.point for c in certs])
    eps = float(np.min(margins))
    tol = 1e-12 * max(1.0, abs(eps))
    times = [float(t) for t, mg in zip(grid, margins) if mg <= eps + tol]
    bound = np.inf
    for a in range(grid.size - 1):
        best = -np.inf
        for x in (witnesses[a], witnesses[a + 1]):
            best = max(best, min(_margin_of(path, grid[a], x), _margin_of(path, grid[a + 1], x)))
        bound = min(bound, best)
    return SlaterReport(eps, times, float(bound), grid, margins, witnesses, float(R))


@dataclass(frozen=True)
class ReparamResult:
    gamma_knots: np.ndarray
    inverse_mesh: Mesh
    path: ControlPath


def reparameterize(path):
    """Time change ``gamma(t) = t + int_0^t sum_i (||u_i'|| + |b_i'|)``.

    The knots of the returned path are the original knots placed at
    ``gamma(t_j)``, so every component moves by at most the elapsed new time.
    """
    U, B = path.u_knots, path.b_knots
    inc = np.sum(np.linalg.norm(np.diff(U, axis=0), axis=2), axis=1) + np.sum(np.abs(np.diff(B, axis=0)), axis=1)
    gamma = path.mesh.nodes + np.concatenate([[0.0], np.cumsum(inc)])
    mesh = Mesh(gamma)
    return ReparamResult(_frozen(gamma), mesh, ControlPath(mesh, U, B))


def combined_increments(path):
    """Per-interval ``sum_i ||Δu_i|| + |Δb_i|``."""
    U, B = path.u_knots, path.b_knots
    return np.sum(np.linalg.norm(np.diff(U, axis=0), axis=2), axis=1) + np.sum(np.abs(np.diff(B, axis=0)), axis=1)


def constant_path(mesh, normals, offsets):
    N = len(mesh)
    U = np.repeat(np.asarray(normals, dtype=float)[None], N, axis=0)
    B = np.repeat(np.asarray(offsets, dtype=float)[None], N, axis=0)
    return ControlPath(mesh, U, B)


def example21_path(mesh=None, normalized=False):
    """Control pair ``u_1 = (0, 1), b_1 = 1, u_2(t) = (t, -1), b_2 = 0`` on ``[0, 1]``.

    With ``normalized=True`` the second normal is scaled to unit length at
    every node; this describes the same sets at the nodes.
    """
    mesh = Mesh.uniform(1.0, 1) if mesh is None else mesh
    t = mesh.nodes
    N = t.size
    U = np.zeros((N, 2, 2))
    U[:, 0, 1] = 1.0
    U[:, 1, 0] = t
    U[:, 1, 1] = -1.0
    if normalized:
        U[:, 1, :] /= np.sqrt(1.0 + t * t)[:, None]
    B = np.zeros((N, 2))
    B[:, 0] = 1.0
    return ControlPath(mesh, U, B, normalized_delta=0.0 if normalized else None)
