"""Finite-dimensional convex polyhedra ``{x : <u_i, x> <= b_i}``.

Membership, Euclidean projection, ball-truncated distance, residuals of the
defining system, Slater margins, active sets and positive linear
independence of normals.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from ._lp import solve_lp
from .errors import (
    DimensionMismatch,
    EmptyPolyhedron,
    EmptyTruncation,
    NotApplicable,
    NotFeasible,
    NumericalFailure,
    OutOfDomain,
)

FEAS_TOL = 1e-9
ACTIVE_TOL = 1e-7
STAT_TOL = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """The set ``C(u, b) = {x : normals @ x <= offsets}``.

    Parameters
    ----------
    normals : array_like, shape (m, n)
        Rows are the constraint normals ``u_i``.
    offsets : array_like, shape (m,)
        Right-hand sides ``b_i``.
    """

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"normals {A.shape} and offsets {b.shape} disagree")
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionMismatch("need m >= 1 and n >= 1")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("polyhedron data must be finite")
        object.__setattr__(self, "normals", _frozen(A))
        object.__setattr__(self, "offsets", _frozen(b))

    @property
    def m(self):
        return self.normals.shape[0]

    @property
    def n(self):
        return self.normals.shape[1]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x

    @cached_property
    def _unit(self):
        # Row-normalized system; zero rows are dropped (vacuous) or flagged.
        norms = np.linalg.norm(self.normals, axis=1)
        keep = norms > 0.0
        degenerate_empty = bool(np.any(~keep & (self.offsets < 0.0)))
        A = self.normals[keep] / norms[keep, None]
        c = self.offsets[keep] / norms[keep]
        return A, c, norms, np.flatnonzero(keep), degenerate_empty

    @cached_property
    def is_empty(self):
        """Decide emptiness with the LP ``min t s.t. A x - t <= b``."""
        A, c, _, _, degenerate_empty = self._unit
        if degenerate_empty:
            return True
        if A.shape[0] == 0:
            return False
        k, n = A.shape
        A_ub = np.hstack([A, -np.ones((k, 1))])
        bounds = [(None, None)] * n + [(-1.0, None)]
        obj = np.zeros(n + 1)
        obj[-1] = 1.0
        sol = solve_lp(obj, A_ub=A_ub, b_ub=c, bounds=bounds)
        return sol is None or sol[1] > FEAS_TOL


@dataclass(frozen=True)
class ProjectionResult:
    """Nearest point of a polyhedron together with normal-cone data.

    ``input - point = sum_i multipliers[i] * normals[i]`` with nonnegative
    multipliers supported on ``active``.
    """

    point: np.ndarray
    multipliers: np.ndarray
    active: tuple
    distance: float


@dataclass(frozen=True)
class SlaterCertificate:
    point: np.ndarray
    margin: float
    radius: float


def contains(P, x, tol=0.0):
    x = P._check(x)
    return bool(np.all(P.normals @ x <= P.offsets + tol))


def residual(P, x):
    """Return ``max_i(<u_i,x> - b_i)`` and the vector of positive parts."""
    x = P._check(x)
    r = P.normals @ x - P.offsets
    return float(np.max(r)), np.maximum(r, 0.0)


def _dual_active_set(A, c, x, max_iter):
    """Project ``x`` onto ``{A p <= c}`` (unit rows) by a dual active-set method.

    Starts from the unconstrained minimizer and adds violated constraints one
    at a time, smallest index first, keeping dual feasibility throughout.
    Returns ``(p, mu, active)`` or ``None`` if the set is empty.
    """
    p = x.copy()
    active = []
    mu = np.zeros(A.shape[0])
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)), float(np.linalg.norm(x)))
    viol_tol = 1e-13 * scale
    it = 0
    while True:
        s = A @ p - c
        s[active] = -np.inf
        violated = np.flatnonzero(s > viol_tol)
        if violated.size == 0:
            break
        q = int(violated[0])
        while True:
            it += 1
            if it > max_iter:
                raise NumericalFailure("projection exceeded its iteration budget")
            if active:
                N = A[active].T
                r = np.linalg.lstsq(N, A[q], rcond=None)[0]
                z = A[q] - N @ r
            else:
                r = np.zeros(0)
                z = A[q].copy()
            t1, block = np.inf, -1
            for k, rk in enumerate(r):
                if rk > 1e-14:
                    ratio = mu[active[k]] / rk
                    if ratio < t1:
                        t1, block = ratio, k
            zz = float(z @ z)
            viol = float(A[q] @ p - c[q])
            t2 = viol / zz if zz > 1e-24 else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                return None
            if np.isfinite(t2):
                p = p - t * z
            for k, idx in enumerate(active):
                mu[idx] -= t * r[k]
            mu[q] += t
            if t2 <= t1:
                active.append(q)
                break
            mu[active[block]] = 0.0
            del active[block]
        active.sort()
    # Exact recomputation on the identified active set.
    if active:
        N = A[active].T
        Q, R = np.linalg.qr(N)
        y = solve_triangular(R, N.T @ x - c[active], trans="T")
        w = solve_triangular(R, y)
        p_exact = x - Q @ y
        if np.all(w >= -1e-12) and np.max(A @ p_exact - c) <= max(np.max(A @ p - c), viol_tol):
            p = p_exact
            mu[:] = 0.0
            mu[active] = np.maximum(w, 0.0)
    return p, mu, active


def project(P, x):
    """Euclidean projection of ``x`` onto ``P``.

    Raises
    ------
    EmptyPolyhedron
        If ``P`` is empty (confirmed by the feasibility LP).
    NumericalFailure
        If the active-set iteration does not terminate within ``50 (m + n)``.
    """
    x = P._check(x)
    A, c, norms, rows, degenerate_empty = P._unit
    if degenerate_empty:
        raise EmptyPolyhedron("zero normal with negative offset")
    mu_full = np.zeros(P.m)
    if A.shape[0] == 0:
        return ProjectionResult(x.copy(), mu_full, (), 0.0)
    # A feasible output of the active-set method certifies nonemptiness; the
    # feasibility LP decides only when the method breaks down.
    try:
        out = _dual_active_set(A, c, x, 50 * (P.m + P.n))
    except NumericalFailure:
        if P.is_empty:
            raise EmptyPolyhedron("projection onto an empty polyhedron") from None
        raise
    if out is None:
        if P.is_empty:
            raise EmptyPolyhedron("projection onto an empty polyhedron")
        raise NumericalFailure("active-set method declared a nonempty polyhedron infeasible")
    p, mu, active = out
    mu_full[rows] = mu / norms[rows]
    act = tuple(int(rows[i]) for i in active)
    return ProjectionResult(p, mu_full, act, float(np.linalg.norm(x - p)))


def distance(P, x):
    return project(P, x).distance


def truncated_distance(P, x, r):
    """Distance from ``x`` to ``P`` intersected with the closed ball ``B(0, r)``.

    The nearest point of the truncated set is ``proj_P(x / (1 + mu))`` for the
    ball multiplier ``mu >= 0``; when the plain projection leaves the ball,
    ``mu`` is found by bracketing ``||proj_P(x / (1 + mu))|| = r``.
    """
    x = P._check(x)
    if r <= 0:
        raise ValueError("radius must be positive")
    if np.linalg.norm(x) > r * (1 + 1e-12):
        raise OutOfDomain("truncated_distance needs ||x|| <= r")
    if P.is_empty:
        raise EmptyTruncation("polyhedron is empty")
    p0 = project(P, np.zeros(P.n)).point
    d0 = float(np.linalg.norm(p0))
    if d0 > r * (1 + 1e-12):
        raise EmptyTruncation(f"d(0,P)={d0!r} exceeds r={r!r}")
    px = project(P, x)
    if np.linalg.norm(px.point) <= r:
        return px.distance
    if d0 >= r:
        return float(np.linalg.norm(x - p0))

    def gap(mu):
        return np.linalg.norm(project(P, x / (1.0 + mu)).point) - r

    hi = 1.0
    while gap(hi) > 0:
        hi *= 4.0
        if hi > 1e300:
            raise NumericalFailure("ball multiplier bracket failed")
    mu = brentq(gap, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    p = project(P, x / (1.0 + mu)).point
    nrm = np.linalg.norm(p)
    if nrm > r:
        p = p * (r / nrm)
    return float(np.linalg.norm(x - p))


def slater_margin(P, R):
    """Largest uniform slack ``s`` with ``<u_i,x> + s <= b_i`` over the box ``|x_k| <= R``.

    Among maximizers the one of least l1 norm is returned, so the result
    does not depend on LP pivoting.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    A, b = P.normals, P.offsets
    m, n = A.shape
    obj = np.zeros(n + 1)
    obj[-1] = -1.0
    A_ub = np.hstack([A, np.ones((m, 1))])
    sol = solve_lp(obj, A_ub=A_ub, b_ub=b, bounds=[(-R, R)] * n + [(None, None)])
    if sol is None:
        raise NumericalFailure("Slater LP reported infeasibility")
    z, _ = sol
    point, s_star = z[:n], z[-1]
    # Tie-break: least l1 norm among (near) maximizers.
    slack = 1e-12 * (1.0 + abs(s_star))
    obj2 = np.concatenate([np.zeros(n), np.ones(n)])
    I = np.eye(n)
    A2 = np.vstack([
        np.hstack([A, np.zeros((m, n))]),
        np.hstack([I, -I]),
        np.hstack([-I, -I]),
    ])
    b2 = np.concatenate([b - s_star + slack, np.zeros(2 * n)])
    sol2 = solve_lp(obj2, A_ub=A2, b_ub=b2, bounds=[(-R, R)] * n + [(0, None)] * n)
    if sol2 is not None:
        cand = np.clip(sol2[0][:n], -R, R)
        if np.min(b - A @ cand) >= np.min(b - A @ point) - 2 * slack:
            point = cand
    point = np.clip(point, -R, R) + 0.0
    margin = float(np.min(b - A @ point))
    return SlaterCertificate(point=point, margin=margin, radius=float(R))


def distance_upper_bound(P, x, cert):
    """Bound ``d(x, P) <= f(x) / (f(x) - f(xh)) * ||x - xh||`` with ``f`` the max residual."""
    x = P._check(x)
    fx, _ = residual(P, x)
    if fx <= 0:
        raise NotApplicable("x lies in the polyhedron")
    if cert.margin <= 0:
        raise NotApplicable("certificate margin is not positive")
    fxh, _ = residual(P, cert.point)
    if fxh >= 0:
        raise NotApplicable("certificate point is not a Slater point of P")
    lam = fx / (fx - fxh)
    return float(lam * np.linalg.norm(x - cert.point))


def hoffman_ratio(P, x):
    """Ratio of distance to maximal constraint violation at ``x``."""
    fx, _ = residual(P, x)
    if fx <= 0:
        raise NotApplicable("x lies in the polyhedron")
    return project(P, x).distance / fx


def active_indices(P, x, tol=ACTIVE_TOL):
    """Zero-based indices ``i`` with ``|<u_i,x> - b_i| <= tol``."""
    x = P._check(x)
    s = P.normals @ x - P.offsets
    if np.any(s > tol):
        raise NotFeasible(f"x violates constraint(s) {np.flatnonzero(s > tol).tolist()}")
    return tuple(int(i) for i in np.flatnonzero(np.abs(s) <= tol))


def plicq_check(normals):
    """True iff the only ``alpha >= 0`` with ``sum alpha_i u_i = 0`` is zero."""
    U = np.asarray(normals, dtype=float)
    if U.size == 0:
        return True
    U = np.atleast_2d(U)
    k = U.shape[0]
    sol = solve_lp(-np.ones(k), A_eq=U.T, b_eq=np.zeros(U.shape[1]), bounds=[(0.0, 1.0)] * k)
    if sol is None:
        raise NumericalFailure("PLICQ LP reported infeasibility")
    return -sol[1] <= 1e-9
