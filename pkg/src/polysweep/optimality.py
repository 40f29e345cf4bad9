"""Coderivative of the polyhedral normal-cone map and multiplier recovery
for the discrete optimality conditions."""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from ._lp import solve_lp
from .discopt import BAND
from .errors import InconsistentInput, Infeasible, NotFeasible, PLICQViolation
from .geometry import plicq_check

RECON_TOL = 1e-10


def _data(u, b, x):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x = np.asarray(x, dtype=float)
    return u, b, x


def _slack(u, b, x, band):
    s = b - u @ x
    if np.any(s < -band):
        raise NotFeasible("x is not in C(u, b)")
    return s


def q_pattern(u, b, x, p, y, band=BAND):
    """Sign restriction on each ``q_i``: ``"zero"``, ``"nonneg"`` or ``"free"``.

    Active indices with ``<u_i, y> = 0`` are unrestricted whatever ``p_i`` is.
    """
    u, b, x = _data(u, b, x)
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    s = _slack(u, b, x, band)
    uy = u @ y
    kinds = []
    for i in range(u.shape[0]):
        if s[i] > band:
            kinds.append("zero")
        elif p[i] > band:
            if abs(uy[i]) > band:
                raise InconsistentInput(f"p_{i} > 0 but <u_{i}, y> = {uy[i]!r} is not 0")
            kinds.append("free")
        elif uy[i] < -band:
            kinds.append("zero")
        elif uy[i] > band:
            kinds.append("nonneg")
        else:
            kinds.append("free")
    return kinds


def p_set_element(u, b, x, v, y, band=BAND):
    """Least-sum ``p >= 0`` supported on active ``i`` with ``<u_i, y> = 0`` and ``A^T p = v``.

    Raises
    ------
    InconsistentInput
        ``v`` is not a normal vector of ``C(u, b)`` at ``x``.
    Infeasible
        No such ``p`` exists for this ``y``.
    """
    u, b, x = _data(u, b, x)
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    s = _slack(u, b, x, band)
    active = np.flatnonzero(s <= band)
    scale = max(1.0, float(np.linalg.norm(v)))
    if active.size == 0:
        if np.linalg.norm(v) > band * scale:
            raise InconsistentInput("v is not normal to C at x")
        return np.zeros(u.shape[0])
    _, res = nnls(u[active].T, v)
    if res > 1e-9 * scale:
        raise InconsistentInput("v is not normal to C at x")
    allowed = [i for i in active if abs(u[i] @ y) <= band]
    p = np.zeros(u.shape[0])
    if not allowed:
        if np.linalg.norm(v) > 1e-9 * scale:
            raise Infeasible("P(y) is empty")
        return p
    U = u[allowed]
    sol = solve_lp(np.ones(len(allowed)), A_eq=U.T, b_eq=v, bounds=[(0, None)] * len(allowed))
    if sol is None:
        raise Infeasible("P(y) is empty")
    coef = np.maximum(sol[0], 0.0)
    # Refine on the support so that A^T p = v holds to rounding.
    supp = coef > 1e-12
    if np.any(supp):
        ref, *_ = np.linalg.lstsq(U[supp].T, v, rcond=None)
        if np.all(ref >= 0) and np.linalg.norm(U[supp].T @ ref - v) <= np.linalg.norm(U.T @ coef - v):
            coef[:] = 0.0
            coef[supp] = ref
    if np.linalg.norm(U.T @ coef - v) > 1e-9 * scale:
        raise Infeasible("P(y) is empty")
    p[allowed] = coef
    return p


@dataclass(frozen=True)
class CoderivativeCertificate:
    p: np.ndarray
    q: np.ndarray
    x_part: np.ndarray
    u_part: np.ndarray
    b_part: np.ndarray


def coderivative_member(u, b, x, v, y, candidate, band=BAND):
    """Check ``candidate = (x_part, u_part, b_part)`` against the coderivative estimate.

    The estimate contains ``(A^T q, (p_i y + q_i x)_i, -q)`` for ``p`` in ``P(y)``
    and ``q`` in ``Q(p)``. The ``b`` part fixes ``q``; when ``y != 0`` the ``u``
    part fixes ``p``, so the search is exact. Returns ``(member, certificate)``
    with ``certificate`` None on rejection.

    Raises
    ------
    Infeasible
        ``P(y)`` is empty.
    """
    u, b, x = _data(u, b, x)
    m, n = u.shape
    y = np.asarray(y, dtype=float)
    cx = np.asarray(candidate[0], dtype=float).reshape(n)
    cu = np.asarray(candidate[1], dtype=float).reshape(m, n)
    cb = np.asarray(candidate[2], dtype=float).reshape(m)
    p_default = p_set_element(u, b, x, v, y, band)
    s = _slack(u, b, x, band)
    q = -cb
    yy = float(y @ y)
    # y at rounding level carries no direction; treat it as zero
    if np.sqrt(yy) > 1e-12 * (1.0 + float(np.linalg.norm(x))):
        p = (cu - q[:, None] * x[None, :]) @ y / yy
        p[np.abs(p) <= 1e-13] = 0.0
        if np.any(p < -band) or np.any(p[s > band] != 0.0):
            return False, None
        p = np.maximum(p, 0.0)
        if np.any((p > band) & (np.abs(u @ y) > band)):
            return False, None
        vv = np.asarray(v, dtype=float)
        if np.linalg.norm(u.T @ p - vv) > 1e-9 * max(1.0, float(np.linalg.norm(vv))):
            return False, None
    else:
        p = p_default
    kinds = q_pattern(u, b, x, p, y, band)
    for i, kind in enumerate(kinds):
        if kind == "zero" and q[i] != 0.0:
            return False, None
        if kind == "nonneg" and q[i] < 0.0:
            return False, None
    x_part = u.T @ q
    u_part = p[:, None] * y[None, :] + q[:, None] * x[None, :]
    b_part = -q
    scale = 1.0 + max(float(np.max(np.abs(cx), initial=0.0)), float(np.max(np.abs(cu), initial=0.0)))
    if (np.max(np.abs(x_part - cx), initial=0.0) > RECON_TOL * scale
            or np.max(np.abs(u_part - cu), initial=0.0) > RECON_TOL * scale):
        return False, None
    return True, CoderivativeCertificate(p, q, x_part, u_part, b_part)


# -- multiplier recovery ------------------------------------------------------

@dataclass(frozen=True)
class MultiplierSet:
    """Dual data of the discrete necessary conditions.

    ``eta[j]`` for ``j < nu`` are the step multipliers of the dynamics and
    ``eta[nu]`` the multiplier of the terminal hidden constraint.
    ``omega`` holds the weights of the active facets of the inflated target.
    """

    lam: float
    px: np.ndarray
    pu: np.ndarray
    pb: np.ndarray
    eta: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    omega_facets: tuple
    theta_u: np.ndarray
    theta_b: np.ndarray
    theta_x: np.ndarray

    def normalization(self):
        return float(self.lam + np.linalg.norm(self.alpha1) + np.linalg.norm(self.alpha2)
                     + np.linalg.norm(self.eta[-1]) + np.linalg.norm(self.omega)
                     + sum(np.linalg.norm(np.concatenate([self.px[j], self.pu[j].ravel(), self.pb[j]]))
                           for j in range(self.px.shape[0]))
                     + np.linalg.norm(self.gamma))

    def ntc0(self):
        nu = self.px.shape[0] - 1
        return float(self.lam + np.linalg.norm(self.alpha1 - self.alpha2) + np.linalg.norm(self.eta[nu])
                     + sum(np.linalg.norm(self.px[j]) for j in range(nu))
                     + np.linalg.norm(self.pu[0]) + np.linalg.norm(self.pb[0]))

    def ntc1(self):
        return float(self.lam + np.linalg.norm(self.alpha1 - self.alpha2) + np.linalg.norm(self.gamma)
                     + np.linalg.norm(self.pu[-1]) + np.linalg.norm(self.pb[-1]))

    def scaled(self, c):
        f = lambda a: np.asarray(a) * c
        return MultiplierSet(self.lam * c, f(self.px), f(self.pu), f(self.pb),
                             np.vstack([self.eta[:-1], f(self.eta[-1:])]), f(self.alpha1), f(self.alpha2),
                             f(self.gamma), f(self.omega), self.omega_facets,
                             self.theta_u, self.theta_b, self.theta_x)


@dataclass(frozen=True)
class KKTResult:
    multipliers: MultiplierSet
    residuals: dict
    ntc0: float
    ntc1: float
    normalization_error: float
    plicq: bool
    mode: str
    patterns_tried: int

    @property
    def max_residual(self):
        return max(self.residuals.values())


class _Layout:
    def __init__(self, nu, m, n, K):
        self.nu, self.m, self.n, self.K = nu, m, n, K
        sizes = [("lam", 1), ("px", (nu + 1) * n), ("pu", (nu + 1) * m * n), ("pb", (nu + 1) * m),
                 ("gam", nu * m), ("a1", (nu + 1) * m), ("a2", (nu + 1) * m), ("etaN", m), ("om", K)]
        self.off = {}
        pos = 0
        for name, size in sizes:
            self.off[name] = pos
            pos += size
        self.size = pos

    def lam(self):
        return self.off["lam"]

    def px(self, j, c):
        return self.off["px"] + j * self.n + c

    def pu(self, j, i, c):
        return self.off["pu"] + (j * self.m + i) * self.n + c

    def pb(self, j, i):
        return self.off["pb"] + j * self.m + i

    def gam(self, j, i):
        return self.off["gam"] + j * self.m + i

    def a1(self, j, i):
        return self.off["a1"] + j * self.m + i

    def a2(self, j, i):
        return self.off["a2"] + j * self.m + i

    def etaN(self, i):
        return self.off["etaN"] + i

    def om(self, k):
        return self.off["om"] + k

    def free_slice(self):
        return range(self.off["px"], self.off["a1"])


def _step_multipliers(triple, band, tol):
    """Least-sum ``eta_j >= 0`` on the active set reproducing each step."""
    nu = triple.mesh.nu
    h = triple.mesh.steps
    m = triple.u.shape[1]
    eta = np.zeros((nu, m))
    res = np.zeros(nu)
    for j in range(nu):
        v = -(triple.x[j + 1] - triple.x[j]) / h[j]
        s = triple.b[j] - triple.u[j] @ triple.x[j]
        if np.any(s < -tol):
            raise Infeasible(f"state {j} violates its constraints by {-np.min(s)!r}")
        act = np.flatnonzero(np.abs(s) <= band * max(1.0, float(np.max(np.abs(triple.b[j])))))
        scale = max(1.0, float(np.linalg.norm(v)))
        if act.size == 0:
            r = float(np.linalg.norm(v))
        else:
            U = triple.u[j][act]
            coef, r = nnls(U.T, v)
            sol = solve_lp(np.ones(act.size), A_eq=U.T, b_eq=v, bounds=[(0, None)] * act.size) if r <= tol * scale else None
            if sol is not None:
                c2 = np.maximum(sol[0], 0.0)
                if np.linalg.norm(U.T @ c2 - v) <= max(r, 1e-12 * scale) * 10 + 1e-11 * scale:
                    coef = c2
            eta[j, act] = coef
            r = float(np.linalg.norm(U.T @ coef - v))
        if r > tol * scale:
            raise Infeasible(f"step {j}: velocity is not in the normal cone (residual {r!r})")
        res[j] = r
    return eta, res


def _active(triple, j, band):
    s = triple.b[j] - triple.u[j] @ triple.x[j]
    return np.abs(s) <= band * max(1.0, float(np.max(np.abs(triple.b[j]))))


def recover_multipliers(inst, triple, tol=1e-6, band=BAND, max_patterns=4096):
    """Solve the discrete necessary conditions for multipliers along ``triple``.

    The conditions are linear in the dual variables once the step
    multipliers are fixed by the dynamics, and homogeneous in them. The LP
    is solved with ``lambda = 1`` (least l1 size) and the result is rescaled so
    that ``lambda + sum of norms = 1``; if that fails, ``lambda = 0`` is tried
    with a linear normalization. Constraints that are active with zero step
    multiplier give a two-way sign disjunction; branch combinations are
    enumerated up to ``max_patterns``.

    Raises
    ------
    Infeasible
        Dynamics violated, or no multiplier set satisfies the conditions.
    PLICQViolation
        Active normals are positively dependent at some boundary state.
    """
    sc = inst.scenario
    nu, m, n = inst.nu, inst.m, inst.n
    h = inst.mesh.steps
    u, b, x = triple.u, triple.b, triple.x
    eta, res87 = _step_multipliers(triple, band, tol)
    for j in range(nu + 1):
        act = _active(triple, j, band)
        if np.any(act) and not plicq_check(u[j][act]):
            raise PLICQViolation(j)
    s_end = b[nu] - u[nu] @ x[nu]
    if np.any(s_end < -tol):
        raise Infeasible("terminal state violates its constraints")
    theta = inst.theta(triple)
    th_u = theta[:, :m * n].reshape(nu, m, n)
    th_b = theta[:, m * n:m * n + m]
    th_x = theta[:, m * n + m:]
    om = inst.omega_inflated
    om_s = om.offsets - om.normals @ x[nu]
    if np.any(om_s < -tol):
        raise Infeasible("endpoint outside the inflated target set")
    facets = tuple(int(k) for k in np.flatnonzero(om_s <= band * max(1.0, float(np.max(np.abs(om.offsets))))))
    K = len(facets)
    L = _Layout(nu, m, n, K)
    norms = np.linalg.norm(u, axis=2)
    grad_phi = sc.terminal_cost.grad(x[nu])

    rows, rhs = [], []

    def row():
        r = np.zeros(L.size)
        rows.append(r)
        rhs.append(0.0)
        return r

    for j in range(nu):
        for i in range(m):
            for c in range(n):
                r = row()
                r[L.pu(j + 1, i, c)] += 1.0 / h[j]
                r[L.pu(j, i, c)] -= 1.0 / h[j]
                r[L.a1(j, i)] -= 2.0 / h[j] * u[j, i, c]
                r[L.a2(j, i)] += 2.0 / h[j] * u[j, i, c]
                r[L.gam(j, i)] -= x[j, c]
                r[L.px(j + 1, c)] -= eta[j, i]
                r[L.lam()] += eta[j, i] * th_x[j, c] / h[j]
        for i in range(m):
            r = row()
            r[L.pb(j + 1, i)] += 1.0 / h[j]
            r[L.pb(j, i)] -= 1.0 / h[j]
            r[L.gam(j, i)] += 1.0
        for c in range(n):
            r = row()
            r[L.px(j + 1, c)] += 1.0 / h[j]
            r[L.px(j, c)] -= 1.0 / h[j]
            for i in range(m):
                r[L.gam(j, i)] -= u[j, i, c]
    for c in range(n):
        r = row()
        r[L.px(nu, c)] += 1.0
        r[L.lam()] += grad_phi[c]
        for kk, f in enumerate(facets):
            r[L.om(kk)] += om.normals[f, c]
        for i in range(m):
            r[L.etaN(i)] += u[nu, i, c]
    for i in range(m):
        for c in range(n):
            r = row()
            r[L.pu(nu, i, c)] += 1.0
            r[L.a1(nu, i)] += 2.0 * u[nu, i, c]
            r[L.a2(nu, i)] -= 2.0 * u[nu, i, c]
            r[L.etaN(i)] += x[nu, c]
    for i in range(m):
        r = row()
        r[L.pb(nu, i)] += 1.0
        r[L.etaN(i)] -= 1.0

    def w_row(j, i):
        # <u_ij, p^x_{j+1} - lambda theta^x_j / h_j> as a linear form
        r = np.zeros(L.size)
        for c in range(n):
            r[L.px(j + 1, c)] += u[j, i, c]
        r[L.lam()] -= float(u[j, i] @ th_x[j]) / h[j]
        return r

    pos_eta = eta > band
    for j in range(nu):
        for i in range(m):
            if pos_eta[j, i]:
                rows.append(w_row(j, i))
                rhs.append(0.0)
    A_eq_base = np.array(rows)
    b_eq_base = np.array(rhs)

    bounds = [(None, None)] * L.size
    for j in range(nu + 1):
        for i in range(m):
            bounds[L.a1(j, i)] = (0, None) if abs(norms[j, i] - (1 + inst.delta)) <= band else (0, 0)
            bounds[L.a2(j, i)] = (0, None) if abs(norms[j, i] - (1 - inst.delta)) <= band else (0, 0)
    end_act = np.abs(s_end) <= band * max(1.0, float(np.max(np.abs(b[nu]))))
    for i in range(m):
        bounds[L.etaN(i)] = (0, None) if end_act[i] else (0, 0)
    for kk in range(K):
        bounds[L.om(kk)] = (0, None)
    disj = []
    for j in range(nu):
        act = _active(triple, j, band)
        for i in range(m):
            if not act[i]:
                bounds[L.gam(j, i)] = (0, 0)
            elif not pos_eta[j, i]:
                disj.append((j, i))

    free = list(L.free_slice())
    nonneg = [k for k in range(L.size) if k not in free and k != L.lam()]
    F = len(free)
    E = A_eq_base.shape[0]

    def solve_pattern(pattern, lam_value):
        # Columns: z, t >= |z_free|, equality slacks (+, -), disjunction slacks.
        bnds = list(bounds)
        ub_z = []
        for (j, i), branch in zip(disj, pattern):
            wr = w_row(j, i)
            if branch == 0:
                bnds[L.gam(j, i)] = (0, 0)
                ub_z.append(wr)
            else:
                bnds[L.gam(j, i)] = (0, None)
                ub_z.append(-wr)
        bnds[L.lam()] = (lam_value, lam_value)
        D = len(ub_z)
        N = L.size + F + 2 * E + D
        so = L.size + F
        A_eq = np.zeros((E, N))
        A_eq[:, :L.size] = A_eq_base
        A_eq[:, so:so + E] = np.eye(E)
        A_eq[:, so + E:so + 2 * E] = -np.eye(E)
        b_eq = b_eq_base.copy()
        ub = []
        for kk, r in enumerate(ub_z):
            row_ = np.zeros(N)
            row_[:L.size] = r
            row_[so + 2 * E + kk] = -1.0
            ub.append(row_)
        for kk, idx in enumerate(free):
            r1 = np.zeros(N)
            r1[idx] = 1.0
            r1[L.size + kk] = -1.0
            r2 = np.zeros(N)
            r2[idx] = -1.0
            r2[L.size + kk] = -1.0
            ub += [r1, r2]
        size_cost = np.zeros(N)
        size_cost[L.size:L.size + F] = 1.0
        size_cost[nonneg] = 1.0
        if lam_value == 0.0:
            # Abnormal case: fix the sign-constrained mass.
            norm_row = np.zeros(N)
            norm_row[nonneg] = 1.0
            A_eq = np.vstack([A_eq, norm_row])
            b_eq = np.concatenate([b_eq, [1.0]])
        slack_cost = np.zeros(N)
        slack_cost[so:] = 1.0
        all_bounds = bnds + [(0, None)] * (N - L.size)
        first = solve_lp(slack_cost, A_ub=np.array(ub), b_ub=np.zeros(len(ub)), A_eq=A_eq, b_eq=b_eq,
                         bounds=all_bounds)
        if first is None:
            return None
        cap = first[1] * (1 + 1e-9) + 1e-13
        second = solve_lp(size_cost, A_ub=np.array(ub + [slack_cost]), b_ub=np.concatenate([np.zeros(len(ub)), [cap]]),
                          A_eq=A_eq, b_eq=b_eq, bounds=all_bounds)
        z = (second or first)[0][:L.size]
        return z

    def assemble(z):
        def blk(name, shape):
            start = L.off[name]
            size = int(np.prod(shape))
            return z[start:start + size].reshape(shape).copy()

        eta_full = np.vstack([eta, blk("etaN", (m,))[None, :]])
        raw = MultiplierSet(float(z[L.lam()]), blk("px", (nu + 1, n)), blk("pu", (nu + 1, m, n)),
                            blk("pb", (nu + 1, m)), np.maximum(eta_full, 0.0),
                            np.maximum(blk("a1", (nu + 1, m)), 0.0), np.maximum(blk("a2", (nu + 1, m)), 0.0),
                            blk("gam", (nu, m)), np.maximum(blk("om", (K,)), 0.0), facets, th_u, th_b, th_x)
        size = raw.normalization()
        if not size > 0:
            return None, None
        ms = raw.scaled(1.0 / size)
        resid = condition_residuals(inst, triple, ms, band)
        resid["87"] = float(np.max(res87, initial=0.0))
        return ms, resid

    tried = 0
    best = None
    for lam_value, label in ((1.0, "normal"), (0.0, "abnormal")):
        for pattern in itertools.islice(itertools.product((0, 1), repeat=len(disj)), max_patterns):
            tried += 1
            z = solve_pattern(pattern, lam_value)
            if z is None:
                continue
            ms, resid = assemble(z)
            if ms is None:
                continue
            worst = max(resid.values())
            if best is None or worst < best[0]:
                best = (worst, ms, resid, label)
            if worst <= tol:
                break
        if best is not None and best[0] <= tol:
            break
    if best is None or best[0] > tol:
        detail = "" if best is None else f" (smallest residual {best[0]!r})"
        raise Infeasible("no multiplier set satisfies the discrete necessary conditions" + detail)
    _, ms, resid, mode = best
    if not (ms.ntc0() > 0 and ms.ntc1() > 0):
        raise Infeasible("nontriviality fails: one of the two multiplier sums vanishes")
    return KKTResult(ms, resid, ms.ntc0(), ms.ntc1(), abs(ms.normalization() - 1.0), True, mode, tried)


def condition_residuals(inst, triple, ms, band=BAND):
    """Max violation of every condition family for a given multiplier set."""
    nu, m, n = inst.nu, inst.m, inst.n
    h = inst.mesh.steps
    u, b, x = triple.u, triple.b, triple.x
    lam = ms.lam
    out = {k: 0.0 for k in ("cona", "conb", "conx", "congg1", "71l1", "71l2", "eta", "eta1", "96",
                            "nmutx", "nmuta", "nmutb", "sign")}

    def bump(key, val):
        out[key] = max(out[key], float(val))

    norms = np.linalg.norm(u, axis=2)
    for j in range(nu):
        w = ms.px[j + 1] - lam * ms.theta_x[j] / h[j]
        lhs = (ms.pu[j + 1] - ms.pu[j]) / h[j] - 2.0 / h[j] * (ms.alpha1[j] - ms.alpha2[j])[:, None] * u[j]
        rhs = ms.gamma[j][:, None] * x[j][None, :] + ms.eta[j][:, None] * w[None, :]
        bump("cona", np.max(np.abs(lhs - rhs)))
        bump("conb", np.max(np.abs((ms.pb[j + 1] - ms.pb[j]) / h[j] + ms.gamma[j])))
        bump("conx", np.max(np.abs((ms.px[j + 1] - ms.px[j]) / h[j] - u[j].T @ ms.gamma[j])))
        s = b[j] - u[j] @ x[j]
        sb = band * max(1.0, float(np.max(np.abs(b[j]))))
        uw = u[j] @ w
        for i in range(m):
            g = ms.gamma[j, i]
            if s[i] > sb:
                bump("congg1", abs(g))
                bump("eta", abs(ms.eta[j, i]))
            elif ms.eta[j, i] > band:
                bump("96", abs(uw[i]))
            elif uw[i] < -band:
                bump("congg1", abs(g))
            elif uw[i] > band:
                bump("congg1", max(-g, 0.0))
    s_end = b[nu] - u[nu] @ x[nu]
    sb = band * max(1.0, float(np.max(np.abs(b[nu]))))
    for i in range(m):
        if s_end[i] > sb:
            bump("eta1", abs(ms.eta[nu, i]))
    om = inst.omega_inflated
    normal = sum((w * om.normals[f] for w, f in zip(ms.omega, ms.omega_facets)), np.zeros(n))
    grad_phi = inst.scenario.terminal_cost.grad(x[nu])
    bump("nmutx", np.max(np.abs(-ms.px[nu] - lam * grad_phi - normal - u[nu].T @ ms.eta[nu])))
    target = -2.0 * (ms.alpha1[nu] - ms.alpha2[nu])[:, None] * u[nu] - ms.eta[nu][:, None] * x[nu][None, :]
    bump("nmuta", np.max(np.abs(ms.pu[nu] - target)))
    bump("nmutb", np.max(np.abs(ms.pb[nu] - ms.eta[nu])))
    bump("71l1", np.max(np.abs(ms.alpha1 * (norms - (1 + inst.delta)))))
    bump("71l2", np.max(np.abs(ms.alpha2 * (norms - (1 - inst.delta)))))
    neg = [min(lam, 0.0), np.min(ms.eta, initial=0.0), np.min(ms.alpha1, initial=0.0),
           np.min(ms.alpha2, initial=0.0), np.min(ms.omega, initial=0.0)]
    bump("sign", -min(neg))
    return out
