"""Randomized checks of the truncation, error-bound and Hoffman estimates."""

from dataclasses import dataclass, field

import numpy as np

from .control import example21_path
from .geometry import distance, distance_upper_bound, hoffman_ratio, slater_margin, truncated_distance

HOFFMAN_GRID = (0.5, 0.2, 0.1, 0.05, 0.01)


def random_polyhedron(rng, n=None, m=None, max_n=6, max_m=8):
    """Feasible polyhedron around a random center with positive slacks."""
    from .geometry import Polyhedron
    n = int(rng.integers(1, max_n + 1)) if n is None else n
    m = int(rng.integers(1, max_m + 1)) if m is None else m
    A = rng.normal(size=(m, n))
    center = rng.normal(scale=2.0, size=n)
    slack = rng.exponential(1.0, size=m)
    return Polyhedron(A, A @ center + slack)


def random_ball_point(rng, n, r):
    d = rng.normal(size=n)
    d /= np.linalg.norm(d)
    return d * r * rng.uniform() ** (1.0 / n)


@dataclass
class PropertySummary:
    name: str
    samples: int = 0
    violations: int = 0
    worst_slack: float = float("inf")
    extra: dict = field(default_factory=dict)

    def record(self, slack, tol):
        self.samples += 1
        self.worst_slack = min(self.worst_slack, float(slack))
        if slack < -tol:
            self.violations += 1

    def to_dict(self):
        return {"name": self.name, "samples": self.samples, "violations": self.violations,
                "worst_slack": None if self.samples == 0 else self.worst_slack, **self.extra}


def truncation_sweep(rng, samples, tol=1e-7):
    """Check ``d(x, C^r) <= 2r/(r - d(0,C)) d(x, C)`` and the factor-3 form."""
    s17 = PropertySummary("truncation_factor")
    s18 = PropertySummary("truncation_factor_3")
    for _ in range(samples):
        P = random_polyhedron(rng)
        d0 = distance(P, np.zeros(P.n))
        r = d0 + rng.uniform(0.05, 3.0) * (1.0 + d0)
        x = random_ball_point(rng, P.n, r)
        dx = distance(P, x)
        dr = truncated_distance(P, x, r)
        s17.record(2 * r / (r - d0) * dx - dr, tol)
        if r > 3 * d0:
            s18.record(3 * dx - dr, tol)
    return s17, s18


def error_bound_sweep(rng, samples, tol=1e-7, min_margin=0.1, radius=10.0):
    """Check the Slater-point distance bound on polyhedra with margin above ``min_margin``."""
    s = PropertySummary("error_bound")
    while s.samples < samples:
        P = random_polyhedron(rng)
        cert = slater_margin(P, radius)
        if cert.margin <= min_margin:
            continue
        x = cert.point + rng.normal(scale=5.0, size=P.n)
        if np.max(P.normals @ x - P.offsets) <= 0:
            continue
        s.record(distance_upper_bound(P, x, cert) - distance(P, x), tol)
    return s


def hoffman_table(grid=HOFFMAN_GRID):
    """Ratios and distances at ``x = (t^-3, 1)`` for the rotating-halfspace example."""
    path = example21_path()
    rows = []
    for t in grid:
        P = path.polyhedron(t)
        x = np.array([t ** -3, 1.0])
        rows.append({"t": t, "ratio": hoffman_ratio(P, x), "expected_ratio": 1.0 / t,
                     "distance": distance(P, x), "expected_distance": t ** -3 - 1.0 / t})
    return rows


def verify_bounds(samples=1000, seed=0, tol=1e-7, rel_tol=1e-9):
    """Run all sweeps; returns a JSON-ready report with an overall ``passed`` flag."""
    rng = np.random.default_rng(seed)
    props = []
    if samples > 0:
        props += list(truncation_sweep(rng, samples, tol))
        props.append(error_bound_sweep(rng, samples, tol))
        rows = hoffman_table()
        worst = min(min(1e-9 - abs(r["ratio"] - r["expected_ratio"]) / r["expected_ratio"],
                        1e-9 - abs(r["distance"] - r["expected_distance"]) / r["expected_distance"])
                    for r in rows)
        hp = PropertySummary("hoffman_example", extra={"table": rows})
        hp.record(worst, 0.0)
        props.append(hp)
    passed = all(p.violations == 0 for p in props)
    return {"samples": samples, "seed": seed, "tolerance": tol, "passed": passed,
            "properties": [p.to_dict() for p in props]}
