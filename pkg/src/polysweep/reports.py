"""JSON documents for runs, solutions and certificates.

Floats are written with Python's shortest round-trip repr, so every value
reads back bit-identical.
"""

import json
import math

import numpy as np

from .control import Mesh
from .discopt import DiscreteTriple, SolveOptions
from .errors import ScenarioError
from .scenario import scenario_from_dict

SOLUTION_FORMAT = "polysweep-solution"
CERTIFICATE_FORMAT = "polysweep-certificate"
VERSION = 1


def jsonable(obj):
    """Convert numpy containers and scalars to plain JSON types (non-finite floats become strings)."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(doc):
    return json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_json(doc, path):
    with open(path, "w") as fh:
        fh.write(dumps(doc))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def triple_to_dict(triple):
    return jsonable({"nodes": triple.mesh.nodes, "u": triple.u, "b": triple.b, "x": triple.x})


def triple_from_dict(d):
    return DiscreteTriple(Mesh(np.asarray(d["nodes"], dtype=float)), np.asarray(d["u"], dtype=float),
                          np.asarray(d["b"], dtype=float), np.asarray(d["x"], dtype=float))


def solution_to_dict(scenario, k, options, result):
    """Solution document: scenario, level, options, triple, cost and diagnostics."""
    return jsonable({"format": SOLUTION_FORMAT, "version": VERSION, "scenario": scenario.to_dict(), "level": k,
            "options": {"seed": options.seed, "budget": options.budget, "rounds": options.rounds},
            "triple": triple_to_dict(result.triple), "eta": result.eta, "cost": result.cost,
            "budget_exhausted": result.budget_exhausted,
            "report": {"residuals": result.report.residuals, "values": result.report.values,
                       "tol": result.report.tol},
            "diagnostics": result.diagnostics})


def solution_from_dict(d):
    """Returns ``(scenario, level, triple)``."""
    if d.get("format") != SOLUTION_FORMAT:
        raise ScenarioError("not a solution document")
    return scenario_from_dict(d["scenario"]), int(d["level"]), triple_from_dict(d["triple"])


def options_from_dict(d):
    o = d.get("options", {})
    return SolveOptions(seed=int(o.get("seed", 0)), budget=o.get("budget"), rounds=int(o.get("rounds", 5)))


def certificate_to_dict(kkt=None, error=None, plicq=None):
    """Certificate document; ``kkt`` is a :class:`KKTResult` or None on failure."""
    doc = {"format": CERTIFICATE_FORMAT, "version": VERSION}
    if kkt is None:
        doc.update({"status": "infeasible", "error": error, "plicq": plicq})
        return doc
    ms = kkt.multipliers
    doc.update({
        "status": "certified", "mode": kkt.mode, "plicq": kkt.plicq,
        "residuals": kkt.residuals, "max_residual": kkt.max_residual,
        "ntc0": kkt.ntc0, "ntc1": kkt.ntc1, "normalization_error": kkt.normalization_error,
        "multipliers": {"lambda": ms.lam, "px": ms.px, "pu": ms.pu, "pb": ms.pb, "eta": ms.eta,
                        "alpha1": ms.alpha1, "alpha2": ms.alpha2, "gamma": ms.gamma,
                        "omega": ms.omega, "omega_facets": list(ms.omega_facets)},
    })
    return doc


def trajectory_report(traj, path):
    """Run report: feasibility residual and active set per node."""
    from .geometry import residual
    nodes = []
    for j, t in enumerate(traj.mesh.nodes):
        r, _ = residual(path.node_polyhedron(j), traj.states[j])
        act = traj.initial_active if j == 0 else traj.active_sets[j - 1]
        nodes.append({"t": t, "residual": max(r, 0.0), "active": list(act)})
    return {"scheme": traj.scheme, "nodes": len(nodes), "max_residual": max(n["residual"] for n in nodes),
            "per_node": nodes}
