"""Scenario files and builtin problem data."""

import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .control import ControlPath, Mesh, example21_path
from .discopt import Reference, SweepOCP, TerminalCost
from .errors import ScenarioError
from .geometry import Polyhedron
from .sweep import analytic_oracle

BUILTINS = ("example21",)


def _schema():
    return json.loads(resources.files("polysweep").joinpath("schemas/scenario.schema.json").read_text())


@dataclass
class OCPBlock:
    phi_kind: str
    phi_vector: list
    omega_normals: list
    omega_offsets: list
    epsilon: float
    delta0: float
    nu0: int
    reference_intervals: int = 640


@dataclass
class Scenario:
    name: str
    n: int
    m: int
    T: float
    nu: int
    x0: list
    builtin: str | None = None
    u_knots: list | None = None
    b_knots: list | None = None
    ocp: OCPBlock | None = None
    seeds: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def mesh(self, nu=None):
        return Mesh.uniform(self.T, self.nu if nu is None else nu)

    def path(self, mesh=None, normalized=False):
        """Control path on ``mesh`` (defaults to the scenario mesh)."""
        mesh = self.mesh() if mesh is None else mesh
        if self.builtin == "example21":
            return example21_path(mesh, normalized=normalized)
        base = ControlPath(self.mesh(), np.array(self.u_knots, dtype=float), np.array(self.b_knots, dtype=float))
        path = base if mesh.same_as(base.mesh) else base.resample(mesh)
        if normalized:
            U = path.u_knots / np.linalg.norm(path.u_knots, axis=2, keepdims=True)
            path = ControlPath(path.mesh, U, path.b_knots, normalized_delta=0.0)
        return path

    def reference_states(self, mesh, path):
        """Reference trajectory: exact for the builtin, fine catching-up run otherwise."""
        if self.builtin == "example21":
            return np.array([analytic_oracle(self.x0, t) for t in mesh.nodes])
        from .sweep import catching_up
        return np.array(catching_up(path, self.x0, mesh).states)

    def to_ocp(self):
        if self.ocp is None:
            raise ScenarioError("scenario has no OCP block")
        o = self.ocp
        mesh = Mesh.uniform(self.T, o.reference_intervals)
        path = self.path(mesh, normalized=True)
        ref = Reference(path, self.reference_states(mesh, path))
        return SweepOCP(TerminalCost(o.phi_kind, np.array(o.phi_vector, dtype=float)),
                        Polyhedron(o.omega_normals, o.omega_offsets), ref,
                        float(o.epsilon), float(o.delta0), int(o.nu0))

    def to_dict(self):
        d = {"name": self.name, "n": self.n, "m": self.m,
             "mesh": {"T": self.T, "nu": self.nu}, "x0": list(self.x0)}
        if self.builtin is not None:
            d["controls"] = {"builtin": self.builtin}
        else:
            d["controls"] = {"u_knots": self.u_knots, "b_knots": self.b_knots}
        if self.ocp is not None:
            o = self.ocp
            d["ocp"] = {"phi": {"kind": o.phi_kind, "vector": list(o.phi_vector)},
                        "omega": {"normals": o.omega_normals, "offsets": o.omega_offsets},
                        "epsilon": o.epsilon, "delta0": o.delta0, "nu0": o.nu0,
                        "reference_intervals": o.reference_intervals}
        if self.seeds:
            d["seeds"] = dict(self.seeds)
        if self.tolerances:
            d["tolerances"] = dict(self.tolerances)
        return d


def scenario_from_dict(d):
    try:
        jsonschema.validate(d, _schema())
    except jsonschema.ValidationError as err:
        raise ScenarioError(f"invalid scenario: {err.message}") from None
    ctrl = d["controls"]
    builtin = ctrl.get("builtin")
    if builtin is not None and builtin not in BUILTINS:
        raise ScenarioError(f"unknown builtin {builtin!r}")
    n, m = int(d["n"]), int(d["m"])
    nu = int(d["mesh"]["nu"])
    if builtin == "example21":
        if (n, m) != (2, 2) or float(d["mesh"]["T"]) != 1.0:
            raise ScenarioError("example21 has n = m = 2 and T = 1")
    else:
        U = np.asarray(ctrl["u_knots"], dtype=float)
        B = np.asarray(ctrl["b_knots"], dtype=float)
        if U.shape != (nu + 1, m, n) or B.shape != (nu + 1, m):
            raise ScenarioError("knot arrays do not match (nu + 1, m, n) / (nu + 1, m)")
    if len(d["x0"]) != n:
        raise ScenarioError("x0 has the wrong length")
    ocp = None
    if "ocp" in d:
        o = d["ocp"]
        ocp = OCPBlock(o["phi"]["kind"], o["phi"]["vector"], o["omega"]["normals"], o["omega"]["offsets"],
                       o["epsilon"], o["delta0"], o["nu0"], o.get("reference_intervals", 640))
    return Scenario(d["name"], n, m, float(d["mesh"]["T"]), nu, list(d["x0"]), builtin,
                    ctrl.get("u_knots"), ctrl.get("b_knots"), ocp, dict(d.get("seeds", {})),
                    dict(d.get("tolerances", {})))


def load_scenario(path):
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def example21_scenario(x0=(2.0, 0.5), nu=1000, with_ocp=False):
    d = {"name": "example21", "n": 2, "m": 2, "mesh": {"T": 1.0, "nu": nu},
         "controls": {"builtin": "example21"}, "x0": list(x0)}
    if with_ocp:
        d["ocp"] = {"phi": {"kind": "quadratic", "vector": [1.0, 1.0]},
                    "omega": {"normals": [[1, 0], [-1, 0], [0, 1], [0, -1]], "offsets": [1.5, -0.5, 1.5, -0.5]},
                    "epsilon": 2.0, "delta0": 0.1, "nu0": 10, "reference_intervals": 640}
    return scenario_from_dict(d)


def steering_ocp():
    """Steering problem: rotating-halfspace geometry, start (2, 0.5), target (1, 1)."""
    return example21_scenario(with_ocp=True).to_ocp()
