"""Controlled sweeping processes over moving polyhedra."""

from .control import (
    ControlPath,
    Mesh,
    check_uniform_slater,
    evaluate,
    example21_path,
    reparameterize,
    sup_norm,
    sup_norm_diff,
    w11_norm,
)
from .discopt import (
    DiscreteTriple,
    SolveOptions,
    SweepOCP,
    TerminalCost,
    build_problem,
    evaluate_cost,
    feasibility_report,
    solve,
)
from .geometry import (
    Polyhedron,
    active_indices,
    contains,
    distance,
    distance_upper_bound,
    hoffman_ratio,
    plicq_check,
    project,
    slater_margin,
    truncated_distance,
)
from .optimality import coderivative_member, p_set_element, q_pattern, recover_multipliers
from .scenario import example21_scenario, load_scenario, steering_ocp
from .sweep import analytic_oracle, catching_up, convergence_study, stability_experiment

__all__ = [
    "ControlPath", "Mesh", "check_uniform_slater", "evaluate", "example21_path", "reparameterize",
    "sup_norm", "sup_norm_diff", "w11_norm",
    "DiscreteTriple", "SolveOptions", "SweepOCP", "TerminalCost", "build_problem", "evaluate_cost",
    "feasibility_report", "solve",
    "Polyhedron", "active_indices", "contains", "distance", "distance_upper_bound", "hoffman_ratio",
    "plicq_check", "project", "slater_margin", "truncated_distance",
    "coderivative_member", "p_set_element", "q_pattern", "recover_multipliers",
    "example21_scenario", "load_scenario", "steering_ocp",
    "analytic_oracle", "catching_up", "convergence_study", "stability_experiment",
]
