"""Command-line front end.

Exit codes: 0 ok, 1 bad input, 2 simulation infeasibility, 3 property
violation, 4 multiplier recovery infeasible, 5 evaluation budget exhausted.
The output directory and thread count may also be set through
``POLYSWEEP_OUTPUT_DIR`` and ``POLYSWEEP_THREADS``.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import reports
from .bounds import verify_bounds
from .control import check_uniform_slater
from .discopt import SolveOptions, build_problem, solve
from .errors import (
    BudgetExhausted,
    EmptyPolyhedron,
    EmptyPolyhedronAtNode,
    ExplicitStepInfeasible,
    Infeasible,
    InfeasibleStart,
    NoFeasibleStart,
    PLICQViolation,
    PolysweepError,
    ReferenceMissing,
    ScenarioError,
)
from .optimality import recover_multipliers
from .scenario import BUILTINS, example21_scenario, load_scenario
from .sweep import analytic_oracle, catching_up, sup_error, write_trajectory_csv

EXIT_OK, EXIT_INPUT, EXIT_SIM, EXIT_PROPERTY, EXIT_KKT, EXIT_BUDGET = 0, 1, 2, 3, 4, 5


def _scenario(arg):
    """A scenario file, or the name of a builtin when no such file exists."""
    if arg in BUILTINS and not Path(arg).exists():
        return example21_scenario(with_ocp=True)
    return load_scenario(arg)


def _outdir(args):
    out = Path(args.out or os.environ.get("POLYSWEEP_OUTPUT_DIR") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("POLYSWEEP_THREADS", "1")))


def _fail(code, doc):
    sys.stderr.write(reports.dumps(doc))
    return code


def _oracle_for(sc):
    if sc.builtin == "example21":
        return lambda t: analytic_oracle(sc.x0, t)
    return None


def cmd_simulate(args):
    sc = _scenario(args.scenario)
    out = _outdir(args)
    levels = max(1, args.mesh_levels)
    meshes = [sc.mesh(sc.nu * 2 ** k) for k in range(levels)]

    def run(mesh):
        return catching_up(sc.path(mesh), sc.x0, mesh, explicit=args.explicit)

    try:
        with ThreadPoolExecutor(_threads(args)) as pool:
            trajs = list(pool.map(run, meshes))
    except (InfeasibleStart, EmptyPolyhedronAtNode, ExplicitStepInfeasible, EmptyPolyhedron) as err:
        return _fail(EXIT_SIM, {"status": "infeasible", "error": type(err).__name__, "message": str(err),
                                "node": getattr(err, "node", None), "t": getattr(err, "t", None)})
    names = ["trajectory.csv"] if levels == 1 else [f"trajectory_level{k}.csv" for k in range(levels)]
    runs = []
    for name, mesh, tr in zip(names, meshes, trajs):
        with open(out / name, "w") as fh:
            write_trajectory_csv(tr, fh)
        runs.append({"csv": name, "nu": mesh.nu, "h": float(np.max(mesh.steps)),
                     **reports.trajectory_report(tr, sc.path(mesh))})
    doc = {"scenario": sc.name, "scheme": "explicit" if args.explicit else "implicit", "runs": runs}
    if levels > 1:
        oracle = _oracle_for(sc)
        if oracle is None:
            fine_mesh = sc.mesh(sc.nu * 2 ** (levels + 1))
            oracle = run(fine_mesh).at
            doc["reference"] = f"catching-up run with nu = {fine_mesh.nu}"
        else:
            doc["reference"] = "closed-form trajectory"
        errs = [sup_error(tr, oracle) for tr in trajs]
        doc["convergence"] = [{"h": r["h"], "sup_error": e, "ratio": None if k == 0 else errs[k - 1] / e if e > 0 else None}
                              for k, (r, e) in enumerate(zip(runs, errs))]
    reports.write_json(doc, out / "run.json")
    return EXIT_OK


def cmd_verify_bounds(args):
    if args.scenario is not None:
        _scenario(args.scenario)
    out = _outdir(args)
    doc = verify_bounds(args.samples, args.seed)
    reports.write_json(doc, out / "bounds.json")
    return EXIT_OK if doc["passed"] else EXIT_PROPERTY


def cmd_slater(args):
    sc = _scenario(args.scenario)
    out = _outdir(args)
    rep = check_uniform_slater(sc.path(), args.radius, args.refine)
    doc = {"scenario": sc.name, "radius": rep.radius, "refine": args.refine, "epsilon": rep.epsilon,
           "witness_times": rep.witness_times, "inter_node_bound": rep.inter_node_bound,
           "status": "uniform_slater" if rep.inter_node_bound > 0 else "not_certified"}
    reports.write_json(doc, out / "slater.json")
    return EXIT_OK


def cmd_optimize(args):
    sc = _scenario(args.scenario)
    out = _outdir(args)
    try:
        inst = build_problem(sc.to_ocp(), args.level)
    except ReferenceMissing as err:
        return _fail(EXIT_INPUT, {"status": "error", "error": "ReferenceMissing", "message": str(err)})
    opts = SolveOptions(seed=args.seed, budget=args.budget)
    code = EXIT_OK
    try:
        res = solve(inst, opts)
    except NoFeasibleStart as err:
        return _fail(EXIT_SIM, {"status": "infeasible", "error": "NoFeasibleStart", "message": str(err)})
    except BudgetExhausted as err:
        res, code = err.result, EXIT_BUDGET
    doc = reports.solution_to_dict(sc, args.level, opts, res)
    reports.write_json(doc, out / "solution.json")
    return code


def cmd_check_kkt(args):
    out = _outdir(args)
    sc, k, triple = reports.solution_from_dict(reports.read_json(args.solution))
    inst = build_problem(sc.to_ocp(), k)
    try:
        kkt = recover_multipliers(inst, triple)
    except PLICQViolation as err:
        reports.write_json(reports.certificate_to_dict(error=str(err), plicq=False), out / "certificate.json")
        return EXIT_KKT
    except Infeasible as err:
        reports.write_json(reports.certificate_to_dict(error=str(err), plicq=True), out / "certificate.json")
        return EXIT_KKT
    reports.write_json(reports.certificate_to_dict(kkt), out / "certificate.json")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: $POLYSWEEP_OUTPUT_DIR or .)")
    common.add_argument("--threads", type=int, help="worker threads (default: $POLYSWEEP_THREADS or 1)")
    p = argparse.ArgumentParser(prog="polysweep", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="catching-up simulation")
    s.add_argument("scenario")
    s.add_argument("--mesh-levels", type=int, default=1, help="number of dyadic mesh levels")
    s.add_argument("--explicit", action="store_true", help="take normals at the left node")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify-bounds", parents=[common], help="randomized estimate checks")
    s.add_argument("scenario", nargs="?")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify_bounds)

    s = sub.add_parser("slater", parents=[common], help="uniform Slater certificate")
    s.add_argument("scenario")
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--refine", type=int, default=1)
    s.set_defaults(func=cmd_slater)

    s = sub.add_parser("optimize", parents=[common], help="solve the discrete control problem")
    s.add_argument("scenario")
    s.add_argument("--level", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=int, default=None, help="maximum objective evaluations")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("check-kkt", parents=[common], help="recover multipliers for a solution")
    s.add_argument("solution")
    s.set_defaults(func=cmd_check_kkt)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError) as err:
        return _fail(EXIT_INPUT, {"status": "error", "error": type(err).__name__, "message": str(err)})
    except PolysweepError as err:
        return _fail(EXIT_INPUT, {"status": "error", "error": type(err).__name__, "message": str(err)})


if __name__ == "__main__":
    sys.exit(main())
