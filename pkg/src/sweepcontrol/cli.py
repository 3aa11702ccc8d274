"""
Command-line front end.

Every subcommand writes its artifacts plus a ``manifest.json`` into the
output directory.  Exit status is 0 on success, 2 when a check fails and
1 on any error.  Verbosity comes from the SWEEP_LOG environment variable
(DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .discretization import Mesh, approximate_feasible, check_discrete_constraints, mu_constants
from .dynamics import catching_up_integrate
from .io import (bundled_problem_path, load_certificate, load_problem, load_triple, save_certificate,
                 write_convergence_csv, write_json, write_trajectory_csv)
from .optimality import (recover_multipliers, residual_el, residual_explicit,
                         scalar_example_solve)
from .optimizer import OptimizerConfig, SolveError, convergence_study, solve_discrete_problem

log = logging.getLogger("sweepcontrol")

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2


class CheckFailed(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _parse_ks(text: str) -> List[int]:
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("step counts must be positive")
    return ks


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sweepcontrol",
                                     description="Discrete approximation of controlled sweeping processes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tau", type=float, default=None, help="override the band margin")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument("problem", nargs="?", type=Path, default=None,
                         help="problem JSON (defaults to the bundled scalar example)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, problem], help="integrate the dynamics for the reference controls")
    p.add_argument("--k", type=_positive_int, default=100)

    p = sub.add_parser("approximate", parents=[common, problem], help="build a feasible discrete triple near the reference")
    p.add_argument("--k", type=_positive_int, default=10)

    p = sub.add_parser("solve", parents=[common, problem], help="solve the discrete problem")
    p.add_argument("--k", type=_positive_int, default=10)

    p = sub.add_parser("check", parents=[common, problem], help="evaluate optimality residuals")
    p.add_argument("--triple", type=Path, required=True, help="triple JSON (or a solve result)")
    p.add_argument("--certificate", type=Path, default=None,
                   help="certificate JSON; multipliers are recovered when absent")
    p.add_argument("--form", choices=("explicit", "coderivative"), default="explicit")
    p.add_argument("--free-initial", action="store_true", help="treat a_0 as free")

    p = sub.add_parser("study", parents=[common, problem], help="convergence study over a ladder of k")
    p.add_argument("--ks", type=_parse_ks, default=[10, 20, 40, 80])

    p = sub.add_parser("scalar-example", parents=[common], help="closed-form solve of the scalar benchmark")
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--mode", choices=("fixed_point", "reference"), default="fixed_point")
    return parser


def _load(args):
    path = args.problem or bundled_problem_path()
    spec = load_problem(path)
    if args.tau is not None:
        spec = spec.with_tau(args.tau)
    return spec, Path(path)


def _need_reference(spec):
    if spec.reference is None:
        raise ValueError("the problem file has no reference path")
    return spec.reference


def _figure(args, func, *a, **kw):
    if args.no_plots:
        return None
    return func(*a, **kw).name


def _cmd_simulate(args, out: Path) -> dict:
    from .plotting import plot_trajectory
    spec, _ = _load(args)
    path = catching_up_integrate(spec, _need_reference(spec), args.k)
    write_trajectory_csv(path, out / "trajectory.csv")
    fig = _figure(args, plot_trajectory, path, out / "trajectory.png", spec.reference)
    return {"artifacts": ["trajectory.csv"] + ([fig] if fig else [])}


def _cmd_approximate(args, out: Path) -> dict:
    from .plotting import plot_trajectory
    spec, _ = _load(args)
    ref = _need_reference(spec)
    z, report = approximate_feasible(ref, spec, Mesh.for_problem(spec, args.k),
                                     tol=args.tol if args.tol is not None else 1e-6)
    write_json(z.to_dict(), out / "triple.json")
    write_json(report.to_dict(), out / "feasibility.json")
    write_trajectory_csv(z, out / "trajectory.csv")
    fig = _figure(args, plot_trajectory, z, out / "trajectory.png", ref)
    print(f"max state gap {report.max_state_gap:.3e} <= bound {report.gap_bound:.3e}")
    return {"artifacts": ["triple.json", "feasibility.json", "trajectory.csv"] + ([fig] if fig else [])}


def _cmd_solve(args, out: Path) -> dict:
    from .plotting import plot_trajectory
    spec, _ = _load(args)
    ref = _need_reference(spec)
    config = OptimizerConfig(seed=args.seed)
    if args.tol is not None:
        config = OptimizerConfig(seed=args.seed, stationarity_tol=args.tol, constraint_tol=args.tol)
    try:
        res = solve_discrete_problem(spec, ref, Mesh.for_problem(spec, args.k), config)
    except SolveError as exc:
        if exc.best is not None:
            write_json(exc.best.to_dict(), out / "solve_result.json")
        raise
    write_json(res.to_dict(), out / "solve_result.json")
    write_trajectory_csv(res.z_opt, out / "trajectory.csv")
    fig = _figure(args, plot_trajectory, res.z_opt, out / "trajectory.png", ref)
    print(f"J = {res.J_value:.17g} after {res.iterations} outer iterations")
    return {"artifacts": ["solve_result.json", "trajectory.csv"] + ([fig] if fig else []),
            "J_value": res.J_value}


def _cmd_check(args, out: Path) -> dict:
    from .plotting import plot_residuals
    spec, _ = _load(args)
    ref = _need_reference(spec)
    z = load_triple(args.triple)
    tol = args.tol if args.tol is not None else 1e-6
    if args.certificate is not None:
        cert = load_certificate(args.certificate)
    else:
        cert, _ = recover_multipliers(z, ref, spec, free_initial_control=args.free_initial, tol=tol)
        save_certificate(cert, out / "certificate.json")
    checker = residual_explicit if args.form == "explicit" else residual_el
    report = checker(z, cert, ref, spec, tol=tol, free_initial_control=args.free_initial)
    write_json(report.to_dict(), out / "residual_report.json")
    fig = _figure(args, plot_residuals, report, out / "residuals.png")
    summary = {"artifacts": ["residual_report.json"] + ([fig] if fig else []), "passed": report.passed}
    if not report.passed:
        for name in report.failing:
            print(f"FAILED {name}: {report.residuals.get(name, float('nan')):.3e}")
        raise CheckFailed(", ".join(report.failing))
    print(f"all conditions hold, max residual {report.max_residual:.3e}")
    return summary


def _cmd_study(args, out: Path) -> dict:
    from .plotting import plot_convergence
    spec, _ = _load(args)
    ref = _need_reference(spec)
    study = convergence_study(spec, ref, args.ks, OptimizerConfig(seed=args.seed))
    write_convergence_csv(study, out / "convergence.csv")
    write_json({"nonincreasing": study.nonincreasing, "halved": study.halved, "noise": study.noise,
                "floor": study.floor, "rows": [vars(r) for r in study.rows]}, out / "study.json")
    fig = _figure(args, plot_convergence, study, out / "convergence.png")
    for row in study.rows:
        print(f"k={row.k:4d}  J={row.J_k:.10g}  gap_sum={row.w12_gap_sum:.3e}")
    return {"artifacts": ["convergence.csv", "study.json"] + ([fig] if fig else []),
            "nonincreasing": study.nonincreasing, "halved": study.halved}


def _cmd_scalar_example(args, out: Path) -> dict:
    from .plotting import plot_trajectory
    tau = 0.1 if args.tau is None else args.tau
    k = args.k
    if args.mode == "fixed_point":
        sol = scalar_example_solve(k, "fixed_point", tau=tau)
    else:
        ref = load_problem(bundled_problem_path()).reference
        times = np.linspace(0.0, 1.0, k + 1)
        xr, _, ar = ref.sample(times)
        sol = scalar_example_solve(k, "given_reference", alpha=np.diff(xr[:, 0]), beta=np.diff(ar[:, 0]),
                                   a0=float(ar[0, 0]), tau=tau)
    tol = args.tol if args.tol is not None else 1e-6
    report = residual_explicit(sol.z, sol.certificate, sol.reference, sol.spec, tol=tol)
    write_json({"J_value": sol.cost, "z": sol.z.to_dict(), "certificate": sol.certificate.to_dict(),
                "residual_report": report.to_dict(), "mode": args.mode}, out / "scalar_example.json")
    write_trajectory_csv(sol.z, out / "trajectory.csv")
    fig = _figure(args, plot_trajectory, sol.z, out / "trajectory.png", sol.reference)
    print(f"a_0 = {sol.z.a[0, 0]:.17g}  x_1 = {sol.z.x[1, 0]:.17g}  J = {sol.cost:.17g}")
    return {"artifacts": ["scalar_example.json", "trajectory.csv"] + ([fig] if fig else []),
            "J_value": sol.cost}


COMMANDS = {
    "simulate": _cmd_simulate,
    "approximate": _cmd_approximate,
    "solve": _cmd_solve,
    "check": _cmd_check,
    "study": _cmd_study,
    "scalar-example": _cmd_scalar_example,
}


def _manifest(args, argv, status: int, wall: float, extra: dict) -> dict:
    inputs = {}
    for name in ("problem", "triple", "certificate"):
        val = getattr(args, name, None)
        if name == "problem" and val is None and args.command != "scalar-example":
            val = bundled_problem_path()
        if val is not None and Path(val).exists():
            inputs[name] = {"path": str(val), "sha256": _sha256(Path(val))}
    overrides = {key: getattr(args, key) for key in ("k", "ks", "tau", "tol", "mode", "form")
                 if getattr(args, key, None) is not None}
    return {"command": args.command, "argv": list(argv), "inputs": inputs, "overrides": overrides,
            "out": str(args.out), "seed": args.seed, "version": __version__, "wall_time_s": wall,
            "exit_status": status, "result": extra}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    level = os.environ.get("SWEEP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.random.seed(args.seed)
    start = time.perf_counter()
    extra: dict = {}
    try:
        extra = COMMANDS[args.command](args, out) or {}
        status = EXIT_OK
    except CheckFailed as exc:
        status = EXIT_CHECK_FAILED
        extra = {"failing": str(exc)}
    except Exception as exc:  # reported, not re-raised: the exit code carries it
        log.debug("command failed", exc_info=True)
        message = f"{type(exc).__name__}: {exc}"
        print(f"error: {message}", file=sys.stderr)
        status = EXIT_ERROR
        extra = {"error": message}
    write_json(_manifest(args, argv, status, time.perf_counter() - start, extra), out / "manifest.json")
    return status


if __name__ == "__main__":
    sys.exit(main())
