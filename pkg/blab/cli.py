"""
Blab CLI - Command line interface
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from rich.console import Console
from rich.markup import escape

from . import __version__
from .admissibility import (
    QProfile,
    SetConstraint,
    divergence_check,
    fmo_estimate,
    membership_ae,
)
from .compactness import DirichletProblem, FamilySampler, PlaneProblem, run_experiment
from .config import Settings, load_settings
from .dirichlet import solve_dirichlet
from .errors import BlabError, PreconditionError, VerdictError
from .fieldio import read_boundary_csv, read_field, read_real_field, write_field
from .fields import DilatationField, GridSpec
from .log import configure_logging
from .reports import read_json, render, table, write_csv, write_json
from .solver import SolverConfig, solve_principal

logger = logging.getLogger(__name__)

SETTING_FLAGS = ("N", "L", "tol", "max_iterations", "pad_factor", "seed", "jobs", "out_dir", "log_level")


def parse_complex(text: str) -> complex:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RE,IM, got {text!r}") from None
    if len(parts) == 1:
        return complex(parts[0], 0.0)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected RE,IM, got {text!r}")
    return complex(parts[0], parts[1])


def parse_floats(text: str) -> List[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _global_flags() -> argparse.ArgumentParser:
    # defaults are suppressed so the flags work before or after the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--N", type=int, help="Grid resolution for synthesized grids")
    common.add_argument("--L", type=float, help="Grid half width for synthesized grids")
    common.add_argument("--tol", type=float, help="Neumann iteration tolerance")
    common.add_argument("--max-iterations", dest="max_iterations", type=int, help="Neumann iteration cap")
    common.add_argument("--pad-factor", dest="pad_factor", type=int, help="FFT zero-padding factor")
    common.add_argument("--seed", type=int, help="Family sampler seed")
    common.add_argument("--jobs", type=int, help="Worker processes for sequences")
    common.add_argument("--out-dir", dest="out_dir", help="Directory for relative output prefixes")
    common.add_argument("--config", type=Path, help="Settings file (default ~/.blab/config.json)")
    common.add_argument("--strict", action="store_true", help="Exit with code 4 when a verdict fails")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="blab",
        description="Beltrami equation lab: principal solutions, Dirichlet problems, compactness experiments",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"blab {__version__}")
    subparsers = parser.add_subparsers(dest="command")

    solve = subparsers.add_parser("solve", parents=[common], help="Principal solution for a dilatation file")
    solve.add_argument("--mu", type=Path, required=True, help="CFLD-1 dilatation")
    solve.add_argument("--out", required=True, help="Output prefix")

    dirichlet = subparsers.add_parser("dirichlet", parents=[common], help="Dirichlet problem in the unit disk")
    dirichlet.add_argument("--mu", type=Path, required=True, help="CFLD-1 dilatation on a grid covering the disk")
    dirichlet.add_argument("--phi", type=Path, required=True, help="Boundary CSV with header theta,phi")
    dirichlet.add_argument("--z0", type=parse_complex, default=0j, help="Normalization point RE,IM")
    dirichlet.add_argument("--out", required=True, help="Output prefix")

    check = subparsers.add_parser("check", parents=[common], help="Admissibility checks")
    checks = check.add_subparsers(dest="check")
    fmo = checks.add_parser("fmo", parents=[common], help="Finite mean oscillation estimate")
    fmo.add_argument("--Q", type=Path, required=True, help="CFLD-1 Q profile")
    fmo.add_argument("--z0", type=parse_complex, required=True)
    fmo.add_argument("--eps", type=parse_floats, help="Decreasing radius schedule")
    fmo.add_argument("--out", help="Output prefix for JSON and CSV")
    divergence = checks.add_parser("divergence", parents=[common], help="Divergence of the dt/(t q) integral")
    divergence.add_argument("--Q", type=Path, required=True, help="CFLD-1 Q profile")
    divergence.add_argument("--z0", type=parse_complex, required=True)
    divergence.add_argument("--delta0", type=float, required=True)
    divergence.add_argument("--t-min", dest="t_min", type=float, required=True)
    divergence.add_argument("--out", help="Output prefix for JSON and CSV")
    membership = checks.add_parser("membership", parents=[common], help="mu in M(z) almost everywhere")
    membership.add_argument("--mu", type=Path, required=True)
    membership.add_argument("--constraint", type=Path, nargs=2, required=True, metavar=("CENTER", "RADIUS"))
    membership.add_argument("--out", help="Output prefix for JSON")

    compactness = subparsers.add_parser("compactness", parents=[common], help="Compactness experiments")
    experiments = compactness.add_subparsers(dest="action")
    run = experiments.add_parser("run", parents=[common], help="Sample a family and run the diagnostics")
    run.add_argument("--center", type=parse_complex, default=0j, help="Constraint center c (constant)")
    run.add_argument("--rho", type=float, required=True, help="Constraint radius (constant)")
    run.add_argument("--support-radius", dest="support_radius", type=float, required=True)
    run.add_argument(
        "--mode", choices=["boundary-extremal", "uniform-in-disk", "oscillating-phase"], default="boundary-extremal"
    )
    run.add_argument("--count", type=int, default=6)
    run.add_argument("--compact", type=float, default=1.0, help="Radius of the compact disk about 0")
    run.add_argument("--deltas", type=parse_floats, help="Scales for the equicontinuity modulus")
    run.add_argument("--problem", choices=["plane", "dirichlet"], default="plane")
    run.add_argument("--phi", type=Path, help="Boundary CSV for --problem dirichlet")
    run.add_argument("--z0", type=parse_complex, default=0j)
    run.add_argument("--out", required=True, help="Output prefix")
    report = experiments.add_parser("report", parents=[common], help="Render a saved report")
    report.add_argument("file", type=Path)
    return parser


def resolve_settings(args: argparse.Namespace) -> Settings:
    base = load_settings(getattr(args, "config", None))
    return base.merged(**{name: getattr(args, name, None) for name in SETTING_FLAGS})


def _strict(args, verdict: bool, what: str) -> None:
    if getattr(args, "strict", False) and not verdict:
        raise VerdictError(f"{what} failed")


def cmd_solve(args, settings: Settings, console: Console) -> int:
    field = read_field(args.mu)
    mu = DilatationField.from_values(field.spec, field.values)
    config = SolverConfig.for_grid(
        mu.spec, settings.pad_factor, max_iterations=settings.max_iterations, residual_tol=settings.tol
    )
    f, report = solve_principal(mu, config)
    write_field(settings.output_path(f"{args.out}.cfld"), f)
    record = report.to_dict()
    write_json(settings.output_path(f"{args.out}.json"), "solve", record)
    render(console, {"kind": "solve", **{k: v for k, v in record.items() if k != "increments"}})
    _strict(args, report.koebe.verdict and report.homeomorphic_proxy and report.hydrodynamic, "Solution checks")
    return 0


def cmd_dirichlet(args, settings: Settings, console: Console) -> int:
    field = read_field(args.mu)
    mu = DilatationField.from_values(field.spec, field.values)
    phi = read_boundary_csv(args.phi)
    config = SolverConfig.for_grid(
        mu.spec, settings.pad_factor, max_iterations=settings.max_iterations, residual_tol=settings.tol
    )
    solution = solve_dirichlet(mu, phi, args.z0, config)
    write_field(settings.output_path(f"{args.out}_f.cfld"), solution.f)
    if solution.G is not None:
        write_field(settings.output_path(f"{args.out}_G.cfld"), solution.G)
    record = solution.to_dict()
    write_json(
        settings.output_path(f"{args.out}.json"),
        "dirichlet",
        {**record, "F_coefficients": list(solution.F.coefficients)},
    )
    render(console, {"kind": "dirichlet", **{k: v for k, v in record.items() if k != "solver"}})
    _strict(args, abs(solution.im_f_z0) <= 1e-8 and solution.max_interior_modulus < 1.0, "Dirichlet checks")
    return 0


def _emit(args, settings: Settings, console: Console, kind: str, record: dict, tables: dict) -> None:
    record = {**record, "tables": {name: table(cols, rows) for name, (cols, rows) in tables.items()}}
    if getattr(args, "out", None):
        write_json(settings.output_path(f"{args.out}.json"), kind, record)
        for name, (cols, rows) in tables.items():
            write_csv(settings.output_path(f"{args.out}_{name}.csv"), cols, rows)
    render(console, {"kind": kind, **record})


def cmd_check(args, settings: Settings, console: Console) -> int:
    if args.check == "fmo":
        Q = QProfile(read_real_field(args.Q))
        result = fmo_estimate(Q, args.z0, args.eps)
        record = {"z0": args.z0, "limsup": result.limsup, "slope": result.slope, "verdict": result.verdict}
        _emit(args, settings, console, "fmo", record, {"deviation": (("eps", "mean", "deviation"), result.rows())})
        _strict(args, result.verdict.name == "CONSISTENT", "FMO check")
    elif args.check == "divergence":
        Q = QProfile(read_real_field(args.Q))
        result = divergence_check(Q, args.z0, args.delta0, args.t_min)
        record = {"z0": args.z0, "delta0": args.delta0, "t_min": args.t_min, "verdict": result.verdict.label}
        _emit(args, settings, console, "divergence", record, {"integral": (("tau", "I"), result.rows())})
        _strict(args, result.verdict.name == "DIVERGES", "Divergence check")
    elif args.check == "membership":
        field = read_field(args.mu)
        mu = DilatationField.from_values(field.spec, field.values)
        center = read_field(args.constraint[0])
        constraint = SetConstraint(center, read_real_field(args.constraint[1]))
        result = membership_ae(mu, constraint)
        record = {
            "violating_fraction": result.violating_fraction,
            "max_excess": result.max_excess,
            "verdict": result.verdict,
        }
        _emit(args, settings, console, "membership", record, {})
        _strict(args, result.verdict, "Membership check")
    else:
        console.print("Choose one of: fmo, divergence, membership")
        return 2
    return 0


def cmd_compactness(args, settings: Settings, console: Console) -> int:
    if args.action == "report":
        render(console, read_json(args.file))
        return 0
    if args.action != "run":
        console.print("Choose one of: run, report")
        return 2

    spec = GridSpec(0j, settings.L, settings.N)
    constraint = SetConstraint.disks(spec, args.center, args.rho, support_radius=args.support_radius)
    sampler = FamilySampler(constraint, args.mode, settings.seed, args.count)
    config = SolverConfig.for_grid(
        spec, settings.pad_factor, max_iterations=settings.max_iterations, residual_tol=settings.tol
    )
    if args.problem == "dirichlet":
        if args.phi is None:
            raise PreconditionError("--phi is required for --problem dirichlet")
        problem = DirichletProblem(read_boundary_csv(args.phi), args.z0)
    else:
        problem = PlaneProblem()
    deltas = args.deltas or list(spec.spacing * np.array([1.0, 2.0, 4.0, 8.0]))
    result = run_experiment(sampler, config, (0j, args.compact), deltas, problem, settings.jobs)

    members = [
        (m.index, "ok" if m.ok else m.error, m.report.iterations_used if m.report else "")
        for m in result.sequence.members
    ]
    record = {
        "settings": {**result.settings, "N": settings.N, "L": settings.L, "tol": settings.tol, "problem": args.problem},
        "failures": result.sequence.failures,
        "omega_at_zero": result.equicontinuity.omega_at_zero,
        "chain": list(result.convergence.chain),
        "chain_gaps": list(result.convergence.gaps),
        "converged": result.convergence.converged,
        "limit_membership": result.membership.verdict,
        "verdict": result.verdict,
    }
    if result.tail is not None:
        record["hydrodynamic_limit"] = result.tail.verdict
    if result.boundary is not None:
        record["boundary_limit"] = result.boundary.verdict
    tables = {
        "omega": (("delta", "omega"), result.equicontinuity.rows()),
        "members": (("index", "status", "iterations"), members),
    }
    write_json(
        settings.output_path(f"{args.out}.json"),
        "compactness",
        {**record, "tables": {name: table(cols, rows) for name, (cols, rows) in tables.items()}},
    )
    write_csv(settings.output_path(f"{args.out}_omega.csv"), *tables["omega"])
    render(console, {"kind": "compactness", **record})
    _strict(args, result.verdict, "Compactness checks")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "dirichlet": cmd_dirichlet,
    "check": cmd_check,
    "compactness": cmd_compactness,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    err = Console(stderr=True)

    if not args.command:
        parser.print_help()
        return 0

    try:
        settings = resolve_settings(args)
        configure_logging(settings.log_level)
        Path(settings.out_dir).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, settings, Console())
    except BlabError as e:
        err.print(f"[bold red]Error:[/bold red] {escape(str(e))}", highlight=False, soft_wrap=True)
        return e.exit_code
    except OSError as e:
        err.print(f"[bold red]Error:[/bold red] {escape(str(e))}", highlight=False, soft_wrap=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
