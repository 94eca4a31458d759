"""`herglotz` command line: derive | solve | verify | demo.

Exit codes: 0 success, 1 other failure, 2 parse error, 3 action dependence not closed where the
higher-order equations are required, 4 stability or non-finite state.
"""
import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from herglotz import __version__
from herglotz.calculus import EquationSet, derive_equations
from herglotz.config import get_settings
from herglotz.errors import (
    DomainError,
    HerglotzError,
    NonFiniteStateError,
    NotClosedError,
    ParseError,
    StabilityError,
)
from herglotz.expr import Expr, eval_numeric
from herglotz.fields import (
    Section,
    analytic_section,
    constant_bindings,
    kdv_coefficients,
    kdv_mass,
    kdv_wave,
    solve_damped_kdv,
    solve_damped_string,
    string_energy,
    wave_coefficients,
)
from herglotz.grid import FieldSolution, Grid2D
from herglotz.io import (
    RunManifest,
    read_field,
    sha256_of,
    write_field_bin,
    write_field_csv,
    write_json,
    write_report_csv,
    write_table,
)
from herglotz.jet import LagrangianSpec
from herglotz.mechanics import (
    Trajectory,
    action_gradient_check,
    integrate,
    multiplier_profile,
    multiplier_residual,
)
from herglotz.parser import ProblemFile, Scheme, SolverBlock, parse_problem
from herglotz.printer import print_equation, print_expression
from herglotz.residuals import (
    FAIL,
    PASS,
    ResidualReport,
    discrete_action_gradient_check,
    evaluate_residuals,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_NOT_CLOSED = 3
EXIT_UNSTABLE = 4

DERIVE_DESCRIPTION = """Print the field equations.
Closedness entries are C_mn = D_n theta_m - D_m theta_n, so C_tx = D_x theta_t - D_t theta_x.
"""

# quantity, value, bound, verdict
ReportRow = Tuple[str, float, Optional[float], str]

DEMOS = {
    "damped_string": ("derive", "solve"),
    "counterexample": ("derive", "verify"),
    "damped_kdv": ("derive", "solve"),
    "oscillator": ("derive", "solve", "verify"),
}


def _assignment(text: str) -> Tuple[str, float]:
    name, separator, value = text.partition("=")
    try:
        if not separator:
            raise ValueError(text)
        return name.strip(), float(value)
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"Expected name=value, got `{text}`") from ex


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"Expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herglotz", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="directory for output files and the run manifest")
    common.add_argument("--set", dest="values", type=_assignment, action="append", default=[], metavar="NAME=VALUE")
    common.add_argument("--seed", type=int, default=0, help="recorded in the manifest")

    derive = commands.add_parser(
        "derive",
        parents=[common],
        help="print the field equations",
        description=DERIVE_DESCRIPTION,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    derive.add_argument("problem", type=Path)
    derive.add_argument("--order", choices=["auto", "1", "higher"], default="auto")
    derive.set_defaults(handler=cmd_derive)

    solve = commands.add_parser("solve", parents=[common], help="integrate the solver block")
    solve.add_argument("problem", type=Path)
    solve.add_argument("--dt", type=_positive_float)
    solve.add_argument("--nt", type=int)
    solve.add_argument("--nx", type=int)
    solve.add_argument("--format", choices=["csv", "json", "bin"], default="csv")
    solve.add_argument("--tol", type=_positive_float, help="fixed-point tolerance of the action density")
    solve.set_defaults(handler=cmd_solve)

    verify = commands.add_parser("verify", parents=[common], help="evaluate residuals of a section or solution")
    verify.add_argument("problem", type=Path)
    verify.add_argument("--solution", type=Path, help="solved field (.csv or .bin) instead of the section block")
    verify.add_argument("--tol", type=_positive_float, help="residual tolerance")
    verify.add_argument("--dt", type=_positive_float, help="time step of the trajectory to verify (mechanics)")
    verify.add_argument("--gradient-modes", type=int, default=0, help="also run the discrete action gradient check")
    verify.add_argument("--order", choices=["auto", "1", "higher"], default="auto")
    verify.add_argument("--format", choices=["csv", "json"], default="json", help="format of the written report")
    verify.set_defaults(handler=cmd_verify)

    demo = commands.add_parser("demo", help="run the bundled examples")
    demo.add_argument("--out", type=Path, default=Path("herglotz-demo"))
    demo.set_defaults(handler=cmd_demo)
    return parser


class _Run:
    """Outputs of one command, recorded in a manifest when `--out` is given."""

    def __init__(self, args: argparse.Namespace, text: str) -> None:
        self.args = args
        self.text = text
        self.outputs: List[Path] = []
        self.started = time.perf_counter()

    @property
    def directory(self) -> Optional[Path]:
        return self.args.out  # type: ignore[no-any-return]

    def record(self, path: Path) -> None:
        self.outputs.append(path)

    def finish(self) -> None:
        if self.directory is None:
            return
        options = {
            key: str(value) if isinstance(value, Path) else value
            for key, value in sorted(vars(self.args).items())
            if key != "handler"
        }
        options["values"] = dict(self.args.values)
        manifest = RunManifest(
            input_sha256=sha256_of(self.text),
            subcommand=self.args.command,
            options=options,
            version=__version__,
            outputs=[path.name for path in self.outputs],
            wall_clock=time.perf_counter() - self.started,
            created=datetime.now(timezone.utc).isoformat(),
        )
        manifest.write(self.directory)


def _load(args: argparse.Namespace) -> Tuple[str, ProblemFile]:
    text = Path(args.problem).read_text(encoding="utf-8")
    problem = parse_problem(text)
    logger.info("loaded %s: %s", args.problem, print_expression(problem.spec.lagrangian))
    return text, problem


def _values(args: argparse.Namespace) -> Dict[str, float]:
    return dict(args.values)


def _number(spec: LagrangianSpec, expr: Expr, values: Dict[str, float]) -> float:
    return eval_numeric(expr, constant_bindings(spec, values, expr))


def _closedness_line(equations: EquationSet) -> str:
    if equations.is_closed:
        return "closed action dependence: YES"
    entries = ", ".join(
        f"C_{mu}{nu} = {print_expression(value)}" for (mu, nu), value in equations.closedness_entries().items()
    )
    return f"closed action dependence: NO, {entries}"


def cmd_derive(args: argparse.Namespace) -> int:
    text, problem = _load(args)
    run = _Run(args, text)
    equations = derive_equations(problem.spec, args.order)
    for name, residual in equations.residuals.items():
        print(f"E_{name}: {print_equation(residual)}")
    print(f"phi: {print_equation(equations.constraint)}")
    print(f"theta: ({', '.join(print_expression(entry) for entry in equations.dissipation)})")
    for (mu, nu), value in equations.closedness_entries().items():
        print(f"C_{mu}{nu} = {print_expression(value)}")
    print(_closedness_line(equations))
    if run.directory is not None:
        run.record(write_json(run.directory / "equations.json", equations.to_document()))
    run.finish()
    return EXIT_OK


def _field_grid(solver: SolverBlock, args: argparse.Namespace, *, periodic_x: bool) -> Grid2D:
    if solver.x_range is None:
        raise DomainError("Field solvers need an `x` range")
    nt = args.nt or solver.nt
    if args.dt is not None:
        nt = int(round((solver.t_range[1] - solver.t_range[0]) / args.dt)) + 1
    nx = args.nx or solver.nx
    if nt is None or nx is None:
        raise DomainError("Field solvers need `nt` and `nx` (or --nt/--dt and --nx)")
    return Grid2D.uniform(solver.t_range, solver.x_range, nt, nx, periodic_x=periodic_x)


def _write_solution(run: _Run, solution: FieldSolution, fmt: str) -> None:
    assert run.directory is not None
    if fmt == "bin":
        run.record(write_field_bin(run.directory / "field.bin", solution))
    elif fmt == "json":
        run.record(write_json(run.directory / "field.json", json.loads(solution.json())))
    else:
        run.record(write_field_csv(run.directory / "field.csv", solution))


def _write_columns(run: _Run, name: str, fmt: str, header: Sequence[str], table: np.ndarray) -> None:
    assert run.directory is not None
    if fmt == "json":
        document = {column: table[:, i].tolist() for i, column in enumerate(header)}
        run.record(write_json(run.directory / f"{name}.json", document))
    else:
        run.record(write_table(run.directory / f"{name}.csv", header, table))


def _solve_mechanics(problem: ProblemFile, args: argparse.Namespace) -> Trajectory:
    spec, solver = problem.spec, problem.solver
    assert solver is not None
    values = _values(args)
    time_name = spec.coordinates[0]

    def initial(key: str) -> float:
        expr = solver.initial.get(key)
        return 0.0 if expr is None else _number(spec, expr, values)

    return integrate(
        spec,
        [initial(field) for field in spec.fields],
        [initial(f"{field}_{time_name}") for field in spec.fields],
        initial("z"),
        solver.t_range,
        args.dt or solver.dt or 1e-3,
        values=values,
    )


def _initial(solver: SolverBlock, key: str) -> Expr:
    try:
        return solver.initial[key]
    except KeyError as ex:
        raise DomainError(f"The {solver.scheme.value} solver needs the initial condition `{key}`") from ex


def cmd_solve(args: argparse.Namespace) -> int:
    text, problem = _load(args)
    if problem.solver is None:
        raise DomainError(f"{args.problem} has no `solver:` block")
    run = _Run(args, text)
    spec, solver, values = problem.spec, problem.solver, _values(args)

    if solver.scheme is Scheme.RK4:
        if args.format == "bin":
            raise DomainError("Binary dumps hold field solutions; use csv or json for trajectories")
        trajectory = _solve_mechanics(problem, args)
        multiplier = multiplier_profile(spec, trajectory)
        print(f"rk4: {trajectory.steps} steps, dt = {trajectory.dt:g}, z(T) = {trajectory.z[-1]:.10g}")
        if run.directory is not None:
            _write_columns(run, "trajectory", args.format, *trajectory.columns(multiplier))
        run.finish()
        return EXIT_OK

    equations = derive_equations(spec)
    if solver.scheme is Scheme.STRING:
        c2, gamma = wave_coefficients(spec, equations, values)
        grid = _field_grid(solver, args, periodic_x=False)
        solution = solve_damped_string(
            c2,
            gamma,
            _initial(solver, "u"),
            _initial(solver, "u_t"),
            grid,
            spec=spec,
            values=values,
            tolerance=args.tol,
        )
        energy = string_energy(solution, c2, gamma)
        print(
            f"string: c^2 = {c2:g}, gamma = {gamma:g}, {grid.nt - 1} steps,"
            f" energy {energy.energy[0]:.10g} -> {energy.energy[-1]:.10g}"
        )
        if run.directory is not None:
            _write_solution(run, solution, args.format)
            _write_columns(run, "energy", args.format, *energy.columns())
    else:
        gamma_t = kdv_coefficients(spec, equations, values)
        grid = _field_grid(solver, args, periodic_x=True)
        solution = solve_damped_kdv(
            gamma_t,
            _initial(solver, "u_x"),
            grid,
            substeps=solver.substeps,
            spec=spec,
            values=values,
            tolerance=args.tol,
        )
        mass = kdv_mass(kdv_wave(solution), grid.dx)
        print(f"kdv: gamma_t = {gamma_t:g}, {grid.nt - 1} rows, mass {mass[0]:.10g} -> {mass[-1]:.10g}")
        if run.directory is not None:
            _write_solution(run, solution, args.format)
            _write_columns(run, "mass", args.format, ["t", "mass"], np.column_stack([grid.t, mass]))
    run.finish()
    return EXIT_OK


def _print_report(report: ResidualReport) -> None:
    for name, norms in report.terms().items():
        print(f"{name:<8} max {norms.max:.3e}  l2 {norms.l2:.3e}  bound {report.bound(name):.3e}")
    for check, verdict in report.verdicts().items():
        print(f"{check}: {verdict}")


def _report_rows(report: ResidualReport) -> List[ReportRow]:
    rows: List[ReportRow] = []
    for name, norms in report.terms().items():
        bound = report.bound(name)
        rows.append((name, norms.max, bound, PASS if norms.max <= bound else FAIL))
    return rows


def _verify_mechanics(problem: ProblemFile, args: argparse.Namespace) -> Tuple[Dict[str, Any], List[ReportRow]]:
    trajectory = _solve_mechanics(problem, args)
    tolerance = args.tol or _trajectory_tolerance(trajectory.dt)
    gradient = action_gradient_check(problem.spec, trajectory)
    multiplier = multiplier_profile(problem.spec, trajectory)
    duality = float(np.max(np.abs(multiplier_residual(problem.spec, trajectory, multiplier))))
    verdicts = {
        "action gradient": PASS if gradient <= tolerance else FAIL,
        "multiplier residual": PASS if duality <= tolerance else FAIL,
    }
    print(f"action gradient     {gradient:.3e}")
    print(f"multiplier residual {duality:.3e}")
    for check, verdict in verdicts.items():
        print(f"{check}: {verdict}")
    document = {
        "action_gradient": gradient,
        "multiplier_residual": duality,
        "tolerance": tolerance,
        "verdicts": verdicts,
    }
    rows: List[ReportRow] = [
        ("action gradient", gradient, tolerance, verdicts["action gradient"]),
        ("multiplier residual", duality, tolerance, verdicts["multiplier residual"]),
    ]
    return document, rows


def _trajectory_tolerance(dt: float) -> float:
    settings = get_settings()
    return settings.residual_tol + settings.refinement_scale * dt**2


def cmd_verify(args: argparse.Namespace) -> int:
    text, problem = _load(args)
    run = _Run(args, text)
    spec, values = problem.spec, _values(args)
    if spec.is_mechanics:
        if problem.solver is None:
            raise DomainError(f"{args.problem} has no `solver:` block to verify")
        document, rows = _verify_mechanics(problem, args)
    else:
        equations = derive_equations(spec, args.order)
        target: Any
        if args.solution is not None:
            periodic = problem.solver is not None and problem.solver.scheme is Scheme.KDV
            target = read_field(args.solution, periodic_x=periodic)
        elif problem.section is not None:
            block = problem.section
            grid = Grid2D.uniform(block.t_range, block.x_range, block.nt, block.nx)
            target = Section(u=block.u, z_t=block.z_t, z_x=block.z_x, grid=grid)
        else:
            raise DomainError(f"{args.problem} has no `section:` block; pass --solution")
        report = evaluate_residuals(spec, equations, target, values=values, tolerance=args.tol)
        _print_report(report)
        document = {"report": json.loads(report.json()), "verdicts": report.verdicts()}
        rows = _report_rows(report)
        if args.gradient_modes > 0:
            sampled = target if isinstance(target, FieldSolution) else _sample(spec, target, values)
            gradient = discrete_action_gradient_check(
                spec, sampled, args.gradient_modes, values=values, tolerance=args.tol
            )
            print(f"action gradient: u {gradient.u_gradient:.3e}, z {gradient.z_gradient:.3e}")
            document["gradient"] = json.loads(gradient.json())
            rows += [("u gradient", gradient.u_gradient, None, ""), ("z gradient", gradient.z_gradient, None, "")]
    if run.directory is not None and args.format == "csv":
        run.record(write_report_csv(run.directory / "report.csv", rows))
    elif run.directory is not None:
        run.record(write_json(run.directory / "report.json", document))
    run.finish()
    return EXIT_OK


def _sample(spec: LagrangianSpec, section: Section, values: Dict[str, float]) -> FieldSolution:
    return analytic_section(spec, section.u, section.z_t, section.z_x, section.grid, values=values)


def cmd_demo(args: argparse.Namespace) -> int:
    bundled = resources.files("herglotz") / "problems"
    for name, commands in DEMOS.items():
        with resources.as_file(bundled / f"{name}.hgz") as path:
            for command in commands:
                print(f"== {name}: {command}")
                namespace = build_parser().parse_args([command, str(path), "--out", str(args.out / name / command)])
                namespace.verbose = args.verbose
                namespace.handler(namespace)
    return EXIT_OK


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ParseError as ex:
        print(f"parse error: {ex}", file=sys.stderr)
        return EXIT_PARSE
    except NotClosedError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_NOT_CLOSED
    except (StabilityError, NonFiniteStateError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (HerglotzError, ValidationError, OSError, ValueError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
