"""Residuals of derived equations on sampled or analytic sections, and a brute-force check that a
section is a critical point of the discrete action."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
import sympy
from pydantic import BaseModel
from scipy.integrate import trapezoid

from herglotz.calculus import EquationSet, constraint_expression
from herglotz.config import ExprConfig, get_settings
from herglotz.errors import ConstraintViolationError, GridError, StencilOverflowError
from herglotz.expr import ActionJet, Coordinate, Expr, FieldJet, compile_numeric, free_atoms, substitute
from herglotz.fields import (
    Section,
    analytic_section,
    constant_bindings,
    jet_arrays,
    reconstruct_action_density,
    require_field_spec,
)
from herglotz.grid import SPACE, TIME, FieldSolution, Grid2D, accuracy_for, half_width
from herglotz.jet import LagrangianSpec
from herglotz.printer import print_expression

logger = logging.getLogger(__name__)

PASS = "PASS"
FAIL = "FAIL"


class Norms(BaseModel):
    max: float
    l2: float

    Config = ExprConfig

    @classmethod
    def of(cls, residual: np.ndarray, grid: Grid2D) -> "Norms":
        finite = residual[np.isfinite(residual)]
        if finite.size == 0:
            return cls(max=0.0, l2=0.0)
        return cls(
            max=float(np.max(np.abs(finite))),
            l2=float(math.sqrt(float(np.sum(finite**2)) * grid.dt * grid.dx)),
        )


class ResidualReport(BaseModel):
    """Field-equation, constraint and closedness residuals of one section.

    `exact` holds the printed symbolic residuals when they were computed without stencils.
    `truncation` is the estimated stencil error of each term (`E_u`, `phi`, `C_tx`, ...); a term passes
    when its max residual is within `tolerance + truncation_safety * truncation[term]`.
    """

    field_equations: Dict[str, Norms]
    constraint: Norms
    closedness: Dict[str, Norms]
    interior_only: bool
    stencil_order: Optional[int]
    margin: Tuple[int, int]
    tolerance: float
    truncation: Dict[str, float] = {}
    truncation_safety: float = 0.0
    exact: Optional[Dict[str, str]] = None

    Config = ExprConfig

    def terms(self) -> Dict[str, Norms]:
        terms = {f"E_{name}": norms for name, norms in self.field_equations.items()}
        terms["phi"] = self.constraint
        terms.update(self.closedness)
        return terms

    def bound(self, term: str) -> float:
        return self.tolerance + self.truncation_safety * self.truncation.get(term, 0.0)

    def verdicts(self) -> Dict[str, str]:
        terms = self.terms()

        def verdict(names: Iterable[str]) -> str:
            return PASS if all(terms[name].max <= self.bound(name) for name in names) else FAIL

        return {
            "field equation": verdict(name for name in terms if name.startswith("E_")),
            "constraint": verdict(["phi"]),
            "closedness": verdict(name for name in terms if name.startswith("C_")),
        }


def _equation_terms(spec: LagrangianSpec, equations: EquationSet) -> Dict[str, Expr]:
    terms = {f"E_{name}": expr for name, expr in equations.residuals.items()}
    terms["phi"] = equations.constraint
    for (mu, nu), expr in equations.closedness_entries().items():
        terms[f"C_{mu}{nu}"] = expr
    return terms


def _report(
    residuals: Dict[str, np.ndarray],
    grid: Grid2D,
    **fields: object,
) -> ResidualReport:
    norms = {name: Norms.of(residual, grid) for name, residual in residuals.items()}
    return ResidualReport(
        field_equations={name[2:]: norms[name] for name in norms if name.startswith("E_")},
        constraint=norms["phi"],
        closedness={name: norms[name] for name in norms if name.startswith("C_")},
        **fields,
    )


def _margin(spec: LagrangianSpec, grid: Grid2D, expressions: List[Expr]) -> Tuple[int, int]:
    margin = [0, 0]
    for expr in expressions:
        for atom in free_atoms(expr):
            jet = spec.jet_of(atom)
            if jet is None:
                continue
            for axis, order in enumerate(jet.index):
                if order and not grid.periodic(axis):
                    margin[axis] = max(margin[axis], half_width(order, accuracy_for(grid, axis)))
    for axis in (TIME, SPACE):
        if grid.points(axis) <= 2 * margin[axis]:
            raise StencilOverflowError(
                f"Axis {spec.coordinates[axis]} has {grid.points(axis)} points, the equations need a margin of "
                f"{margin[axis]} on each side"
            )
    return margin[0], margin[1]


def _crop(array: np.ndarray, margin: Tuple[int, int]) -> np.ndarray:
    rows, columns = margin
    return array[rows : array.shape[0] - rows, columns : array.shape[1] - columns]


def _evaluate_on_grid(
    spec: LagrangianSpec,
    expr: Expr,
    solution: FieldSolution,
    values: Optional[Mapping[str, float]],
) -> np.ndarray:
    expr = substitute(expr, constant_bindings(spec, values, expr))
    atoms = free_atoms(expr)
    function = compile_numeric(expr, atoms)
    return np.broadcast_to(function(*jet_arrays(spec, solution, atoms, interior=True)), solution.grid.shape)


def truncation_errors(
    spec: LagrangianSpec,
    terms: Mapping[str, Expr],
    solution: FieldSolution,
    residuals: Mapping[str, np.ndarray],
    values: Optional[Mapping[str, float]] = None,
) -> Dict[str, float]:
    """Leading stencil error of each residual, estimated from the same data at twice the spacing.

    Stencils of order p give R(2h) - R(h) = (2^p - 1) C h^p + O(h^(p+2)), so the max of that
    difference over the shared points, divided by 2^p - 1, estimates C h^p. `residuals` are the
    uncropped arrays on the solution's own grid. Empty when the grid cannot be coarsened.
    """
    grid = solution.grid
    try:
        coarse = solution.coarsened()
        margin = _margin(spec, coarse.grid, list(terms.values()))
    except (GridError, StencilOverflowError) as ex:
        logger.info("no truncation estimate: %s", ex)
        return {}
    order = min(accuracy_for(grid, TIME), accuracy_for(grid, SPACE))
    errors = {}
    for name, expr in terms.items():
        difference = _crop(_evaluate_on_grid(spec, expr, coarse, values) - residuals[name][::2, ::2], margin)
        errors[name] = float(np.max(np.abs(difference))) / (2**order - 1) if difference.size else 0.0
    logger.debug("truncation estimates on %dx%d grid: %s", grid.nt, grid.nx, errors)
    return errors


def evaluate_residuals(
    spec: LagrangianSpec,
    equations: EquationSet,
    solution: Union[FieldSolution, Section],
    *,
    values: Optional[Mapping[str, float]] = None,
    tolerance: Optional[float] = None,
) -> ResidualReport:
    """E, phi and C at every interior grid point, via central stencils of the stored arrays.

    A `Section` polynomial in the coordinates is evaluated exactly instead; any other section is
    sampled on its grid first. Without an explicit `tolerance`, each term may exceed `residual_tol`
    by its estimated truncation error times `truncation_safety`; an explicit `tolerance` is the
    whole bound.
    """
    require_field_spec(spec)
    if isinstance(solution, Section):
        if solution.is_polynomial(spec):
            return evaluate_residuals_exact(spec, equations, solution, values=values, tolerance=tolerance)
        solution = analytic_section(spec, solution.u, solution.z_t, solution.z_x, solution.grid, values=values)
    grid = solution.grid
    settings = get_settings()
    terms = _equation_terms(spec, equations)
    margin = _margin(spec, grid, list(terms.values()))
    residuals = {name: _evaluate_on_grid(spec, expr, solution, values) for name, expr in terms.items()}
    truncation = {} if tolerance is not None else truncation_errors(spec, terms, solution, residuals, values)
    report = _report(
        {name: _crop(residual, margin) for name, residual in residuals.items()},
        grid,
        interior_only=any(margin),
        stencil_order=accuracy_for(grid, SPACE),
        margin=margin,
        tolerance=settings.residual_tol if tolerance is None else tolerance,
        truncation=truncation,
        truncation_safety=settings.truncation_safety if truncation else 0.0,
    )
    logger.info("residuals on %dx%d grid (margin %s): %s", grid.nt, grid.nx, margin, report.verdicts())
    return report


def _section_bindings(spec: LagrangianSpec, section: Section, expressions: List[Expr]) -> Dict[sympy.Symbol, Expr]:
    """Every jet variable occurring in `expressions` mapped to the derivative of the section."""
    sources = section.expressions()
    bindings = {}
    for expr in expressions:
        for atom in free_atoms(expr):
            if not isinstance(atom, (FieldJet, ActionJet)):
                continue
            jet = spec.jet_of(atom)
            assert jet is not None
            source = sources["u"] if isinstance(atom, FieldJet) else sources[f"z^{jet.label}"]
            derivative = sympy.sympify(source)
            for mu in jet.index.directions():
                derivative = sympy.diff(derivative, spec.coordinate(mu))
            bindings[atom] = derivative
    return bindings


def evaluate_residuals_exact(
    spec: LagrangianSpec,
    equations: EquationSet,
    section: Section,
    *,
    values: Optional[Mapping[str, float]] = None,
    tolerance: Optional[float] = None,
) -> ResidualReport:
    """Substitute the section's exact derivatives into E, phi and C; no stencils involved."""
    require_field_spec(spec)
    terms = _equation_terms(spec, equations)
    bindings = _section_bindings(spec, section, list(terms.values()))
    exact = {name: substitute(expr, bindings) for name, expr in terms.items()}
    grid = section.grid
    t, x = grid.mesh()
    coordinates = [Coordinate(spec.coordinates[TIME]), Coordinate(spec.coordinates[SPACE])]
    residuals = {}
    for name, expr in exact.items():
        numeric = substitute(expr, constant_bindings(spec, values, expr))
        residuals[name] = compile_numeric(numeric, coordinates)(t, x)
    report = _report(
        residuals,
        grid,
        interior_only=False,
        stencil_order=None,
        margin=(0, 0),
        tolerance=get_settings().residual_tol if tolerance is None else tolerance,
        exact={name: print_expression(expr) for name, expr in exact.items()},
    )
    logger.info("exact residuals: %s", report.exact)
    return report


class GradientReport(BaseModel):
    u_gradient: float
    z_gradient: float
    modes: List[Tuple[int, int]]
    h: float

    Config = ExprConfig


MAX_GRADIENT_GRID = 64


def _modes(count: int) -> List[Tuple[int, int]]:
    """(k, l) >= 1 ordered by k + l, then k."""
    modes: List[Tuple[int, int]] = []
    total = 2
    while len(modes) < count:
        modes.extend((k, total - k) for k in range(1, total))
        total += 1
    return modes[:count]


def _bump(grid: Grid2D, mode: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """psi = sin(k pi s) sin(l pi r) on the unit-scaled grid, with psi_t and psi_x."""
    k, l = mode
    t, x = grid.mesh()
    duration = grid.t_range[1] - grid.t_range[0]
    length = grid.x_range[1] - grid.x_range[0]
    s = (t - grid.t_range[0]) / duration
    r = (x - grid.x_range[0]) / length
    psi = np.sin(k * np.pi * s) * np.sin(l * np.pi * r)
    psi_t = k * np.pi / duration * np.cos(k * np.pi * s) * np.sin(l * np.pi * r)
    psi_x = l * np.pi / length * np.sin(k * np.pi * s) * np.cos(l * np.pi * r)
    return psi, psi_t, psi_x


def discrete_action(
    spec: LagrangianSpec, solution: FieldSolution, values: Optional[Mapping[str, float]] = None
) -> float:
    """A = sum L dt dx with trapezoid weights on fixed axes."""
    grid = solution.grid
    lagrangian = substitute(spec.lagrangian, constant_bindings(spec, values, spec.lagrangian))
    atoms = free_atoms(lagrangian)
    density = compile_numeric(lagrangian, atoms)(*jet_arrays(spec, solution, atoms, interior=False))
    density = np.broadcast_to(density, grid.shape)
    integrated = np.sum(density, axis=1) * grid.dx if grid.periodic(SPACE) else trapezoid(density, dx=grid.dx, axis=1)
    return float(trapezoid(integrated, dx=grid.dt))


def discrete_action_gradient_check(
    spec: LagrangianSpec,
    solution: FieldSolution,
    n_modes: int = 4,
    h: float = 1e-4,
    *,
    values: Optional[Mapping[str, float]] = None,
    tolerance: Optional[float] = None,
) -> GradientReport:
    """Central differences of the discrete action along sine bumps.

    u-direction: u +- h psi with z^t reconstructed (z^x = 0). z-direction: (z^t, z^x) +- h (psi_x, -psi_t),
    which keeps z^t_t + z^x_x unchanged, with u fixed.
    """
    require_field_spec(spec)
    grid = solution.grid
    if grid.nt > MAX_GRADIENT_GRID or grid.nx > MAX_GRADIENT_GRID:
        raise GridError(f"The action gradient check is limited to {MAX_GRADIENT_GRID}^2 grids, got {grid.shape}")
    if n_modes < 1 or h <= 0:
        raise ValueError(f"Need n_modes >= 1 and h > 0, got {n_modes} and {h}")
    phi = constraint_expression(spec)
    phi_residual = _evaluate_on_grid(spec, phi, solution, values)
    constraint = Norms.of(_crop(phi_residual, _margin(spec, grid, [phi])), grid)
    if tolerance is None:
        settings = get_settings()
        truncation = truncation_errors(spec, {"phi": phi}, solution, {"phi": phi_residual}, values)
        limit = settings.residual_tol + settings.truncation_safety * truncation.get("phi", 0.0)
    else:
        limit = tolerance
    if constraint.max > limit:
        raise ConstraintViolationError(
            f"The section violates z^mu_mu = L (max residual {constraint.max:.3e} > {limit:.3e})"
        )
    modes = _modes(n_modes)
    initial = solution.z_t[0]

    def u_derivative(mode: Tuple[int, int]) -> float:
        psi, _, _ = _bump(grid, mode)
        actions = []
        for sign in (1.0, -1.0):
            moved = FieldSolution(
                grid=grid,
                u=solution.u + sign * h * psi,
                z_t=solution.z_t,
                z_x=np.zeros(grid.shape),
                provenance=solution.provenance,
                u_increment=solution.u_increment,
            )
            moved = reconstruct_action_density(spec, moved, values=values, initial=initial)
            actions.append(discrete_action(spec, moved, values))
        return abs(actions[0] - actions[1]) / (2 * h)

    def z_derivative(mode: Tuple[int, int]) -> float:
        _, psi_t, psi_x = _bump(grid, mode)
        actions = [
            discrete_action(
                spec, solution.with_action(solution.z_t + sign * h * psi_x, solution.z_x - sign * h * psi_t), values
            )
            for sign in (1.0, -1.0)
        ]
        return abs(actions[0] - actions[1]) / (2 * h)

    with ThreadPoolExecutor(max_workers=get_settings().threads) as executor:
        u_gradients = list(executor.map(u_derivative, modes))
        z_gradients = list(executor.map(z_derivative, modes))
    logger.info("action gradients: u %s, z %s", u_gradients, z_gradients)
    return GradientReport(u_gradient=max(u_gradients), z_gradient=max(z_gradients), modes=modes, h=h)

