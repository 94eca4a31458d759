"""Field solvers for the damped string and the damped KdV equation, and the action density that goes
with any sampled section.

Both solvers integrate the equation and leave the action density to `reconstruct_action_density`,
which works in the gauge z^x = 0: the constraint z^t_t + z^x_x = L becomes an ODE in t per
spatial point, started from z^t(t0, x) = 0 unless told otherwise.
"""
import logging
import math
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import sympy
from pydantic import BaseModel
from scipy.integrate import trapezoid

from herglotz.calculus import EquationSet
from herglotz.config import ExprConfig, get_settings
from herglotz.errors import (
    DomainError,
    FixedPointDivergenceError,
    GridError,
    NonFiniteStateError,
    StabilityError,
    UnboundAtomError,
)
from herglotz.expr import (
    ActionJet,
    Constant,
    Coordinate,
    Expr,
    FieldJet,
    NumericFunction,
    compile_numeric,
    free_atoms,
    substitute,
)
from herglotz.grid import (
    SPACE,
    TIME,
    FieldSolution,
    Grid2D,
    Provenance,
    differentiate,
    gradient_everywhere,
)
from herglotz.jet import LagrangianSpec, MultiIndex

logger = logging.getLogger(__name__)

DEFAULT_COORDINATES = ("t", "x")


def constant_bindings(
    spec: Optional[LagrangianSpec], values: Optional[Mapping[str, float]], expr: Expr
) -> Dict[sympy.Symbol, float]:
    """Values of the constants that occur in `expr`; declared but unset constants raise when used."""
    table: Dict[str, Optional[float]] = dict(spec.constants) if spec is not None else {}
    table.update(values or {})
    bindings = {}
    for atom in sympy.sympify(expr).free_symbols:
        if isinstance(atom, Constant) and atom.name in table:
            value = table[atom.name]
            if value is None:
                raise UnboundAtomError(atom.name)
            bindings[atom] = float(value)
    return bindings


def sample_expression(
    expr: Expr,
    grid: Grid2D,
    *,
    spec: Optional[LagrangianSpec] = None,
    values: Optional[Mapping[str, float]] = None,
    time: Optional[float] = None,
) -> np.ndarray:
    """Evaluate an expression in the coordinates and constants on the grid (or on one time row)."""
    expr = substitute(expr, constant_bindings(spec, values, sympy.sympify(expr)))
    names = spec.coordinates if spec is not None else DEFAULT_COORDINATES
    atoms = [Coordinate(names[TIME]), Coordinate(names[SPACE])]
    function = compile_numeric(expr, atoms)
    if time is not None:
        return function(np.full(grid.nx, time), grid.x)
    t, x = grid.mesh()
    return function(t, x)


class Section(BaseModel):
    """Analytic expressions for (u, z^t, z^x) plus the grid they are sampled on."""

    u: Expr
    z_t: Expr
    z_x: Expr
    grid: Grid2D

    Config = ExprConfig

    def expressions(self) -> Dict[str, Expr]:
        return {"u": self.u, "z^t": self.z_t, "z^x": self.z_x}

    def is_polynomial(self, spec: LagrangianSpec) -> bool:
        coordinates = [spec.coordinate(mu) for mu in range(spec.dimension)]
        return all(sympy.sympify(expr).is_polynomial(*coordinates) for expr in self.expressions().values())


def analytic_section(
    spec: LagrangianSpec,
    u: Expr,
    z_t: Expr,
    z_x: Expr,
    grid: Grid2D,
    *,
    values: Optional[Mapping[str, float]] = None,
) -> FieldSolution:
    """Sample analytic expressions; names other than coordinates and constants raise UnboundAtomError."""
    sampled = {
        name: sample_expression(expr, grid, spec=spec, values=values)
        for name, expr in (("u", u), ("z_t", z_t), ("z_x", z_x))
    }
    return FieldSolution(grid=grid, provenance=Provenance.ANALYTIC_SECTION, **sampled)


def jet_array(solution: FieldSolution, name: str, index: MultiIndex, *, interior: bool) -> np.ndarray:
    """Grid samples of the jet variable `name`_I.

    Periodic axes use fourth-order periodic stencils. Non-periodic axes use second-order central
    stencils (NaN within the half-width of the edge) when `interior`, and one-sided edges otherwise.
    """
    grid = solution.grid
    array = solution.array(name)
    increment = solution.u_increment if name == "u" else None
    for axis, order in enumerate(index):
        if not order:
            continue
        spacing = grid.spacing(axis)
        if grid.periodic(axis):
            array = differentiate(
                array,
                axis,
                order,
                spacing,
                periodic=True,
                accuracy=4,
                increment=increment if axis == SPACE else None,
            )
        elif interior:
            array = differentiate(array, axis, order, spacing, periodic=False, accuracy=2)
        else:
            array = gradient_everywhere(array, axis, order, spacing)
        if increment is not None:
            increment = gradient_everywhere(increment, 0, order, grid.dt) if axis == TIME else None
    return array


def jet_arrays(
    spec: LagrangianSpec, solution: FieldSolution, atoms: List[sympy.Symbol], *, interior: bool
) -> List[np.ndarray]:
    """Arrays for coordinate, field-jet and action-jet atoms of a single-field spec, in order."""
    t, x = solution.grid.mesh()
    arrays = []
    for atom in atoms:
        jet = spec.jet_of(atom)
        if jet is None:
            raise ValueError(f"`{atom}` is not a jet variable")
        if isinstance(atom, Coordinate):
            arrays.append(t if spec.mu(atom.name) == TIME else x)
        elif isinstance(atom, FieldJet):
            arrays.append(jet_array(solution, "u", jet.index, interior=interior))
        elif isinstance(atom, ActionJet):
            arrays.append(jet_array(solution, f"z^{jet.label}", jet.index, interior=interior))
    return arrays


def require_field_spec(spec: LagrangianSpec) -> None:
    if spec.dimension != 2 or len(spec.fields) != 1:
        raise ValueError(
            f"Field solvers need one field over two coordinates, got {len(spec.fields)} over {spec.dimension}"
        )


def reconstruct_action_density(
    spec: LagrangianSpec,
    solution: FieldSolution,
    *,
    values: Optional[Mapping[str, float]] = None,
    initial: Optional[np.ndarray] = None,
    tolerance: Optional[float] = None,
) -> FieldSolution:
    """Fill z^t by trapezoidal integration of z^t_t = L in t (z^x = 0), point by point in x.

    When L depends on z^t the implicit trapezoidal update is fixed-point iterated, vectorised over x,
    until the relative change drops below `tolerance` (`fixed_point_tol` by default).
    """
    require_field_spec(spec)
    settings = get_settings()
    grid = solution.grid
    lagrangian = substitute(spec.lagrangian, constant_bindings(spec, values, spec.lagrangian))
    z_t, z_x = spec.action_densities()
    lagrangian = substitute(lagrangian, {z_x: 0})
    jets = [atom for atom in free_atoms(lagrangian) if atom != z_t]
    function = compile_numeric(lagrangian, [*jets, z_t])
    arrays = jet_arrays(spec, solution, jets, interior=False)
    depends_on_action = z_t in lagrangian.free_symbols
    tolerance = settings.fixed_point_tol if tolerance is None else tolerance

    density = np.zeros(grid.shape)
    density[0] = 0.0 if initial is None else initial
    dt = grid.dt
    row = [array[0] for array in arrays]
    current = function(*row, density[0])
    for k in range(grid.nt - 1):
        row = [array[k + 1] for array in arrays]
        guess = density[k] + dt * current
        if depends_on_action:
            for _ in range(settings.fixed_point_max_iter):
                updated = density[k] + dt / 2 * (current + function(*row, guess))
                change = np.abs(updated - guess)
                guess = updated
                if not np.all(np.isfinite(change)):
                    raise FixedPointDivergenceError(k + 1, int(np.argmin(np.isfinite(change))))
                if np.max(change) <= tolerance * max(1.0, float(np.max(np.abs(updated)))):
                    break
            else:
                raise FixedPointDivergenceError(k + 1, int(np.argmax(change)))
        else:
            guess = density[k] + dt / 2 * (current + function(*row, guess))
        density[k + 1] = guess
        current = function(*row, guess)

    reconstructed = solution.with_action(density)
    residual = _constraint_residual(spec, reconstructed, function, jets)
    scale = dt**2 + grid.dx**2
    logger.info(
        "reconstructed z^t on %dx%d grid: max constraint residual %.3e (C = %.3g)",
        grid.nt,
        grid.nx,
        residual,
        residual / scale,
    )
    return reconstructed


def _constraint_residual(
    spec: LagrangianSpec, solution: FieldSolution, function: NumericFunction, jets: List[sympy.Symbol]
) -> float:
    arrays = jet_arrays(spec, solution, jets, interior=True)
    derivative = jet_array(solution, "z^t", MultiIndex((1, 0)), interior=True)
    residual = derivative - function(*arrays, solution.z_t)
    return float(np.nanmax(np.abs(residual))) if np.any(np.isfinite(residual)) else 0.0


class EnergySeries(BaseModel):
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray

    Config = ExprConfig

    def rate(self) -> np.ndarray:
        """Discrete dE/dt."""
        return np.gradient(self.energy, self.times, edge_order=2)  # type: ignore[no-any-return]

    def columns(self) -> Tuple[List[str], np.ndarray]:
        return ["t", "energy", "dissipation"], np.column_stack([self.times, self.energy, self.dissipation])


def string_energy(solution: FieldSolution, c2: float, gamma: float = 0.0) -> EnergySeries:
    """E(t) = int (u_t^2/2 + c^2 u_x^2/2) dx and the dissipation rate -gamma int u_t^2 dx."""
    grid = solution.grid
    u_t = gradient_everywhere(solution.u, TIME, 1, grid.dt)
    u_x = gradient_everywhere(solution.u, SPACE, 1, grid.dx)
    energy = trapezoid(0.5 * u_t**2 + 0.5 * c2 * u_x**2, dx=grid.dx, axis=1)
    dissipation = -gamma * trapezoid(u_t**2, dx=grid.dx, axis=1)
    return EnergySeries(times=grid.t, energy=energy, dissipation=dissipation)


def string_lagrangian(c2: float, gamma: float) -> LagrangianSpec:
    """L = u_t^2/2 - c^2 u_x^2/2 - gamma z^t with the coefficients inlined."""
    u_t, u_x, z_t = FieldJet("u_t"), FieldJet("u_x"), ActionJet("z^t")
    lagrangian = sympy.Rational(1, 2) * u_t**2 - sympy.Float(c2) / 2 * u_x**2 - sympy.Float(gamma) * z_t
    return LagrangianSpec(coordinates=DEFAULT_COORDINATES, fields=("u",), order=1, lagrangian=lagrangian)


def kdv_lagrangian(gamma_t: float) -> LagrangianSpec:
    """L = u_x u_t/2 + u_x^3 - u_xx^2/2 - gamma_t z^t."""
    u_t, u_x, u_xx, z_t = FieldJet("u_t"), FieldJet("u_x"), FieldJet("u_xx"), ActionJet("z^t")
    half = sympy.Rational(1, 2)
    lagrangian = half * u_x * u_t + u_x**3 - half * u_xx**2 - sympy.Float(gamma_t) * z_t
    return LagrangianSpec(coordinates=DEFAULT_COORDINATES, fields=("u",), order=2, lagrangian=lagrangian)


def solve_damped_string(
    c2: float,
    gamma: float,
    u0: Expr,
    u1: Expr,
    grid: Grid2D,
    *,
    spec: Optional[LagrangianSpec] = None,
    values: Optional[Mapping[str, float]] = None,
    tolerance: Optional[float] = None,
) -> FieldSolution:
    """u_tt = c^2 u_xx - gamma u_t with u = 0 at both ends; u0, u1 are u and u_t at t0.

    Leapfrog in t with the damping term centered, first step from a Taylor expansion that uses the
    equation for u_tt and u_ttt.
    """
    settings = get_settings()
    if c2 < 0:
        raise DomainError(f"Wave speed squared must be non-negative, got {c2}")
    if grid.periodic(SPACE) or grid.periodic(TIME):
        raise GridError("The damped string needs fixed-value edges")
    dt, dx = grid.dt, grid.dx
    courant = math.sqrt(c2) * dt / dx
    if courant > settings.cfl_max:
        raise StabilityError(f"CFL number c*dt/dx = {courant:.4g} exceeds {settings.cfl_max}")

    t0 = grid.t_range[0]
    displacement = sample_expression(u0, grid, spec=spec, values=values, time=t0)
    velocity = sample_expression(u1, grid, spec=spec, values=values, time=t0)

    def laplacian(row: np.ndarray) -> np.ndarray:
        result = np.zeros_like(row)
        result[1:-1] = (row[2:] - 2 * row[1:-1] + row[:-2]) / dx**2
        return result

    u = np.zeros(grid.shape)
    u[0] = displacement
    acceleration = c2 * laplacian(displacement) - gamma * velocity
    jerk = c2 * laplacian(velocity) - gamma * acceleration
    u[1] = displacement + dt * velocity + dt**2 / 2 * acceleration + dt**3 / 6 * jerk
    u[:2, 0] = u[:2, -1] = 0.0
    damping = gamma * dt / 2
    for k in range(1, grid.nt - 1):
        u[k + 1] = (2 * u[k] - (1 - damping) * u[k - 1] + c2 * dt**2 * laplacian(u[k])) / (1 + damping)
        u[k + 1, 0] = u[k + 1, -1] = 0.0
        if not np.all(np.isfinite(u[k + 1])):
            raise NonFiniteStateError(f"String became non-finite at step {k + 1}", time=grid.t[k + 1], step=k + 1)
    logger.info("damped string: %d steps, dt = %g, dx = %g, CFL = %.3f", grid.nt - 1, dt, dx, courant)

    solution = FieldSolution(
        grid=grid, u=u, z_t=np.zeros(grid.shape), z_x=np.zeros(grid.shape), provenance=Provenance.SOLVED
    )
    return reconstruct_action_density(
        spec or string_lagrangian(c2, gamma), solution, values=values, tolerance=tolerance
    )


def kdv_max_dt(dx: float, vmax: float, safety: float = 0.4) -> float:
    """dt <= safety dx^3 / (6 max|v| dx^2 + 4): advection and the dispersive stencil together."""
    return safety * dx**3 / (6 * vmax * dx**2 + 4)


def kdv_mass(v: np.ndarray, dx: float) -> np.ndarray:
    """Periodic quadrature of v over x, per row."""
    return np.sum(v, axis=-1) * dx  # type: ignore[no-any-return]


def _wavenumbers(grid: Grid2D) -> np.ndarray:
    period = grid.x_range[1] - grid.x_range[0]
    return 2 * np.pi * np.fft.fftfreq(grid.nx, d=period / grid.nx)


def _antiderivative(v: np.ndarray, grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    """Mean-zero spatial antiderivative per row and its increment over one period."""
    period = grid.x_range[1] - grid.x_range[0]
    mean = np.mean(v, axis=1)
    k = _wavenumbers(grid)
    spectrum = np.fft.fft(v - mean[:, None], axis=1)
    divided = np.zeros_like(spectrum)
    divided[:, 1:] = spectrum[:, 1:] / (1j * k[1:])
    u = np.real(np.fft.ifft(divided, axis=1)) + mean[:, None] * (grid.x - grid.x_range[0])[None, :]
    u -= np.mean(u, axis=1)[:, None]
    return u, mean * period


def kdv_wave(solution: FieldSolution) -> np.ndarray:
    """v = u_x of a KdV solution, inverting the antiderivative spectrally."""
    grid = solution.grid
    if not grid.periodic(SPACE):
        raise GridError("KdV profiles live on a grid periodic in x")
    period = grid.x_range[1] - grid.x_range[0]
    increment = solution.u_increment if solution.u_increment is not None else np.zeros(grid.nt)
    mean = increment / period
    periodic_part = solution.u - mean[:, None] * (grid.x - grid.x_range[0])[None, :]
    derivative = np.real(np.fft.ifft(1j * _wavenumbers(grid) * np.fft.fft(periodic_part, axis=1), axis=1))
    return derivative + mean[:, None]  # type: ignore[no-any-return]


def _kdv_rhs(gamma_t: float, dx: float) -> Callable[[np.ndarray], np.ndarray]:
    def d1(w: np.ndarray) -> np.ndarray:
        return (  # type: ignore[no-any-return]
            np.roll(w, 2) / 12 - 2 / 3 * np.roll(w, 1) + 2 / 3 * np.roll(w, -1) - np.roll(w, -2) / 12
        ) / dx

    def d3(w: np.ndarray) -> np.ndarray:
        return (  # type: ignore[no-any-return]
            np.roll(w, 3) / 8
            - np.roll(w, 2)
            + 13 / 8 * np.roll(w, 1)
            - 13 / 8 * np.roll(w, -1)
            + np.roll(w, -2)
            - np.roll(w, -3) / 8
        ) / dx**3

    def rhs(v: np.ndarray) -> np.ndarray:
        return -gamma_t / 2 * v - 3 * d1(v * v) - d3(v)  # type: ignore[no-any-return]

    return rhs


def solve_damped_kdv(
    gamma_t: float,
    v0: Expr,
    grid: Grid2D,
    *,
    substeps: Optional[int] = None,
    spec: Optional[LagrangianSpec] = None,
    values: Optional[Mapping[str, float]] = None,

    tolerance: Optional[float] = None,
) -> FieldSolution:
    """v_t + (gamma_t/2) v + 6 v v_x + v_xxx = 0 for v = u_x, method of lines on a periodic grid.

    Every stored row is `substeps` classic RK4 steps apart; by default just enough to respect
    `kdv_max_dt`. u is the mean-zero antiderivative of v.
    """
    settings = get_settings()
    if not grid.periodic(SPACE):
        raise GridError("The damped KdV solver needs a grid periodic in x")
    dx = grid.dx
    v = sample_expression(v0, grid, spec=spec, values=values, time=grid.t_range[0])
    bound = kdv_max_dt(dx, float(np.max(np.abs(v))), settings.kdv_safety)
    needed = max(1, math.ceil(grid.dt / bound - 1e-12))
    if substeps is None:
        substeps = needed
    elif substeps < needed:
        raise StabilityError(
            f"{substeps} substeps give dt = {grid.dt / substeps:.3g} above the stable bound {bound:.3g}"
        )
    step = grid.dt / substeps
    rhs = _kdv_rhs(gamma_t, dx)

    rows = np.empty(grid.shape)
    rows[0] = v
    for k in range(grid.nt - 1):
        for _ in range(substeps):
            k1 = rhs(v)
            k2 = rhs(v + step / 2 * k1)
            k3 = rhs(v + step / 2 * k2)
            k4 = rhs(v + step * k3)
            v = v + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(v)):
            raise NonFiniteStateError(f"KdV wave became non-finite at row {k + 1}", time=grid.t[k + 1], step=k + 1)
        rows[k + 1] = v
    mass = kdv_mass(rows, dx)
    logger.info(
        "damped KdV: %d rows x %d substeps, dt = %.3g, mass %.6g -> %.6g",
        grid.nt - 1,
        substeps,
        step,
        mass[0],
        mass[-1],
    )

    u, increment = _antiderivative(rows, grid)
    solution = FieldSolution(
        grid=grid,
        u=u,
        z_t=np.zeros(grid.shape),
        z_x=np.zeros(grid.shape),
        provenance=Provenance.SOLVED,
        u_increment=increment,
    )
    return reconstruct_action_density(spec or kdv_lagrangian(gamma_t), solution, values=values, tolerance=tolerance)


def _numeric_residual(spec: LagrangianSpec, equations: EquationSet, values: Optional[Mapping[str, float]]) -> Expr:
    require_field_spec(spec)
    residual = equations.residuals[spec.fields[0]]
    return substitute(residual, constant_bindings(spec, values, residual))


def _coefficients(residual: Expr, allowed: Mapping[Expr, str], family: str) -> Dict[str, float]:
    found: Dict[str, float] = {}
    for term, coefficient in residual.as_coefficients_dict().items():
        if term not in allowed or not coefficient.is_number:
            raise DomainError(f"`{term}` does not belong to the {family} equation")
        found[allowed[term]] = float(coefficient)
    return found


def wave_coefficients(
    spec: LagrangianSpec, equations: EquationSet, values: Optional[Mapping[str, float]] = None
) -> Tuple[float, float]:
    """(c^2, gamma) of a derived equation a u_tt + b u_xx + g u_t = 0."""
    residual = _numeric_residual(spec, equations, values)
    u = spec.fields[0]
    time, space = spec.coordinates
    allowed = {
        spec.field(u, time * 2): "tt",
        spec.field(u, space * 2): "xx",
        spec.field(u, time): "t",
    }
    found = _coefficients(residual, allowed, "damped wave")
    leading = found.get("tt", 0.0)
    if leading == 0.0:
        raise DomainError("The equation has no second time derivative")
    c2 = -found.get("xx", 0.0) / leading
    if c2 < 0:
        raise DomainError(f"The equation is elliptic (c^2 = {c2:g})")
    return c2, found.get("t", 0.0) / leading


def kdv_coefficients(
    spec: LagrangianSpec, equations: EquationSet, values: Optional[Mapping[str, float]] = None
) -> float:
    """gamma_t of a derived equation u_tx + (gamma_t/2) u_x + 6 u_x u_xx + u_xxxx = 0 (up to scale)."""
    residual = _numeric_residual(spec, equations, values)
    u = spec.fields[0]
    time, space = spec.coordinates
    u_x, u_xx = spec.field(u, space), spec.field(u, space * 2)
    allowed = {
        spec.field(u, time + space): "tx",
        u_x: "x",
        u_x * u_xx: "advection",
        spec.field(u, space * 4): "dispersion",
    }
    found = _coefficients(residual, allowed, "damped KdV")
    leading = found.get("tx", 0.0)
    if leading == 0.0:
        raise DomainError("The equation has no mixed derivative u_tx")
    if not math.isclose(found.get("advection", 0.0) / leading, 6.0) or not math.isclose(
        found.get("dispersion", 0.0) / leading, 1.0
    ):
        raise DomainError("Only the normalised KdV nonlinearity 6 u_x u_xx and dispersion u_xxxx are solved")
    return 2 * found.get("x", 0.0) / leading
