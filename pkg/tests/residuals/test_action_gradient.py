from importlib import resources

import numpy as np
import pytest
import sympy
from scipy.integrate import trapezoid

from herglotz.calculus import derive_equations
from herglotz.errors import ConstraintViolationError, GridError
from herglotz.expr import Coordinate
from herglotz.fields import analytic_section, reconstruct_action_density, solve_damped_string
from herglotz.grid import FieldSolution, Grid2D
from herglotz.jet import LagrangianSpec
from herglotz.parser import parse_problem
from herglotz.residuals import discrete_action, discrete_action_gradient_check

T, X = Coordinate("t"), Coordinate("x")
MODE = sympy.sin(sympy.pi * X)
STATIONARY_U_GRADIENT = 2e-3


def bundled(name: str) -> LagrangianSpec:
    text = (resources.files("herglotz") / "problems" / f"{name}.hgz").read_text(encoding="utf-8")
    return parse_problem(text).spec


@pytest.fixture(name="string", scope="module")
def fixture_string() -> tuple:
    spec = bundled("damped_string")
    grid = Grid2D.uniform((0.0, 0.5), (0.0, 1.0), 33, 33)
    return spec, solve_damped_string(1.0, 0.2, MODE, -MODE / 10, grid, spec=spec)


def test_solved_string_is_nearly_stationary(string: tuple) -> None:
    # Arrange
    spec, solution = string
    t, x = solution.grid.mesh()
    bump = 0.2 * np.sin(np.pi * x) * np.sin(np.pi * t / 0.5)
    moved = FieldSolution(
        grid=solution.grid, u=solution.u + bump, z_t=solution.z_t, z_x=solution.z_x, provenance=solution.provenance
    )
    moved = reconstruct_action_density(spec, moved)

    # Act
    at_solution = discrete_action_gradient_check(spec, solution)
    away = discrete_action_gradient_check(spec, moved)

    # Assert
    assert at_solution.u_gradient < 0.1 * away.u_gradient
    assert at_solution.z_gradient < 1e-6
    assert at_solution.modes == [(1, 1), (1, 2), (2, 1), (1, 3)]


def test_open_action_dependence_leaves_a_z_gradient() -> None:
    # Arrange
    spec = bundled("counterexample")
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 33, 33)
    section = analytic_section(spec, T, T / 2, sympy.Integer(0), grid)

    # Act
    report = discrete_action_gradient_check(spec, section, n_modes=1)

    # Assert
    # int t psi_t dt dx for psi = sin(pi t) sin(pi x)
    assert report.z_gradient == pytest.approx(4 / np.pi**2, rel=0.01)
    assert report.z_gradient >= 10 * report.u_gradient


def test_string_gradient_vanishes_under_refinement() -> None:
    # Arrange
    spec = bundled("damped_string")
    solutions = [
        solve_damped_string(1.0, 0.2, MODE, -MODE / 10, Grid2D.uniform((0.0, 0.5), (0.0, 1.0), n, n), spec=spec)
        for n in (17, 33, 64)
    ]

    # Act
    reports = [discrete_action_gradient_check(spec, solution) for solution in solutions]

    # Assert
    gradients = [report.u_gradient for report in reports]
    assert gradients[0] > 4 * gradients[1] > 16 * gradients[2]
    assert gradients[2] < STATIONARY_U_GRADIENT
    assert all(report.z_gradient < 1e-6 for report in reports)


def test_action_is_the_final_action_density(string: tuple) -> None:
    # Arrange
    spec, solution = string

    # Act
    action = discrete_action(spec, solution)

    # Assert
    final = trapezoid(solution.z_t[-1] - solution.z_t[0], dx=solution.grid.dx)
    assert action == pytest.approx(final, abs=1e-10)


def test_sections_off_the_constraint_are_refused(string: tuple) -> None:
    # Arrange
    spec, solution = string

    # Act / Assert
    with pytest.raises(ConstraintViolationError, match="z\\^mu_mu = L"):
        discrete_action_gradient_check(spec, solution.with_action(np.zeros(solution.grid.shape)))


def test_large_grids_are_refused() -> None:
    # Arrange
    spec = bundled("counterexample")
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 65, 8)
    section = analytic_section(spec, T, T / 2, sympy.Integer(0), grid)

    # Act / Assert
    with pytest.raises(GridError, match="limited to 64"):
        discrete_action_gradient_check(spec, section)


@pytest.mark.parametrize("n_modes,h", [(0, 1e-4), (2, -1.0)])
def test_gradient_check_arguments(string: tuple, n_modes: int, h: float) -> None:
    # Arrange
    spec, solution = string

    # Act / Assert
    with pytest.raises(ValueError, match="n_modes >= 1"):
        discrete_action_gradient_check(spec, solution, n_modes=n_modes, h=h)


def test_closedness_is_what_separates_the_examples() -> None:
    # Act
    string = derive_equations(bundled("damped_string"))
    counter = derive_equations(bundled("counterexample"))

    # Assert
    assert string.is_closed
    assert not counter.is_closed
