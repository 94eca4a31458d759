import math

import numpy as np
import pytest
import sympy

from herglotz.errors import DomainError, GridError, StabilityError
from herglotz.expr import Coordinate
from herglotz.fields import solve_damped_string, string_energy
from herglotz.grid import Grid2D

X = Coordinate("x")
GAMMA = 0.2
MODE = sympy.sin(sympy.pi * X)


def damped_mode(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    omega = math.sqrt(math.pi**2 - GAMMA**2 / 4)
    return np.exp(-GAMMA * t / 2) * np.cos(omega * t) * np.sin(np.pi * x)


def mode_error(nt: int, nx: int) -> float:
    grid = Grid2D.uniform((0.0, 2.0), (0.0, 1.0), nt, nx)
    solution = solve_damped_string(1.0, GAMMA, MODE, -GAMMA / 2 * MODE, grid)
    t, x = grid.mesh()
    return float(np.max(np.abs(solution.u - damped_mode(t, x))))


def test_fundamental_mode_decays_at_half_the_damping_rate() -> None:
    # Act
    error = mode_error(801, 200)

    # Assert
    assert error < 1e-3


def test_second_order_convergence() -> None:
    # Act
    coarse = mode_error(161, 41)
    fine = mode_error(321, 81)

    # Assert
    assert coarse / fine > 3


def test_fixed_ends_stay_at_rest() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 101, 21)

    # Act
    solution = solve_damped_string(1.0, GAMMA, MODE + X * (1 - X), sympy.Integer(0), grid)

    # Assert
    assert np.all(solution.u[:, [0, -1]] == 0.0)


def test_energy_drains_at_the_dissipation_rate() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 2.0), (0.0, 1.0), 801, 200)
    solution = solve_damped_string(1.0, GAMMA, MODE, -GAMMA / 2 * MODE, grid)

    # Act
    energy = string_energy(solution, 1.0, GAMMA)

    # Assert
    assert energy.energy[-1] < energy.energy[0]
    mismatch = np.max(np.abs(energy.rate() - energy.dissipation))
    assert mismatch < 0.02 * np.max(np.abs(energy.dissipation))


def test_undamped_energy_is_conserved() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 2.0), (0.0, 1.0), 801, 200)

    # Act
    energy = string_energy(solve_damped_string(1.0, 0.0, MODE, sympy.Integer(0), grid), 1.0)

    # Assert
    np.testing.assert_allclose(energy.energy, energy.energy[0], rtol=1e-3)
    assert np.all(energy.dissipation == 0.0)


def test_energy_columns() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 11, 5)
    solution = solve_damped_string(1.0, GAMMA, MODE, sympy.Integer(0), grid)

    # Act
    header, table = string_energy(solution, 1.0, GAMMA).columns()

    # Assert
    assert header == ["t", "energy", "dissipation"]
    assert table.shape == (11, 3)


def test_action_density_is_reconstructed() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 201, 41)

    # Act
    solution = solve_damped_string(1.0, GAMMA, MODE, sympy.Integer(0), grid)

    # Assert
    assert np.all(solution.z_t[0] == 0.0)
    assert np.all(solution.z_x == 0.0)
    assert np.max(np.abs(solution.z_t[-1])) > 0.1


def test_courant_limit() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 11, 41)

    # Act / Assert
    with pytest.raises(StabilityError, match="CFL number"):
        solve_damped_string(1.0, GAMMA, MODE, sympy.Integer(0), grid)


def test_periodic_grids_are_rejected() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 101, 20, periodic_x=True)

    # Act / Assert
    with pytest.raises(GridError, match="fixed-value edges"):
        solve_damped_string(1.0, GAMMA, MODE, sympy.Integer(0), grid)


def test_negative_wave_speed_is_rejected() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 101, 20)

    # Act / Assert
    with pytest.raises(DomainError, match="non-negative"):
        solve_damped_string(-1.0, GAMMA, MODE, sympy.Integer(0), grid)
