import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from herglotz.errors import StencilOverflowError
from herglotz.grid import SPACE, TIME, Grid2D, differentiate, gradient_everywhere, stencil

coefficients = st.lists(st.floats(min_value=-3, max_value=3, allow_nan=False), min_size=6, max_size=6)


@settings(max_examples=100, deadline=None)
@given(coefficients)
def test_central_stencils_are_exact_on_quadratics(c: list) -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (-1.0, 2.0), 9, 13)
    t, x = grid.mesh()
    u = c[0] + c[1] * t + c[2] * x + c[3] * t**2 + c[4] * t * x + c[5] * x**2

    # Act
    u_t = differentiate(u, TIME, 1, grid.dt, periodic=False)
    u_xx = differentiate(u, SPACE, 2, grid.dx, periodic=False)

    # Assert
    np.testing.assert_allclose(u_t[1:-1], (c[1] + 2 * c[3] * t + c[4] * x)[1:-1], atol=1e-9)
    np.testing.assert_allclose(u_xx[:, 1:-1], 2 * c[5], atol=1e-8)
    assert np.all(np.isnan(u_t[[0, -1]]))
    assert np.all(np.isnan(u_xx[:, [0, -1]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.sampled_from([2, 4]))
def test_stencil_weights_annihilate_constants(order: int, accuracy: int) -> None:
    # Act
    weights = stencil(order, accuracy)

    # Assert
    assert sum(weights) == pytest.approx(0.0, abs=1e-12)
    assert len(weights) % 2 == 1


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_periodic_fourth_order_convergence(order: int) -> None:
    # Arrange
    errors = []

    # Act
    for nx in (32, 64):
        grid = Grid2D.uniform((0.0, 1.0), (0.0, 2 * np.pi), 4, nx, periodic_x=True)
        _, x = grid.mesh()
        derivative = differentiate(np.sin(x), SPACE, order, grid.dx, periodic=True, accuracy=4)
        errors.append(np.max(np.abs(derivative - np.sin(x + order * np.pi / 2))))

    # Assert
    assert np.log2(errors[0] / errors[1]) == pytest.approx(4.0, abs=0.3)


def test_periodic_increment_is_added_across_the_wrap() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 4, 16, periodic_x=True)
    t, x = grid.mesh()
    slope = 1.0 + t[:, 0]
    u = slope[:, None] * x

    # Act
    u_x = differentiate(u, SPACE, 1, grid.dx, periodic=True, accuracy=4, increment=slope)
    u_xx = differentiate(u, SPACE, 2, grid.dx, periodic=True, accuracy=4, increment=slope)

    # Assert
    np.testing.assert_allclose(u_x, slope[:, None] * np.ones_like(x), atol=1e-12)
    np.testing.assert_allclose(u_xx, 0.0, atol=1e-9)


def test_short_axes_cannot_hold_the_stencil() -> None:
    # Act / Assert
    with pytest.raises(StencilOverflowError, match="width-5 stencil"):
        differentiate(np.zeros((4, 4)), TIME, 4, 0.1, periodic=False)


def test_unknown_stencils_raise() -> None:
    # Act / Assert
    with pytest.raises(StencilOverflowError, match="derivative order 5"):
        stencil(5, 2)


def test_gradient_everywhere_is_finite_at_the_edges() -> None:
    # Arrange
    grid = Grid2D.uniform((0.0, 1.0), (0.0, 1.0), 6, 6)
    t, _ = grid.mesh()

    # Act
    derivative = gradient_everywhere(t**2, TIME, 1, grid.dt)

    # Assert
    np.testing.assert_allclose(derivative, 2 * t, atol=1e-12)
