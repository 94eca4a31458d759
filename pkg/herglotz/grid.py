import logging
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, root_validator, validator

from herglotz.config import ExprConfig
from herglotz.errors import GridError, StencilOverflowError

logger = logging.getLogger(__name__)

Axis = int
TIME: Axis = 0
SPACE: Axis = 1


class BoundaryKind(str, Enum):
    PERIODIC = "periodic"
    FIXED = "fixed"


class Provenance(str, Enum):
    SOLVED = "solved"
    ANALYTIC_SECTION = "analytic-section"


Edges = Tuple[BoundaryKind, BoundaryKind]
_FIXED: Edges = (BoundaryKind.FIXED, BoundaryKind.FIXED)
_PERIODIC: Edges = (BoundaryKind.PERIODIC, BoundaryKind.PERIODIC)


class Grid2D(BaseModel):
    """Uniform (t, x) grid. Fixed axes include both endpoints, periodic axes exclude the upper one."""

    t_range: Tuple[float, float]
    x_range: Tuple[float, float]
    nt: int
    nx: int
    t_edges: Edges = _FIXED
    x_edges: Edges = _FIXED

    Config = ExprConfig

    @classmethod
    def uniform(
        cls, t_range: Sequence[float], x_range: Sequence[float], nt: int, nx: int, *, periodic_x: bool = False
    ) -> "Grid2D":
        return cls(
            t_range=tuple(t_range), x_range=tuple(x_range), nt=nt, nx=nx, x_edges=_PERIODIC if periodic_x else _FIXED
        )

    @validator("nt", "nx")
    def _enough_points(cls, value: int) -> int:  # pylint: disable=no-self-argument
        if value < 4:
            raise ValueError(f"Grids need at least 4 points per axis, got {value}")
        return value

    @validator("t_range", "x_range")
    def _increasing(cls, value: Tuple[float, float]) -> Tuple[float, float]:  # pylint: disable=no-self-argument
        if not value[1] > value[0]:
            raise ValueError(f"Range must be increasing, got {value}")
        return value

    @validator("t_edges", "x_edges")
    def _matched_pairs(cls, value: Edges) -> Edges:  # pylint: disable=no-self-argument
        if (value[0] is BoundaryKind.PERIODIC) != (value[1] is BoundaryKind.PERIODIC):
            raise ValueError(f"Periodic edges must come in matched pairs, got {value[0].value}/{value[1].value}")
        return value

    def periodic(self, axis: Axis) -> bool:
        edges = self.t_edges if axis == TIME else self.x_edges
        return edges[0] is BoundaryKind.PERIODIC

    def points(self, axis: Axis) -> int:
        return self.nt if axis == TIME else self.nx

    def spacing(self, axis: Axis) -> float:
        start, stop = self.t_range if axis == TIME else self.x_range
        intervals = self.points(axis) if self.periodic(axis) else self.points(axis) - 1
        return (stop - start) / intervals

    @property
    def dt(self) -> float:
        return self.spacing(TIME)

    @property
    def dx(self) -> float:
        return self.spacing(SPACE)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.nt, self.nx

    @property
    def t(self) -> np.ndarray:
        return self.t_range[0] + self.dt * np.arange(self.nt)

    @property
    def x(self) -> np.ndarray:
        return self.x_range[0] + self.dx * np.arange(self.nx)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.t, self.x, indexing="ij")

    def refined(self, factor: int = 2) -> "Grid2D":
        """Same domain with every spacing divided by `factor`."""

        def count(axis: Axis) -> int:
            points = self.points(axis)
            return points * factor if self.periodic(axis) else (points - 1) * factor + 1

        return self.copy(update=dict(nt=count(TIME), nx=count(SPACE)))

    def coarsened(self) -> "Grid2D":
        """Every other point of each axis, starting at the first one."""

        def count(axis: Axis) -> int:
            points = self.points(axis)
            if self.periodic(axis) and points % 2:
                raise GridError(f"Cannot coarsen a periodic axis of {points} points")
            return points // 2 if self.periodic(axis) else (points + 1) // 2

        def extent(axis: Axis) -> Tuple[float, float]:
            start, stop = self.t_range if axis == TIME else self.x_range
            return (start, stop) if self.periodic(axis) else (start, start + 2 * self.spacing(axis) * (count(axis) - 1))

        nt, nx = count(TIME), count(SPACE)
        if min(nt, nx) < 4:
            raise GridError(f"A {self.nt}x{self.nx} grid is too small to coarsen")
        return self.copy(update=dict(t_range=extent(TIME), x_range=extent(SPACE), nt=nt, nx=nx))


class FieldSolution(BaseModel):
    """A sampled section (u, z^t, z^x) on a grid.

    `u_increment` is u(t, x + period) - u(t, x) per time row when u is periodic in x only up to a
    constant (a spatial antiderivative with nonzero mass); periodic stencils add it across the wrap.
    """

    grid: Grid2D
    u: np.ndarray
    z_t: np.ndarray
    z_x: np.ndarray
    provenance: Provenance
    u_increment: Optional[np.ndarray] = None

    Config = ExprConfig

    @root_validator(skip_on_failure=True)
    def _shapes_and_values(cls, values: Dict[str, Any]) -> Dict[str, Any]:  # pylint: disable=no-self-argument
        shape = values["grid"].shape
        for name in ("u", "z_t", "z_x"):
            array = values[name]
            if array.shape != shape:
                raise ValueError(f"`{name}` has shape {array.shape}, grid is {shape}")
            if not np.all(np.isfinite(array)):
                raise ValueError(f"`{name}` has non-finite values")
        increment = values.get("u_increment")
        if increment is not None and increment.shape != (shape[0],):
            raise ValueError(f"`u_increment` needs one value per time row, got shape {increment.shape}")
        return values

    def array(self, name: str) -> np.ndarray:
        return {"u": self.u, "z^t": self.z_t, "z^x": self.z_x}[name]  # type: ignore[no-any-return]

    def with_action(self, z_t: np.ndarray, z_x: Optional[np.ndarray] = None) -> "FieldSolution":
        return FieldSolution(
            grid=self.grid,
            u=self.u,
            z_t=z_t,
            z_x=np.zeros_like(z_t) if z_x is None else z_x,
            provenance=self.provenance,
            u_increment=self.u_increment,
        )

    def coarsened(self) -> "FieldSolution":
        """The same data on `grid.coarsened()`."""
        return FieldSolution(
            grid=self.grid.coarsened(),
            u=self.u[::2, ::2],
            z_t=self.z_t[::2, ::2],
            z_x=self.z_x[::2, ::2],
            provenance=self.provenance,
            u_increment=None if self.u_increment is None else self.u_increment[::2],
        )


# centered finite-difference weights by accuracy and derivative order
_TABLES: Dict[int, Dict[int, Tuple[float, ...]]] = {
    2: {
        1: (-1 / 2, 0.0, 1 / 2),
        2: (1.0, -2.0, 1.0),
        3: (-1 / 2, 1.0, 0.0, -1.0, 1 / 2),
        4: (1.0, -4.0, 6.0, -4.0, 1.0),
    },
    4: {
        1: (1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12),
        2: (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12),
        3: (1 / 8, -1.0, 13 / 8, 0.0, -13 / 8, 1.0, -1 / 8),
        4: (-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6),
    },
}


def stencil(order: int, accuracy: int) -> Tuple[float, ...]:
    try:
        return _TABLES[accuracy][order]
    except KeyError as ex:
        raise StencilOverflowError(f"No accuracy-{accuracy} central stencil for derivative order {order}") from ex


def half_width(order: int, accuracy: int) -> int:
    return 0 if order == 0 else len(stencil(order, accuracy)) // 2


def accuracy_for(grid: Grid2D, axis: Axis) -> int:
    return 4 if grid.periodic(axis) else 2


def _shift(array: np.ndarray, offset: int, axis: Axis, increment: Optional[np.ndarray]) -> np.ndarray:
    """array[j + offset] along `axis` with periodic wrap, adding `increment` per period crossed."""
    shifted = np.roll(array, -offset, axis=axis)
    if increment is None or offset == 0:
        return shifted
    size = array.shape[axis]
    index = np.arange(size) + offset
    crossed = np.floor_divide(index, size).astype(float)
    if axis == SPACE:
        return shifted + increment[:, None] * crossed[None, :]  # type: ignore[no-any-return]
    return shifted + increment[None, :] * crossed[:, None]  # type: ignore[no-any-return]


def differentiate(
    array: np.ndarray,
    axis: Axis,
    order: int,
    spacing: float,
    *,
    periodic: bool,
    accuracy: int = 2,
    increment: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Central difference along `axis`; on a non-periodic axis the first/last half-width entries are NaN."""
    if order == 0:
        return array.copy()
    weights = stencil(order, accuracy)
    width = len(weights) // 2
    if array.shape[axis] <= 2 * width:
        raise StencilOverflowError(
            f"{array.shape[axis]} points along axis {axis} cannot hold a width-{2 * width + 1} stencil"
        )
    result = np.zeros_like(array, dtype=float)
    for offset, weight in zip(range(-width, width + 1), weights):
        if weight:
            result += weight * _shift(array, offset, axis, increment if periodic else None)
    result /= spacing**order
    if not periodic:
        edge = [slice(None), slice(None)]
        edge[axis] = slice(0, width)
        result[tuple(edge)] = np.nan
        edge[axis] = slice(array.shape[axis] - width, None)
        result[tuple(edge)] = np.nan
    return result


def gradient_everywhere(array: np.ndarray, axis: Axis, order: int, spacing: float) -> np.ndarray:
    """Repeated second-order `np.gradient` with one-sided edges: finite at every grid point."""
    result = array
    for _ in range(order):
        result = np.gradient(result, spacing, axis=axis, edge_order=2)
    return result if order else array.copy()
