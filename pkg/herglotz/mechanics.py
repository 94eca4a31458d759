"""Herglotz mechanics: the action variable integrated alongside the motion.

The state is (q, q', z) with z' = L. Accelerations come from the acceleration form W q'' = R of
`derive_mechanics_equations`, compiled once and solved numerically at every stage.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, root_validator
from scipy.integrate import cumulative_trapezoid

from herglotz.calculus import derive_mechanics_equations
from herglotz.config import ExprConfig, get_settings
from herglotz.errors import NonFiniteStateError, SingularHessianError
from herglotz.expr import Expr, NumericFunction, compile_numeric, partial_deriv, substitute
from herglotz.jet import LagrangianSpec

logger = logging.getLogger(__name__)

Initial = Union[float, Sequence[float]]


class Trajectory(BaseModel):
    spec: LagrangianSpec
    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    z: np.ndarray
    z0: float
    dt: float
    constants: Dict[str, float] = {}

    Config = ExprConfig

    @root_validator(skip_on_failure=True)
    def _arrays_agree(cls, values: Dict[str, Any]) -> Dict[str, Any]:  # pylint: disable=no-self-argument
        times, q, v, z = values["times"], values["q"], values["v"], values["z"]
        if values["dt"] <= 0:
            raise ValueError(f"Time step must be positive, got {values['dt']}")
        if q.shape != v.shape or q.shape[0] != times.shape[0] or z.shape != times.shape:
            raise ValueError(
                f"Trajectory arrays disagree: t {times.shape}, q {q.shape}, q' {v.shape}, z {z.shape}"
            )
        if q.shape[1] != len(values["spec"].fields):
            raise ValueError(f"Expected {len(values['spec'].fields)} coordinates, got {q.shape[1]}")
        if z[0] != values["z0"]:
            raise ValueError(f"z(t0) = {z[0]} differs from the prescribed z0 = {values['z0']}")
        return values

    @property
    def steps(self) -> int:
        return int(self.times.shape[0] - 1)

    def columns(self, multiplier: Optional[np.ndarray] = None) -> Tuple[List[str], np.ndarray]:
        """Header and table in the fixed column order t, q, q', z[, lambda]."""
        time = self.spec.coordinates[0]
        header = ["t", *self.spec.fields, *(f"{field}_{time}" for field in self.spec.fields), "z"]
        table = [self.times[:, None], self.q, self.v, self.z[:, None]]
        if multiplier is not None:
            header.append("lambda")
            table.append(multiplier[:, None])
        return header, np.hstack(table)

    def perturbed(self, amplitude: float, mode: int = 1) -> "Trajectory":
        """The path q + amplitude*sin(mode*pi*(t - t0)/T) in every coordinate, z re-integrated along it."""
        bump, slope = _sine_mode(self.times, mode)
        q = self.q + amplitude * bump[:, None]
        v = self.v + amplitude * slope[:, None]
        z = integrate_path(self.spec, self.times, q, v, self.z0, values=self.constants)
        return self.copy(update=dict(q=q, v=v, z=z))


class _CompiledMechanics:
    """Numeric callables of one spec, taking (t, q..., q'..., z)."""

    def __init__(self, spec: LagrangianSpec, values: Optional[Mapping[str, float]] = None) -> None:
        if not spec.is_mechanics:
            raise ValueError(f"Mechanics needs a single coordinate, got {', '.join(spec.coordinates)}")
        self.spec = spec
        self.constants = {constant.name: value for constant, value in spec.constant_values(values).items()}
        bindings = {spec.constant(name): value for name, value in self.constants.items()}
        time = spec.coordinates[0]
        self.positions = [spec.field(field) for field in spec.fields]
        self.velocities = [spec.field(field, time) for field in spec.fields]
        self.action = spec.action(0)
        self.atoms = [spec.coordinate(0), *self.positions, *self.velocities, self.action]

        lagrangian = substitute(spec.lagrangian, bindings)
        self._bindings = bindings
        self.lagrangian = self._compile(lagrangian)
        self.dissipation = self._compile(partial_deriv(lagrangian, self.action))
        self.momenta = [self._compile(partial_deriv(lagrangian, velocity)) for velocity in self.velocities]
        self.forces = [self._compile(partial_deriv(lagrangian, position)) for position in self.positions]
        self._equations: Optional[Tuple[List[List[NumericFunction]], List[NumericFunction]]] = None

    def _compile(self, expr: Expr) -> NumericFunction:
        return compile_numeric(substitute(expr, self._bindings), self.atoms)

    def acceleration_form(self) -> Tuple[List[List[NumericFunction]], List[NumericFunction]]:
        if self._equations is None:
            equations = derive_mechanics_equations(self.spec)
            on_shell = {self.spec.action(0, self.spec.coordinates[0]): self.spec.lagrangian}
            hessian = [[self._compile(substitute(entry, on_shell)) for entry in row] for row in equations.hessian]
            forcing = [self._compile(entry) for entry in equations.forcing]
            logger.debug("acceleration form: W = %s, R = %s", equations.hessian, equations.forcing)
            self._equations = hessian, forcing
        return self._equations

    def arguments(self, t: float, q: np.ndarray, v: np.ndarray, z: float) -> List[Any]:
        return [t, *q, *v, z]


def _to_vector(value: Initial, size: int, name: str) -> np.ndarray:
    vector = np.atleast_1d(np.asarray(value, dtype=float))
    if vector.shape != (size,):
        raise ValueError(f"Expected {size} initial values for {name}, got {vector.shape[0]}")
    return vector


def _time_grid(t_span: Tuple[float, float], dt: float) -> Tuple[np.ndarray, float]:
    t0, t1 = t_span
    if dt <= 0:
        raise ValueError(f"Time step must be positive, got {dt}")
    if t1 <= t0:
        raise ValueError(f"Time span must be increasing, got {t_span}")
    steps = max(1, int(round((t1 - t0) / dt)))
    uniform = (t1 - t0) / steps
    if not np.isclose(uniform, dt, rtol=1e-9, atol=0.0):
        logger.info("time step adjusted from %g to %g to fit %d uniform steps", dt, uniform, steps)
    return t0 + uniform * np.arange(steps + 1), uniform


def integrate(
    spec: LagrangianSpec,
    q0: Initial,
    v0: Initial,
    z0: float = 0.0,
    t_span: Tuple[float, float] = (0.0, 1.0),
    dt: float = 1e-3,
    *,
    values: Optional[Mapping[str, float]] = None,
) -> Trajectory:
    """Classic fourth-order Runge-Kutta on (q, q', z) with q'' = W^-1 R and z' = L."""
    system = _CompiledMechanics(spec, values)
    hessian, forcing = system.acceleration_form()
    size = len(spec.fields)
    settings = get_settings()

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        q, v, z = state[:size], state[size : 2 * size], state[-1]
        arguments = system.arguments(t, q, v, z)
        w = np.array([[float(entry(*arguments)) for entry in row] for row in hessian])
        r = np.array([float(entry(*arguments)) for entry in forcing])
        condition = np.linalg.cond(w)
        if not np.isfinite(condition) or condition > settings.singular_cond:
            logger.warning(
                "velocity Hessian rejected at t = %g: condition number %.3g above %.3g",
                t,
                condition,
                settings.singular_cond,
            )
            raise SingularHessianError(t, float(condition))
        acceleration = np.linalg.solve(w, r)
        return np.concatenate([v, acceleration, [float(system.lagrangian(*arguments))]])

    times, step = _time_grid(t_span, dt)
    states = np.empty((times.shape[0], 2 * size + 1))
    states[0] = np.concatenate([_to_vector(q0, size, "q"), _to_vector(v0, size, "q'"), [float(z0)]])
    for k in range(times.shape[0] - 1):
        t, state = times[k], states[k]
        k1 = rhs(t, state)
        k2 = rhs(t + step / 2, state + step / 2 * k1)
        k3 = rhs(t + step / 2, state + step / 2 * k2)
        k4 = rhs(t + step, state + step * k3)
        states[k + 1] = state + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(states[k + 1])):
            raise NonFiniteStateError(
                f"State became non-finite at t = {times[k + 1]:g} (step {k + 1})", time=times[k + 1], step=k + 1
            )
    logger.info("integrated %d steps of dt = %g over [%g, %g]", times.shape[0] - 1, step, times[0], times[-1])
    return Trajectory(
        spec=spec,
        times=times,
        q=states[:, :size],
        v=states[:, size : 2 * size],
        z=states[:, -1],
        z0=float(z0),
        dt=step,
        constants=system.constants,
    )


def contact_action(trajectory: Trajectory) -> float:
    return float(trajectory.z[-1] - trajectory.z[0])


def _integrate_action(
    system: _CompiledMechanics, times: np.ndarray, q: np.ndarray, v: np.ndarray, z0: float
) -> np.ndarray:
    z = np.empty(times.shape[0])
    z[0] = z0
    lagrangian = system.lagrangian
    for k in range(times.shape[0] - 1):
        step = times[k + 1] - times[k]
        middle = times[k] + step / 2
        # cubic Hermite interpolation of the path at the midpoint
        q_mid = (q[k] + q[k + 1]) / 2 + step * (v[k] - v[k + 1]) / 8
        v_mid = 1.5 * (q[k + 1] - q[k]) / step - (v[k] + v[k + 1]) / 4
        k1 = float(lagrangian(*system.arguments(times[k], q[k], v[k], z[k])))
        k2 = float(lagrangian(*system.arguments(middle, q_mid, v_mid, z[k] + step / 2 * k1)))
        k3 = float(lagrangian(*system.arguments(middle, q_mid, v_mid, z[k] + step / 2 * k2)))
        k4 = float(lagrangian(*system.arguments(times[k + 1], q[k + 1], v[k + 1], z[k] + step * k3)))
        z[k + 1] = z[k] + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(z)):
        index = int(np.argmin(np.isfinite(z)))
        raise NonFiniteStateError(f"Action became non-finite at t = {times[index]:g}", time=times[index], step=index)
    return z


def integrate_path(
    spec: LagrangianSpec,
    times: np.ndarray,
    q: np.ndarray,
    v: np.ndarray,
    z0: float = 0.0,
    *,
    values: Optional[Mapping[str, float]] = None,
) -> np.ndarray:
    """Solve z' = L(t, q(t), q'(t), z) along a prescribed path sampled at `times`."""
    q = np.asarray(q, dtype=float).reshape(times.shape[0], -1)
    v = np.asarray(v, dtype=float).reshape(times.shape[0], -1)
    return _integrate_action(_CompiledMechanics(spec, values), np.asarray(times, dtype=float), q, v, float(z0))


def _sine_mode(times: np.ndarray, mode: int) -> Tuple[np.ndarray, np.ndarray]:
    duration = times[-1] - times[0]
    phase = mode * np.pi * (times - times[0]) / duration
    return np.sin(phase), mode * np.pi / duration * np.cos(phase)


def action_gradient_check(spec: LagrangianSpec, trajectory: Trajectory, n_modes: int = 5, h: float = 1e-4) -> float:
    """max |A(q + h b) - A(q - h b)| / 2h over endpoint-vanishing sine bumps b, one coordinate at a time."""
    if n_modes < 1:
        raise ValueError(f"n_modes must be at least 1, got {n_modes}")
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    system = _CompiledMechanics(spec, trajectory.constants)
    times = trajectory.times
    variations = [(coordinate, mode) for coordinate in range(len(spec.fields)) for mode in range(1, n_modes + 1)]

    def derivative(variation: Tuple[int, int]) -> float:
        coordinate, mode = variation
        bump, slope = _sine_mode(times, mode)
        actions = []
        for sign in (1.0, -1.0):
            q = trajectory.q.copy()
            v = trajectory.v.copy()
            q[:, coordinate] += sign * h * bump
            v[:, coordinate] += sign * h * slope
            z = _integrate_action(system, times, q, v, trajectory.z0)
            actions.append(z[-1] - z[0])
        return abs(actions[0] - actions[1]) / (2 * h)

    with ThreadPoolExecutor(max_workers=get_settings().threads) as executor:
        gradients = list(executor.map(derivative, variations))
    logger.debug("action gradients per (coordinate, mode): %s", dict(zip(variations, gradients)))
    return max(gradients)


def _dissipation_along(system: _CompiledMechanics, trajectory: Trajectory) -> np.ndarray:
    return system.dissipation(trajectory.times, *trajectory.q.T, *trajectory.v.T, trajectory.z)


def multiplier_profile(spec: LagrangianSpec, trajectory: Trajectory) -> np.ndarray:
    """lambda' = -lambda dL/dz integrated backward from lambda(t_N) = 1, i.e. lambda(t) = exp(int_t^T dL/dz)."""
    system = _CompiledMechanics(spec, trajectory.constants)
    rate = _dissipation_along(system, trajectory)
    remaining = cumulative_trapezoid(rate[::-1], -trajectory.times[::-1], initial=0.0)[::-1]
    multiplier = np.exp(remaining)
    if not np.all(np.isfinite(multiplier)):
        index = int(np.argmin(np.isfinite(multiplier)))
        raise NonFiniteStateError(
            f"Multiplier became non-finite at t = {trajectory.times[index]:g}", time=trajectory.times[index], step=index
        )
    return multiplier


def multiplier_residual(spec: LagrangianSpec, trajectory: Trajectory, multiplier: np.ndarray) -> np.ndarray:
    """d/dt(lambda dL/dq') - lambda dL/dq per coordinate, shape (N + 1, n)."""
    system = _CompiledMechanics(spec, trajectory.constants)
    arguments = (trajectory.times, *trajectory.q.T, *trajectory.v.T, trajectory.z)
    columns = []
    for momentum, force in zip(system.momenta, system.forces):
        weighted = multiplier * momentum(*arguments)
        columns.append(np.gradient(weighted, trajectory.times, edge_order=2) - multiplier * force(*arguments))
    return np.stack(columns, axis=1)


def mechanical_energy(trajectory: Trajectory) -> np.ndarray:
    """p q' - L along the trajectory; conserved when L is autonomous and z-independent."""
    system = _CompiledMechanics(trajectory.spec, trajectory.constants)
    arguments = (trajectory.times, *trajectory.q.T, *trajectory.v.T, trajectory.z)
    momentum = sum(p(*arguments) * velocity for p, velocity in zip(system.momenta, trajectory.v.T))
    return np.asarray(momentum - system.lagrangian(*arguments), dtype=float)

