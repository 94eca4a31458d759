"""Total derivatives, Herglotz operators and the Herglotz field equations on jet coordinates."""
import logging
from enum import Enum
from typing import Any, Dict, Tuple

import sympy
from pydantic import BaseModel

from herglotz.config import ExprConfig
from herglotz.errors import NotClosedError, OrderError, OrderOverflowError
from herglotz.expr import ActionJet, Expr, FieldJet, free_atoms, is_zero, partial_deriv, simplify, substitute
from herglotz.jet import CoordinateRef, LagrangianSpec, MultiIndex, multi_indices
from herglotz.printer import print_expression

logger = logging.getLogger(__name__)

Matrix = Tuple[Tuple[Expr, ...], ...]


class DerivationKind(str, Enum):
    MECHANICS = "mechanics"
    FIRST_ORDER = "first-order"
    HIGHER_ORDER = "higher-order"


class EquationSet(BaseModel):
    kind: DerivationKind
    coordinates: Tuple[str, ...]
    residuals: Dict[str, Expr]
    constraint: Expr
    closedness: Matrix
    dissipation: Tuple[Expr, ...]

    Config = ExprConfig

    @property
    def is_closed(self) -> bool:
        return all(is_zero(entry) for row in self.closedness for entry in row)

    def closedness_entries(self) -> Dict[Tuple[str, str], Expr]:
        """Upper-triangle entries C_{mu nu}, mu < nu."""
        names = self.coordinates
        return {
            (names[mu], names[nu]): self.closedness[mu][nu]
            for mu in range(len(names))
            for nu in range(mu + 1, len(names))
        }

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "coordinates": list(self.coordinates),
            "residuals": {name: print_expression(expr) for name, expr in self.residuals.items()},
            "constraint": print_expression(self.constraint),
            "dissipation": [print_expression(expr) for expr in self.dissipation],
            "closedness": [[print_expression(expr) for expr in row] for row in self.closedness],
            "closed": self.is_closed,
        }


class MechanicsEquations(EquationSet):
    """Residuals plus the acceleration form W q'' = R consumed by the integrator."""

    accelerations: Tuple[FieldJet, ...]
    hessian: Matrix
    forcing: Tuple[Expr, ...]

    def to_document(self) -> Dict[str, Any]:
        document = super().to_document()
        document["hessian"] = [[print_expression(expr) for expr in row] for row in self.hessian]
        document["forcing"] = [print_expression(expr) for expr in self.forcing]
        return document


def total_derivative(spec: LagrangianSpec, expr: Any, coordinate: CoordinateRef) -> Expr:
    """D_mu: explicit coordinate derivative plus the chain rule through every jet variable of `expr`."""
    mu = spec.mu(coordinate)
    expr = sympy.sympify(expr)
    result = sympy.diff(expr, spec.coordinate(mu))
    for atom in free_atoms(expr):
        if isinstance(atom, (FieldJet, ActionJet)):
            result += spec.raise_jet(atom, mu) * sympy.diff(expr, atom)
    return simplify(result)


def dissipation_form(spec: LagrangianSpec) -> Tuple[Expr, ...]:
    """theta_mu = dL/dz^mu."""
    return tuple(partial_deriv(spec.lagrangian, density) for density in spec.action_densities())


def herglotz_operator(spec: LagrangianSpec, expr: Any, coordinate: CoordinateRef) -> Expr:
    mu = spec.mu(coordinate)
    theta = partial_deriv(spec.lagrangian, spec.action(mu))
    return simplify(total_derivative(spec, expr, mu) - sympy.sympify(expr) * theta)


def commutator_residual(spec: LagrangianSpec, expr: Any, mu: CoordinateRef, nu: CoordinateRef) -> Expr:
    first = herglotz_operator(spec, herglotz_operator(spec, expr, nu), mu)
    second = herglotz_operator(spec, herglotz_operator(spec, expr, mu), nu)
    return simplify(first - second)


def closed_action_residuals(spec: LagrangianSpec) -> Matrix:
    """C_{mu nu} = D_nu theta_mu - D_mu theta_nu; zero everywhere iff the action dependence is closed."""
    theta = dissipation_form(spec)
    size = spec.dimension
    return tuple(
        tuple(
            simplify(total_derivative(spec, theta[mu], nu) - total_derivative(spec, theta[nu], mu))
            for nu in range(size)
        )
        for mu in range(size)
    )


def constraint_expression(spec: LagrangianSpec) -> Expr:
    """phi = z^mu_mu - L (for mechanics: z_t - L)."""
    divergence = sum((spec.action(mu, spec.coordinates[mu]) for mu in range(spec.dimension)), sympy.S.Zero)
    return simplify(divergence - spec.lagrangian)


def _first_order_residual(spec: LagrangianSpec, field: str, theta: Tuple[Expr, ...]) -> Expr:
    lagrangian = spec.lagrangian
    residual = -partial_deriv(lagrangian, spec.field(field))
    for mu, velocity in enumerate(spec.velocities(field)):
        momentum = partial_deriv(lagrangian, velocity)
        residual += total_derivative(spec, momentum, mu) - theta[mu] * momentum
    return simplify(residual)


def _attach(spec: LagrangianSpec, kind: DerivationKind, residuals: Dict[str, Expr]) -> Dict[str, Any]:
    return dict(
        kind=kind,
        coordinates=spec.coordinates,
        residuals=residuals,
        constraint=constraint_expression(spec),
        closedness=closed_action_residuals(spec),
        dissipation=dissipation_form(spec),
    )


def derive_first_order_equations(spec: LagrangianSpec) -> EquationSet:
    """E_a = D_mu(dL/du^a_mu) - dL/du^a - theta_mu dL/du^a_mu, with phi, C and theta attached."""
    if spec.order != 1:
        raise OrderError(
            f"First-order derivation needs a first-order Lagrangian, got order {spec.order}."
            " Use `derive_higher_order_equations` instead"
        )
    theta = dissipation_form(spec)
    residuals = {field: _first_order_residual(spec, field, theta) for field in spec.fields}
    logger.debug("first-order equations for %s", ", ".join(spec.fields))
    return EquationSet(**_attach(spec, DerivationKind.FIRST_ORDER, residuals))


def herglotz_multi_operator(spec: LagrangianSpec, expr: Any, index: MultiIndex) -> Expr:
    """D^L_I; the application order is irrelevant for closed action dependence."""
    result = simplify(expr)
    for mu in index.directions():
        result = herglotz_operator(spec, result, mu)
    return result


def derive_higher_order_equations(spec: LagrangianSpec) -> EquationSet:
    """E_a = -sum_{|I| <= r} (-1)^|I| D^L_I(dL/du^a_I).

    The overall minus sign makes the residual coincide with `derive_first_order_equations` at r = 1.
    """
    closedness = closed_action_residuals(spec)
    offending = {
        (spec.coordinates[mu], spec.coordinates[nu]): closedness[mu][nu]
        for mu in range(spec.dimension)
        for nu in range(mu + 1, spec.dimension)
        if not is_zero(closedness[mu][nu])
    }
    if offending:
        raise NotClosedError(offending)
    if 2 * spec.order > spec.r_max:
        raise OrderOverflowError(f"Equations of a order-{spec.order} Lagrangian need r_max >= {2 * spec.order}")

    residuals = {}
    for field in spec.fields:
        total = sympy.S.Zero
        for index in multi_indices(spec.dimension, spec.order):
            jet = spec.field(field, index.letters(spec.coordinates))
            derivative = partial_deriv(spec.lagrangian, jet)
            if is_zero(derivative):
                continue
            total += (-1) ** (index.order + 1) * herglotz_multi_operator(spec, derivative, index)
        residuals[field] = simplify(total)
    logger.debug("higher-order equations (r = %d) for %s", spec.order, ", ".join(spec.fields))
    return EquationSet(**_attach(spec, DerivationKind.HIGHER_ORDER, residuals))


def derive_mechanics_equations(spec: LagrangianSpec) -> MechanicsEquations:
    """Herglotz equations d/dt(dL/dq') - dL/dq = dL/dq' dL/dz, plus W q'' = R with z' = L substituted."""
    if not spec.is_mechanics:
        raise ValueError(f"Mechanics derivation needs a single coordinate, got {', '.join(spec.coordinates)}")
    if spec.order != 1:
        raise OrderError("Higher-order mechanics is not supported")
    theta = dissipation_form(spec)
    time = spec.coordinates[0]
    residuals = {field: _first_order_residual(spec, field, theta) for field in spec.fields}
    accelerations = tuple(spec.field(field, time * 2) for field in spec.fields)
    on_shell = {spec.action(0, time): spec.lagrangian}
    hessian = tuple(
        tuple(partial_deriv(residuals[field], acceleration) for acceleration in accelerations) for field in spec.fields
    )
    at_rest = {**{acceleration: sympy.S.Zero for acceleration in accelerations}, **on_shell}
    forcing = tuple(simplify(-substitute(residuals[field], at_rest)) for field in spec.fields)
    return MechanicsEquations(
        **_attach(spec, DerivationKind.MECHANICS, residuals),
        accelerations=accelerations,
        hessian=hessian,
        forcing=forcing,
    )


def derive_equations(spec: LagrangianSpec, order: str = "auto") -> EquationSet:
    """Route to the derivation matching `order` ("auto", "1" or "higher")."""
    if order == "auto":
        if spec.is_mechanics:
            return derive_mechanics_equations(spec)
        if spec.order == 1:
            return derive_first_order_equations(spec)
        return derive_higher_order_equations(spec)
    if order == "1":
        if spec.is_mechanics:
            return derive_mechanics_equations(spec)
        return derive_first_order_equations(spec)
    if order == "higher":
        return derive_higher_order_equations(spec)
    raise ValueError(f"Unknown derivation order `{order}`; expected auto, 1 or higher")

