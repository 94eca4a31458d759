import json

import pytest
import sympy

from herglotz.calculus import (
    DerivationKind,
    MechanicsEquations,
    closed_action_residuals,
    constraint_expression,
    derive_equations,
    derive_first_order_equations,
    derive_higher_order_equations,
    derive_mechanics_equations,
    dissipation_form,
)
from herglotz.errors import NotClosedError, OrderError, OrderOverflowError
from herglotz.expr import ActionJet, Constant, FieldJet, is_zero
from herglotz.jet import LagrangianSpec
from herglotz.parser import parse_problem
from herglotz.printer import print_equation, print_expression

RHO, TAU, GAMMA = Constant("rho"), Constant("tau"), Constant("gamma")
GAMMA_T, GAMMA_X = Constant("gamma_t"), Constant("gamma_x")
U, U_T, U_X = FieldJet("u"), FieldJet("u_t"), FieldJet("u_x")
U_TT, U_TX, U_XX = FieldJet("u_tt"), FieldJet("u_tx"), FieldJet("u_xx")
U_XXX, U_XXXX = FieldJet("u_xxx"), FieldJet("u_xxxx")
Z_X = ActionJet("z^x")


def spec_of(text: str) -> LagrangianSpec:
    return parse_problem(text).spec


STRING = """
coords: t, x
fields: u
constants: rho = 1, tau = 1, gamma = 0.2
lagrangian: (1/2)*rho*u_t^2 - (1/2)*tau*u_x^2 - gamma*z^t
"""

COUNTEREXAMPLE = """
coords: t, x
fields: u
constants: gamma_x = 1
lagrangian: (1/2)*(u_t^2 + u_x^2) - u*gamma_x*z^x
"""

KDV = """
coords: t, x
fields: u
order: 2
constants: gamma_t, gamma_x
lagrangian: (1/2)*u_x*u_t + u_x^3 - (1/2)*u_xx^2 - gamma_t*z^t - gamma_x*z^x
"""

OSCILLATOR = """
coords: t
fields: q
constants: gamma = 0.1
lagrangian: (1/2)*q_t^2 - (1/2)*q^2 - gamma*z
"""


def test_damped_string_equation() -> None:
    # Arrange
    spec = spec_of(STRING)

    # Act
    equations = derive_first_order_equations(spec)

    # Assert
    assert print_equation(equations.residuals["u"]) == "rho*u_tt - tau*u_xx + gamma*rho*u_t = 0"
    assert is_zero(equations.residuals["u"] - (RHO * U_TT - TAU * U_XX + GAMMA * RHO * U_T))
    assert equations.kind is DerivationKind.FIRST_ORDER
    assert equations.is_closed
    assert equations.dissipation == (-GAMMA, sympy.Integer(0))


def test_constraint_is_divergence_minus_lagrangian() -> None:
    # Arrange
    spec = spec_of(STRING)
    expected = ActionJet("z^t_t") + ActionJet("z^x_x") - spec.lagrangian

    # Act / Assert
    assert is_zero(constraint_expression(spec) - expected)


def test_counterexample_is_not_closed() -> None:
    # Arrange
    spec = spec_of(COUNTEREXAMPLE)

    # Act
    equations = derive_first_order_equations(spec)
    closedness = closed_action_residuals(spec)

    # Assert
    assert is_zero(equations.residuals["u"] - (U_TT + U_XX + GAMMA_X * Z_X + GAMMA_X * U * U_X))
    assert not equations.is_closed
    assert equations.closedness_entries() == {("t", "x"): GAMMA_X * U_T}
    assert is_zero(closedness[1][0] + GAMMA_X * U_T)
    assert is_zero(closedness[0][0]) and is_zero(closedness[1][1])


def test_dissipation_form() -> None:
    # Act
    theta = dissipation_form(spec_of(COUNTEREXAMPLE))

    # Assert
    assert theta == (sympy.Integer(0), -GAMMA_X * U)


def test_higher_order_equations_refuse_non_closed_action_dependence() -> None:
    # Act / Assert
    with pytest.raises(NotClosedError, match="C_tx = gamma_x\\*u_t") as info:
        derive_higher_order_equations(spec_of(COUNTEREXAMPLE))
    assert info.value.residuals == {("t", "x"): GAMMA_X * U_T}


def test_damped_kdv_equation() -> None:
    # Arrange
    spec = spec_of(KDV)
    expected = (
        U_TX
        + GAMMA_T / 2 * U_X
        + 6 * U_X * U_XX
        + GAMMA_X / 2 * U_T
        + 3 * GAMMA_X * U_X**2
        + U_XXXX
        + 2 * GAMMA_X * U_XXX
        + GAMMA_X**2 * U_XX
    )

    # Act
    equations = derive_higher_order_equations(spec)

    # Assert
    assert equations.kind is DerivationKind.HIGHER_ORDER
    assert equations.is_closed
    assert is_zero(equations.residuals["u"] - expected)


def test_higher_order_equations_reduce_to_first_order() -> None:
    # Arrange
    spec = spec_of(STRING)

    # Act
    first = derive_first_order_equations(spec).residuals["u"]
    higher = derive_higher_order_equations(spec).residuals["u"]

    # Assert
    assert is_zero(first - higher)


def test_higher_order_equations_need_room_in_the_jet() -> None:
    # Arrange
    spec = spec_of(KDV).copy(update=dict(max_order=3))

    # Act / Assert
    with pytest.raises(OrderOverflowError, match="r_max >= 4"):
        derive_higher_order_equations(spec)


def test_first_order_derivation_rejects_higher_order_lagrangians() -> None:
    # Act / Assert
    with pytest.raises(OrderError, match="derive_higher_order_equations"):
        derive_first_order_equations(spec_of(KDV))


def test_mechanics_equations() -> None:
    # Arrange
    spec = spec_of(OSCILLATOR)
    q, q_t, q_tt = FieldJet("q"), FieldJet("q_t"), FieldJet("q_tt")

    # Act
    equations = derive_mechanics_equations(spec)

    # Assert
    assert isinstance(equations, MechanicsEquations)
    assert is_zero(equations.residuals["q"] - (q_tt + q + GAMMA * q_t))
    assert equations.hessian == ((sympy.Integer(1),),)
    assert is_zero(equations.forcing[0] + q + GAMMA * q_t)
    assert equations.closedness == ((sympy.Integer(0),),)


@pytest.mark.parametrize(
    "text,order,kind",
    [
        (OSCILLATOR, "auto", DerivationKind.MECHANICS),
        (STRING, "auto", DerivationKind.FIRST_ORDER),
        (STRING, "higher", DerivationKind.HIGHER_ORDER),
        (KDV, "auto", DerivationKind.HIGHER_ORDER),
        (COUNTEREXAMPLE, "1", DerivationKind.FIRST_ORDER),
    ],
)
def test_derive_equations_routes_by_order(text: str, order: str, kind: DerivationKind) -> None:
    # Act
    equations = derive_equations(spec_of(text), order)

    # Assert
    assert equations.kind is kind


def test_unknown_order_is_rejected() -> None:
    # Act / Assert
    with pytest.raises(ValueError, match="Unknown derivation order"):
        derive_equations(spec_of(STRING), "2")


def test_equation_document_is_json_ready() -> None:
    # Arrange
    equations = derive_equations(spec_of(COUNTEREXAMPLE))

    # Act
    document = json.loads(json.dumps(equations.to_document()))

    # Assert
    assert document["kind"] == "first-order"
    assert document["coordinates"] == ["t", "x"]
    assert document["closed"] is False
    assert document["closedness"][0][1] == "gamma_x*u_t"
    assert document["dissipation"] == ["0", print_expression(-GAMMA_X * U)]
    assert document["residuals"]["u"] == print_expression(equations.residuals["u"])
