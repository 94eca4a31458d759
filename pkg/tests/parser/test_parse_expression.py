import pytest
import sympy

from herglotz.errors import ParseError
from herglotz.expr import ActionJet, Constant, Coordinate, FieldJet, is_zero
from herglotz.parser import Scope, TokenKind, parse_expression, tokenize

FIELD_SCOPE = Scope(coordinates=("t", "x"), fields=("u",), constants=("rho", "gamma_x"), max_order=2, allow_action=True)
MECHANICS_SCOPE = Scope(coordinates=("t",), fields=("q",), allow_action=True)


def test_tokenize_tracks_columns() -> None:
    # Act
    tokens = tokenize("rho*u_t^2 - z^x", line=3, column=13)

    # Assert
    assert [(token.kind, token.text, token.column) for token in tokens] == [
        (TokenKind.NAME, "rho", 13),
        (TokenKind.OPERATOR, "*", 16),
        (TokenKind.NAME, "u_t", 17),
        (TokenKind.OPERATOR, "^", 20),
        (TokenKind.NUMBER, "2", 21),
        (TokenKind.OPERATOR, "-", 23),
        (TokenKind.ACTION, "z^x", 25),
        (TokenKind.END, "", 28),
    ]
    assert all(token.line == 3 for token in tokens)


@pytest.mark.parametrize(
    "text,expected",
    [
        ("1 + 2*3", sympy.Integer(7)),
        ("2^3^2", sympy.Integer(512)),
        ("-2^2", sympy.Integer(-4)),
        ("(1/2)*u_t^2", sympy.Rational(1, 2) * FieldJet("u_t") ** 2),
        ("u_xt", FieldJet("u_tx")),
        ("rho*u/2", Constant("rho") * FieldJet("u") / 2),
        ("gamma_x*z^x", Constant("gamma_x") * ActionJet("z^x")),
        ("sin(pi*x)", sympy.sin(sympy.pi * Coordinate("x"))),
        ("sech(x + 10)^2", sympy.sech(Coordinate("x") + 10) ** 2),
        ("1.5e-1*t", sympy.Float(0.15) * Coordinate("t")),
        ("2^-1", sympy.Rational(1, 2)),
    ],
)
def test_parse_expression(text: str, expected: sympy.Expr) -> None:
    # Act
    parsed = parse_expression(text, FIELD_SCOPE)

    # Assert
    assert is_zero(parsed - expected)


def test_z_is_shorthand_for_the_mechanics_action() -> None:
    # Act
    parsed = parse_expression("-gamma*z", MECHANICS_SCOPE.copy(update=dict(constants=("gamma",))))

    # Assert
    assert parsed == -Constant("gamma") * ActionJet("z^t")


@pytest.mark.parametrize(
    "text,message,column,token",
    [
        ("u_y", "unknown coordinate `y` in derivative suffix", 1, "u_y"),
        ("u + v", "unknown identifier", 5, "v"),
        ("rho_t", "constant `rho` cannot be differentiated", 1, "rho_t"),
        ("t_x", "coordinate `t` cannot be differentiated", 1, "t_x"),
        ("u_ttx", "derivative order 3 exceeds the declared order 2", 1, "u_ttx"),
        ("u^u", "exponents must be integers", 3, "u"),
        ("u^(1/2)", "exponents must be integers", 3, "("),
        ("u^-1", "negative powers of variables are not allowed", 3, "-"),
        ("1/u", "divisors must be nonzero numbers", 3, "u"),
        ("1/(2 - 2)", "divisors must be nonzero numbers", 3, "("),
        ("(u + 1", "expected `)`", 7, ""),
        ("u +", "unexpected end of expression", 4, ""),
        ("u u", "unexpected token", 3, "u"),
        ("u $ 1", "unexpected character", 3, "$"),
        ("z^x_t", "action densities may not appear differentiated in the Lagrangian", 1, "z^x_t"),
        ("z^y", "unknown coordinate `y` in action density", 1, "z^y"),
    ],
)
def test_parse_errors_point_at_the_offending_token(text: str, message: str, column: int, token: str) -> None:
    # Act
    with pytest.raises(ParseError) as info:
        parse_expression(text, FIELD_SCOPE)

    # Assert
    assert info.value.message == message
    assert info.value.line == 1
    assert info.value.column == column
    assert info.value.token == token


def test_action_densities_can_be_disallowed() -> None:
    # Act / Assert
    with pytest.raises(ParseError, match="action densities are not allowed here"):
        parse_expression("z^t", Scope(coordinates=("t", "x"), fields=("u",)))
