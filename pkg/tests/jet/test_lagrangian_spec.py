import pydantic
import pytest
import sympy

from herglotz.errors import OrderOverflowError, UnboundAtomError
from herglotz.expr import ActionJet, Constant, Coordinate, FieldJet
from herglotz.jet import JetKind, JetVar, LagrangianSpec, MultiIndex, multi_indices


def string_spec() -> LagrangianSpec:
    rho, tau, gamma = Constant("rho"), Constant("tau"), Constant("gamma")
    lagrangian = rho * FieldJet("u_t") ** 2 / 2 - tau * FieldJet("u_x") ** 2 / 2 - gamma * ActionJet("z^t")
    return LagrangianSpec(
        coordinates=("t", "x"),
        fields=("u",),
        order=1,
        constants={"rho": 1.0, "tau": 1.0, "gamma": None},
        lagrangian=lagrangian,
    )


def test_multi_indices_are_listed_once_by_increasing_order() -> None:
    # Act
    indices = list(multi_indices(2, 2))

    # Assert
    assert indices == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert [index.order for index in indices] == [0, 1, 1, 2, 2, 2]


def test_multi_index_letters_and_directions() -> None:
    # Arrange
    index = MultiIndex.from_letters("xtx", ("t", "x"))

    # Act / Assert
    assert index == (1, 2)
    assert index.letters(("t", "x")) == "txx"
    assert list(index.directions()) == [0, 1, 1]
    assert index.raised(0) == (2, 2)


def test_multi_index_rejects_negative_counts() -> None:
    # Act / Assert
    with pytest.raises(ValueError):
        MultiIndex((1, -1))


def test_symbols_round_trip_through_jet_variables() -> None:
    # Arrange
    spec = string_spec()
    jet = JetVar(kind=JetKind.FIELD, label="u", index=MultiIndex((1, 1)))

    # Act
    symbol = spec.symbol_of(jet)

    # Assert
    assert symbol == FieldJet("u_tx")
    assert spec.jet_of(symbol) == jet
    assert spec.action("x", "t") == ActionJet("z^x_t")
    assert spec.jet_of(Constant("rho")) is None


def test_raise_jet_respects_r_max() -> None:
    # Arrange
    spec = string_spec().copy(update=dict(max_order=2))

    # Act / Assert
    assert spec.raise_jet(FieldJet("u_t"), 1) == FieldJet("u_tx")
    with pytest.raises(OrderOverflowError, match="r_max = 2"):
        spec.raise_jet(FieldJet("u_tx"), 1)


def test_default_r_max_leaves_room_for_the_equations() -> None:
    # Act / Assert
    assert string_spec().r_max == 4


def test_constant_values_merge_overrides() -> None:
    # Arrange
    spec = string_spec()

    # Act
    values = spec.constant_values({"gamma": 0.2, "tau": 4.0})

    # Assert
    assert values == {Constant("rho"): 1.0, Constant("tau"): 4.0, Constant("gamma"): 0.2}


def test_unset_constant_raises() -> None:
    # Act / Assert
    with pytest.raises(UnboundAtomError, match="gamma"):
        string_spec().constant_values()


def test_undeclared_constant_cannot_be_set() -> None:
    # Act / Assert
    with pytest.raises(KeyError, match="beta"):
        string_spec().constant_values({"beta": 1.0})


@pytest.mark.parametrize(
    "lagrangian,message",
    [
        (FieldJet("v_t") ** 2, "`v_t` is not declared"),
        (FieldJet("u_tt"), "exceeds the declared Lagrangian order"),
        (ActionJet("z^t_t"), "may not appear differentiated"),
        (Coordinate("y"), "`y` is not declared"),
    ],
)
def test_lagrangian_names_are_checked(lagrangian: sympy.Expr, message: str) -> None:
    # Act / Assert
    with pytest.raises(pydantic.ValidationError, match=message):
        LagrangianSpec(coordinates=("t", "x"), fields=("u",), order=1, lagrangian=lagrangian)


def test_coordinates_must_be_single_letters() -> None:
    # Act / Assert
    with pytest.raises(pydantic.ValidationError, match="single letters"):
        LagrangianSpec(coordinates=("tau",), fields=("q",), order=1, lagrangian=FieldJet("q"))


def test_duplicate_names_are_rejected() -> None:
    # Act / Assert
    with pytest.raises(pydantic.ValidationError, match="more than once"):
        LagrangianSpec(coordinates=("t",), fields=("t",), order=1, lagrangian=Coordinate("t"))
