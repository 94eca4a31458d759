import itertools
from enum import Enum
from typing import Any, Callable, Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

import sympy
from pydantic import BaseModel, root_validator, validator

from herglotz.config import ExprConfig
from herglotz.errors import OrderOverflowError, UnboundAtomError
from herglotz.expr import ActionJet, Constant, Coordinate, Expr, FieldJet, free_atoms, simplify

CoordinateRef = Union[int, str]


class MultiIndex(Tuple[int, ...]):
    """Derivative counts (I_1, ..., I_m), one per base coordinate."""

    def __new__(cls, counts: Sequence[int]) -> "MultiIndex":
        if any(count < 0 for count in counts):
            raise ValueError(f"Multi-index components must be non-negative, got {tuple(counts)}")
        return super().__new__(cls, tuple(int(count) for count in counts))

    @classmethod
    def __get_validators__(cls) -> Iterator[Callable[[Any], "MultiIndex"]]:
        yield cls.validate

    @classmethod
    def validate(cls, value: Any) -> "MultiIndex":
        return value if isinstance(value, cls) else cls(value)

    @classmethod
    def zero(cls, dimension: int) -> "MultiIndex":
        return cls([0] * dimension)

    @classmethod
    def from_letters(cls, letters: str, coordinates: Sequence[str]) -> "MultiIndex":
        return cls([letters.count(name) for name in coordinates])

    @property
    def order(self) -> int:
        return sum(self)

    def raised(self, mu: int) -> "MultiIndex":
        return MultiIndex([count + (index == mu) for index, count in enumerate(self)])

    def letters(self, coordinates: Sequence[str]) -> str:
        return "".join(name * count for name, count in zip(coordinates, self))

    def directions(self) -> Iterator[int]:
        """Coordinate indices in application order, e.g. (1, 2) -> 0, 1, 1."""
        for mu, count in enumerate(self):
            yield from itertools.repeat(mu, count)


def multi_indices(dimension: int, max_order: int) -> Iterator[MultiIndex]:
    """All multi-indices with |I| <= max_order, each counted once, by increasing order."""
    for order in range(max_order + 1):
        for combination in itertools.combinations_with_replacement(range(dimension), order):
            yield MultiIndex([combination.count(mu) for mu in range(dimension)])


class JetKind(str, Enum):
    COORDINATE = "coordinate"
    FIELD = "field"
    ACTION = "action"


class JetVar(BaseModel):
    kind: JetKind
    label: str
    index: MultiIndex

    Config = ExprConfig

    @property
    def order(self) -> int:
        return self.index.order

    def raised(self, mu: int) -> "JetVar":
        return JetVar(kind=self.kind, label=self.label, index=self.index.raised(mu))


class LagrangianSpec(BaseModel):
    coordinates: Tuple[str, ...]
    fields: Tuple[str, ...]
    order: int
    constants: Dict[str, Optional[float]] = {}
    lagrangian: Expr
    max_order: Optional[int] = None

    Config = ExprConfig

    @validator("coordinates")
    def _coordinates_are_letters(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:  # pylint: disable=no-self-argument
        if not value:
            raise ValueError("At least one coordinate is required")
        for name in value:
            if len(name) != 1 or not name.isalpha():
                raise ValueError(f"Coordinate names must be single letters, got `{name}`")
        return value

    @validator("order")
    def _order_is_positive(cls, value: int) -> int:  # pylint: disable=no-self-argument
        if value < 1:
            raise ValueError(f"Lagrangian order must be at least 1, got {value}")
        return value

    @validator("lagrangian", pre=True)
    def _canonical_lagrangian(cls, value: Expr) -> Expr:  # pylint: disable=no-self-argument
        return simplify(value)

    @root_validator(skip_on_failure=True)
    def _names_are_declared(cls, values: Dict[str, object]) -> Dict[str, object]:  # pylint: disable=no-self-argument
        coordinates = values["coordinates"]
        fields = values["fields"]
        constants = values["constants"]
        names = [*coordinates, *fields, *constants]  # type: ignore[misc]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"Names declared more than once: {', '.join(duplicates)}")
        for atom in free_atoms(values["lagrangian"]):
            name = atom.name
            if isinstance(atom, Coordinate) and name in coordinates:  # type: ignore[operator]
                continue
            if isinstance(atom, Constant) and name in constants:  # type: ignore[operator]
                continue
            if isinstance(atom, ActionJet):
                head, _, suffix = name.partition("_")
                if suffix:
                    raise ValueError(f"Action density `{name}` may not appear differentiated in the Lagrangian")
                if head[2:] in coordinates:  # type: ignore[operator]
                    continue
            if isinstance(atom, FieldJet):
                base, _, suffix = name.partition("_")
                order = values["order"]
                if base in fields and set(suffix) <= set(coordinates):  # type: ignore[arg-type, operator]
                    if len(suffix) > order:  # type: ignore[operator]
                        raise ValueError(f"`{name}` exceeds the declared Lagrangian order {order}")
                    continue
            raise ValueError(f"`{name}` is not declared")
        return values

    @property
    def dimension(self) -> int:
        return len(self.coordinates)

    @property
    def is_mechanics(self) -> bool:
        return self.dimension == 1

    @property
    def r_max(self) -> int:
        return self.max_order if self.max_order is not None else 2 * self.order + 2

    def mu(self, coordinate: CoordinateRef) -> int:
        if isinstance(coordinate, int):
            if not 0 <= coordinate < self.dimension:
                raise IndexError(f"Coordinate index {coordinate} out of range for m = {self.dimension}")
            return coordinate
        try:
            return self.coordinates.index(coordinate)
        except ValueError as ex:
            raise KeyError(f"Unknown coordinate `{coordinate}`") from ex

    def coordinate(self, coordinate: CoordinateRef) -> Coordinate:
        return Coordinate(self.coordinates[self.mu(coordinate)])

    def constant(self, name: str) -> Constant:
        if name not in self.constants:
            raise KeyError(f"Unknown constant `{name}`")
        return Constant(name)

    def field(self, name: str, derivatives: str = "") -> FieldJet:
        return self.symbol_of(
            JetVar(kind=JetKind.FIELD, label=name, index=MultiIndex.from_letters(derivatives, self.coordinates))
        )

    def action(self, component: CoordinateRef, derivatives: str = "") -> ActionJet:
        label = self.coordinates[self.mu(component)]
        return self.symbol_of(
            JetVar(kind=JetKind.ACTION, label=label, index=MultiIndex.from_letters(derivatives, self.coordinates))
        )

    def symbol_of(self, jet: JetVar) -> sympy.Symbol:
        letters = jet.index.letters(self.coordinates)
        suffix = f"_{letters}" if letters else ""
        if jet.kind is JetKind.FIELD:
            return FieldJet(f"{jet.label}{suffix}")
        if jet.kind is JetKind.ACTION:
            return ActionJet(f"z^{jet.label}{suffix}")
        return Coordinate(jet.label)

    def jet_of(self, atom: sympy.Basic) -> Optional[JetVar]:
        if isinstance(atom, FieldJet):
            label, _, letters = atom.name.partition("_")
            return JetVar(kind=JetKind.FIELD, label=label, index=MultiIndex.from_letters(letters, self.coordinates))
        if isinstance(atom, ActionJet):
            head, _, letters = atom.name.partition("_")
            return JetVar(kind=JetKind.ACTION, label=head[2:], index=MultiIndex.from_letters(letters, self.coordinates))
        if isinstance(atom, Coordinate):
            return JetVar(kind=JetKind.COORDINATE, label=atom.name, index=MultiIndex.zero(self.dimension))
        return None

    def jet_order(self, expr: Expr) -> int:
        orders = [jet.order for jet in map(self.jet_of, free_atoms(expr)) if jet is not None]
        return max(orders, default=0)

    def raise_jet(self, atom: sympy.Symbol, mu: int) -> sympy.Symbol:
        jet = self.jet_of(atom)
        if jet is None or jet.kind is JetKind.COORDINATE:
            raise ValueError(f"`{atom}` is not a jet variable")
        raised = jet.raised(mu)
        if raised.order > self.r_max:
            raise OrderOverflowError(
                f"D_{self.coordinates[mu]} of `{atom}` needs jet order {raised.order} > r_max = {self.r_max}"
            )
        return self.symbol_of(raised)

    def action_densities(self) -> Tuple[ActionJet, ...]:
        return tuple(self.action(mu) for mu in range(self.dimension))

    def velocities(self, field: str) -> Tuple[FieldJet, ...]:
        return tuple(self.field(field, name) for name in self.coordinates)

    def constant_values(self, overrides: Optional[Mapping[str, float]] = None) -> Dict[Constant, float]:
        """Numeric values of every declared constant; an unset constant raises."""
        unknown = sorted(set(overrides or {}) - set(self.constants))
        if unknown:
            raise KeyError(f"Cannot set undeclared constants: {', '.join(unknown)}")
        merged = {**self.constants, **(overrides or {})}
        values = {}
        for name in self.constants:
            value = merged[name]
            if value is None:
                raise UnboundAtomError(name)
            values[Constant(name)] = float(value)
        return values
