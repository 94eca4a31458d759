"""Problem-file parser.

A problem file is line oriented: `key: value` headers, `solver:` and `section:` blocks whose lines
are indented, and `#` comments. Expressions are parsed with a Pratt parser; every error carries the
1-based line and column of the offending token.
"""
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

import sympy
from pydantic import BaseModel

from herglotz.config import ExprConfig
from herglotz.errors import ParseError
from herglotz.expr import FUNCTIONS, ActionJet, Constant, Coordinate, Expr, FieldJet, simplify
from herglotz.jet import LagrangianSpec

logger = logging.getLogger(__name__)

RESERVED = {"z", "pi", *FUNCTIONS}


class TokenKind(str, Enum):
    NUMBER = "number"
    NAME = "name"
    ACTION = "action"
    OPERATOR = "operator"
    END = "end"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"""
    (?P<space>\s+)
    |(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
    |(?P<action>z\^[A-Za-z](?:_[A-Za-z]+)?)
    |(?P<name>[A-Za-z][A-Za-z0-9_]*)
    |(?P<operator>[-+*/^(),=])
    """,
    re.VERBOSE,
)


def tokenize(text: str, line: int = 1, column: int = 1) -> List[Token]:
    tokens = []
    position = 0
    while position < len(text):
        match = _TOKEN_RE.match(text, position)
        if match is None:
            raise ParseError("unexpected character", line, column + position, text[position])
        kind = match.lastgroup
        if kind != "space":
            tokens.append(Token(TokenKind(kind), match.group(), line, column + position))
        position = match.end()
    tokens.append(Token(TokenKind.END, "", line, column + len(text)))
    return tokens


def _at(token: Token, message: str) -> ParseError:
    return ParseError(message, token.line, token.column, token.text)


class Scope(BaseModel):
    """Names an expression may reference."""

    coordinates: Tuple[str, ...]
    fields: Tuple[str, ...] = ()
    constants: Tuple[str, ...] = ()
    max_order: Optional[int] = None
    allow_action: bool = False
    allow_action_derivatives: bool = False

    Config = ExprConfig

    def _letters(self, token: Token, letters: str) -> str:
        if not letters:
            raise _at(token, "empty derivative suffix")
        for letter in letters:
            if letter not in self.coordinates:
                raise _at(token, f"unknown coordinate `{letter}` in derivative suffix")
        return "".join(sorted(letters, key=self.coordinates.index))

    def resolve(self, token: Token) -> Expr:
        name = token.text
        if token.kind is TokenKind.ACTION:
            return self._action(token, name[2], name[4:] if "_" in name else "")
        if name == "pi":
            return sympy.pi
        if name in self.constants:
            return Constant(name)
        if name in self.coordinates:
            return Coordinate(name)
        if name == "z" and len(self.coordinates) == 1:
            return self._action(token, self.coordinates[0], "")
        base, underscore, suffix = name.partition("_")
        if base in self.fields:
            letters = self._letters(token, suffix) if underscore else ""
            if self.max_order is not None and len(letters) > self.max_order:
                raise _at(token, f"derivative order {len(letters)} exceeds the declared order {self.max_order}")
            return FieldJet(f"{base}_{letters}" if letters else base)
        if underscore and base in self.constants:
            raise _at(token, f"constant `{base}` cannot be differentiated")
        if underscore and base in self.coordinates:
            raise _at(token, f"coordinate `{base}` cannot be differentiated")
        raise _at(token, "unknown identifier")

    def _action(self, token: Token, component: str, suffix: str) -> Expr:
        if not self.allow_action:
            raise _at(token, "action densities are not allowed here")
        if component not in self.coordinates:
            raise _at(token, f"unknown coordinate `{component}` in action density")
        if suffix and not self.allow_action_derivatives:
            raise _at(token, "action densities may not appear differentiated in the Lagrangian")
        letters = self._letters(token, suffix) if suffix else ""
        return ActionJet(f"z^{component}_{letters}" if letters else f"z^{component}")


_PREFIX_BINDING = 30
_INFIX_BINDING = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}


class _ExpressionParser:
    def __init__(self, tokens: Sequence[Token], scope: Scope) -> None:
        self._tokens = list(tokens)
        self._index = 0
        self._scope = scope

    @property
    def token(self) -> Token:
        return self._tokens[self._index]

    def advance(self) -> Token:
        token = self.token
        if token.kind is not TokenKind.END:
            self._index += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.advance()
        if token.text != text or token.kind is not TokenKind.OPERATOR:
            raise _at(token, f"expected `{text}`")
        return token

    def parse(self) -> Expr:
        expr = self.expression()
        if self.token.kind is not TokenKind.END:
            raise _at(self.token, "unexpected token")
        return expr

    def expression(self, right_binding: int = 0) -> Expr:
        token = self.advance()
        left = self._prefix(token)
        while right_binding < self._binding(self.token):
            token = self.advance()
            left = self._infix(token, left)
        return left

    @staticmethod
    def _binding(token: Token) -> int:
        if token.kind is TokenKind.OPERATOR:
            return _INFIX_BINDING.get(token.text, 0)
        return 0

    def _prefix(self, token: Token) -> Expr:
        logger.debug("prefix %r", token)
        if token.kind is TokenKind.NUMBER:
            if re.fullmatch(r"\d+", token.text):
                return sympy.Integer(int(token.text))
            return sympy.Float(float(token.text))
        if token.kind is TokenKind.ACTION:
            return self._scope.resolve(token)
        if token.kind is TokenKind.NAME:
            if token.text in FUNCTIONS:
                self.expect("(")
                argument = self.expression()
                self.expect(")")
                return FUNCTIONS[token.text](argument)  # type: ignore[no-any-return]
            return self._scope.resolve(token)
        if token.text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        if token.text == "-":
            return -self.expression(_PREFIX_BINDING)
        if token.text == "+":
            return self.expression(_PREFIX_BINDING)
        message = "unexpected end of expression" if token.kind is TokenKind.END else "unexpected token"
        raise _at(token, message)

    def _infix(self, token: Token, left: Expr) -> Expr:
        operator = token.text
        if operator == "^":
            exponent_token = self.token
            exponent = self.expression(_INFIX_BINDING["^"] - 1)
            if not exponent.is_Integer:
                raise _at(exponent_token, "exponents must be integers")
            if exponent < 0 and not left.is_number:
                raise _at(exponent_token, "negative powers of variables are not allowed")
            return left**exponent  # type: ignore[no-any-return]
        right_token = self.token
        right = self.expression(_INFIX_BINDING[operator])
        if operator == "+":
            return left + right  # type: ignore[no-any-return]
        if operator == "-":
            return left - right  # type: ignore[no-any-return]
        if operator == "*":
            return left * right  # type: ignore[no-any-return]
        if not right.is_number or right.is_zero:
            raise _at(right_token, "divisors must be nonzero numbers")
        return left / right  # type: ignore[no-any-return]


def parse_expression(text: str, scope: Scope, *, line: int = 1, column: int = 1) -> Expr:
    return _ExpressionParser(tokenize(text, line, column), scope).parse()


class Scheme(str, Enum):
    RK4 = "rk4"
    STRING = "string"
    KDV = "kdv"


class SolverBlock(BaseModel):
    scheme: Scheme
    t_range: Tuple[float, float]
    x_range: Optional[Tuple[float, float]] = None
    nt: Optional[int] = None
    nx: Optional[int] = None
    dt: Optional[float] = None
    substeps: Optional[int] = None
    initial: Dict[str, Expr] = {}

    Config = ExprConfig


class SectionBlock(BaseModel):
    t_range: Tuple[float, float]
    x_range: Tuple[float, float]
    nt: int
    nx: int
    u: Expr
    z_t: Expr
    z_x: Expr

    Config = ExprConfig


class ProblemFile(BaseModel):
    spec: LagrangianSpec
    solver: Optional[SolverBlock] = None
    section: Optional[SectionBlock] = None

    Config = ExprConfig


@dataclass(frozen=True)
class _Entry:
    key: str
    value: str
    line: int
    column: int
    key_column: int


_HEADER_KEYS = ("coords", "fields", "order", "constants", "lagrangian", "solver", "section")
_SOLVER_KEYS = ("scheme", "t", "x", "nt", "nx", "dt", "substeps")
_SECTION_KEYS = ("t", "x", "nt", "nx", "u", "z^t", "z^x")


def _entries(text: str) -> Iterator[Tuple[bool, _Entry]]:
    """(indented, entry) per meaningful line; the value column is where its text starts."""
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indented = line[0].isspace()
        stripped = line.lstrip()
        key_column = len(line) - len(stripped) + 1
        key, colon, value = stripped.partition(":")
        if not colon:
            raise ParseError("expected `key: value`", number, key_column, stripped.split()[0])
        lead = len(value) - len(value.lstrip())
        yield indented, _Entry(
            key.strip(), value.strip(), number, key_column + len(key) + 1 + lead, key_column
        )


def _split_list(entry: _Entry) -> List[Tuple[str, int]]:
    """Comma separated items with their columns."""
    items = []
    offset = 0
    for piece in entry.value.split(","):
        lead = len(piece) - len(piece.lstrip())
        if piece.strip():
            items.append((piece.strip(), entry.column + offset + lead))
        offset += len(piece) + 1
    return items


def _identifier(name: str, entry: _Entry, column: int, pattern: str, what: str) -> str:
    if not re.fullmatch(pattern, name) or name in RESERVED:
        raise ParseError(f"invalid {what} name", entry.line, column, name)
    return name


class _ProblemParser:
    def __init__(self, text: str) -> None:
        self.header: Dict[str, _Entry] = {}
        self.blocks: Dict[str, Dict[str, _Entry]] = {}
        block: Optional[str] = None
        for indented, entry in _entries(text):
            if indented:
                if block is None:
                    raise ParseError("indented line outside a block", entry.line, entry.key_column, entry.key)
                target = self.blocks[block]
            else:
                if entry.key not in _HEADER_KEYS:
                    raise ParseError("unknown header key", entry.line, entry.key_column, entry.key)
                block = None
                if entry.key in ("solver", "section"):
                    if entry.value:
                        raise ParseError("block headers take no value", entry.line, entry.column, entry.value)
                    block = entry.key
                    if block in self.blocks:
                        raise ParseError("block declared twice", entry.line, entry.key_column, entry.key)
                    self.blocks[block] = {}
                    continue
                target = self.header
            if entry.key in target:
                raise ParseError("key given twice", entry.line, entry.key_column, entry.key)
            target[entry.key] = entry

    def _require(self, key: str) -> _Entry:
        if key not in self.header:
            raise ParseError(f"missing `{key}:` header", 1, 1)
        return self.header[key]

    def _declared_names(self) -> Tuple[Tuple[str, ...], Tuple[str, ...], Dict[str, Optional[float]]]:
        coords_entry = self._require("coords")
        coordinates = tuple(
            _identifier(name, coords_entry, column, r"[A-Za-z]", "coordinate")
            for name, column in _split_list(coords_entry)
        )
        fields_entry = self._require("fields")
        fields = tuple(
            _identifier(name, fields_entry, column, r"[A-Za-z][A-Za-z0-9]*", "field")
            for name, column in _split_list(fields_entry)
        )
        seen: Set[str] = set()
        for entry, names in ((coords_entry, coordinates), (fields_entry, fields)):
            for name, (_, column) in zip(names, _split_list(entry)):
                if name in seen:
                    raise ParseError("name declared twice", entry.line, column, name)
                seen.add(name)
        constants: Dict[str, Optional[float]] = {}
        if "constants" in self.header:
            entry = self.header["constants"]
            for item, column in _split_list(entry):
                name, equals, value = item.partition("=")
                name = name.strip()
                _identifier(name, entry, column, r"[A-Za-z][A-Za-z0-9_]*", "constant")
                if name in seen:
                    raise ParseError("name declared twice", entry.line, column, name)
                if name.partition("_")[0] in fields:
                    raise ParseError("constant name clashes with a field derivative", entry.line, column, name)
                seen.add(name)
                constants[name] = None
                if equals:
                    value_column = column + item.index("=") + 1 + (len(value) - len(value.lstrip()))
                    constants[name] = self._number(value.strip(), entry.line, value_column, coordinates)
        return coordinates, fields, constants

    @staticmethod
    def _number(text: str, line: int, column: int, coordinates: Tuple[str, ...]) -> float:
        expr = parse_expression(text, Scope(coordinates=coordinates), line=line, column=column)
        if not expr.is_number:
            raise ParseError("expected a number", line, column, text)
        return float(expr)

    def parse(self) -> ProblemFile:
        coordinates, fields, constants = self._declared_names()
        lagrangian_entry = self._require("lagrangian")
        declared_order: Optional[int] = None
        if "order" in self.header:
            entry = self.header["order"]
            if not re.fullmatch(r"\d+", entry.value) or int(entry.value) < 1:
                raise ParseError("order must be a positive integer", entry.line, entry.column, entry.value)
            declared_order = int(entry.value)
        scope = Scope(
            coordinates=coordinates,
            fields=fields,
            constants=tuple(constants),
            max_order=declared_order,
            allow_action=True,
        )
        lagrangian = simplify(
            parse_expression(lagrangian_entry.value, scope, line=lagrangian_entry.line, column=lagrangian_entry.column)
        )
        order = declared_order or max(
            [len(atom.name.partition("_")[2]) for atom in lagrangian.free_symbols if isinstance(atom, FieldJet)] + [1]
        )
        spec = LagrangianSpec(
            coordinates=coordinates, fields=fields, order=order, constants=constants, lagrangian=lagrangian
        )
        data_scope = Scope(coordinates=coordinates, constants=tuple(constants))
        solver = self._solver(spec, data_scope) if "solver" in self.blocks else None
        section = self._section(spec, data_scope) if "section" in self.blocks else None
        logger.debug("parsed problem with m = %d, r = %d", spec.dimension, spec.order)
        return ProblemFile(spec=spec, solver=solver, section=section)

    @staticmethod
    def _range(entry: _Entry, scope: Scope) -> Tuple[float, float]:
        items = _split_list(entry)
        if len(items) != 2:
            raise ParseError("expected `start, stop`", entry.line, entry.column, entry.value)
        start, stop = (_ProblemParser._number(text, entry.line, column, scope.coordinates) for text, column in items)
        if stop <= start:
            raise ParseError("range must be increasing", entry.line, entry.column, entry.value)
        return start, stop

    @staticmethod
    def _count(entry: _Entry) -> int:
        if not re.fullmatch(r"\d+", entry.value) or int(entry.value) < 1:
            raise ParseError("expected a positive integer", entry.line, entry.column, entry.value)
        return int(entry.value)

    @staticmethod
    def _expression(entry: _Entry, scope: Scope) -> Expr:
        return simplify(parse_expression(entry.value, scope, line=entry.line, column=entry.column))

    def _solver(self, spec: LagrangianSpec, scope: Scope) -> SolverBlock:
        entries = self.blocks["solver"]
        default = Scheme.RK4 if spec.is_mechanics else None
        scheme_entry = entries.get("scheme")
        if scheme_entry is not None:
            try:
                scheme = Scheme(scheme_entry.value)
            except ValueError as ex:
                raise ParseError("unknown scheme", scheme_entry.line, scheme_entry.column, scheme_entry.value) from ex
        elif default is not None:
            scheme = default
        else:
            raise ParseError("missing `scheme:` in solver block", 1, 1)
        if "t" not in entries:
            raise ParseError("missing `t:` range in solver block", 1, 1)
        initial_keys = self._initial_keys(spec, scheme)
        initial = {}
        for key, entry in entries.items():
            if key in _SOLVER_KEYS:
                continue
            if key not in initial_keys:
                raise ParseError("unknown solver key", entry.line, entry.key_column, key)
            initial[key] = self._expression(entry, scope)
        dt = None
        if "dt" in entries:
            entry = entries["dt"]
            dt = self._number(entry.value, entry.line, entry.column, scope.coordinates)
            if dt <= 0:
                raise ParseError("dt must be positive", entry.line, entry.column, entry.value)
        return SolverBlock(
            scheme=scheme,
            t_range=self._range(entries["t"], scope),
            x_range=self._range(entries["x"], scope) if "x" in entries else None,
            nt=self._count(entries["nt"]) if "nt" in entries else None,
            nx=self._count(entries["nx"]) if "nx" in entries else None,
            dt=dt,
            substeps=self._count(entries["substeps"]) if "substeps" in entries else None,
            initial=initial,
        )

    @staticmethod
    def _initial_keys(spec: LagrangianSpec, scheme: Scheme) -> Tuple[str, ...]:
        if scheme is Scheme.RK4:
            time = spec.coordinates[0]
            return (*spec.fields, *(f"{field}_{time}" for field in spec.fields), "z")
        if scheme is Scheme.STRING:
            return ("u", "u_t")
        return ("u_x",)

    def _section(self, spec: LagrangianSpec, scope: Scope) -> SectionBlock:
        entries = self.blocks["section"]
        for key, entry in entries.items():
            if key not in _SECTION_KEYS:
                raise ParseError("unknown section key", entry.line, entry.key_column, key)
        missing = [key for key in _SECTION_KEYS if key not in entries]
        if missing:
            raise ParseError(f"missing `{missing[0]}:` in section block", 1, 1)
        if spec.dimension != 2:
            raise ParseError("sections need exactly two coordinates", 1, 1)
        return SectionBlock(
            t_range=self._range(entries["t"], scope),
            x_range=self._range(entries["x"], scope),
            nt=self._count(entries["nt"]),
            nx=self._count(entries["nx"]),
            u=self._expression(entries["u"], scope),
            z_t=self._expression(entries["z^t"], scope),
            z_x=self._expression(entries["z^x"], scope),
        )


def parse_problem(text: str) -> ProblemFile:
    return _ProblemParser(text).parse()
