"""Expression kernel.

Expressions are sympy trees whose atoms are the four symbol kinds below. The canonical form is
the fully expanded sum of monomials (function applications stay opaque atoms, their arguments
canonicalized recursively), so two polynomial expressions are equal iff their canonical forms
are structurally identical.
"""
import logging
from typing import Any, Callable, List, Mapping, Sequence, Tuple, Union

import numpy as np
import sympy

from herglotz.errors import DomainError, UnboundAtomError

logger = logging.getLogger(__name__)

Expr = sympy.Expr
Number = Union[int, float]


class Coordinate(sympy.Symbol):
    rank = 0


class Constant(sympy.Symbol):
    rank = 1


class FieldJet(sympy.Symbol):
    rank = 2


class ActionJet(sympy.Symbol):
    rank = 3


Atom = Union[Coordinate, Constant, FieldJet, ActionJet]

FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "exp": sympy.exp,
    "log": sympy.log,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "tanh": sympy.tanh,
    "sech": sympy.sech,
}

_FUNCTION_RANK = 4


def atom_key(atom: sympy.Basic) -> Tuple[int, str]:
    """Total order on atoms: coordinates < constants < jet variables < function atoms."""
    if isinstance(atom, (Coordinate, Constant, FieldJet, ActionJet)):
        return atom.rank, atom.name
    if atom is sympy.pi:
        return Constant.rank, "pi"
    if atom is sympy.E:
        return Constant.rank, "exp(1)"
    if isinstance(atom, sympy.Function):
        return _FUNCTION_RANK, str(atom)
    return _FUNCTION_RANK + 1, str(atom)


def simplify(expr: Any) -> Expr:
    return sympy.expand(
        sympy.sympify(expr),
        deep=True,
        mul=True,
        multinomial=True,
        power_base=False,
        power_exp=False,
        log=False,
    )


def partial_deriv(expr: Any, atom: sympy.Symbol) -> Expr:
    return simplify(sympy.diff(sympy.sympify(expr), atom))


def substitute(expr: Any, bindings: Mapping[sympy.Symbol, Any]) -> Expr:
    replacements = {atom: sympy.sympify(value) for atom, value in bindings.items()}
    return simplify(sympy.sympify(expr).xreplace(replacements))


def is_zero(expr: Any) -> bool:
    """Exact on polynomials over opaque function atoms; identities between functions
    (e.g. sin² + cos² = 1) are not recognised."""
    canonical = simplify(expr)
    return bool(canonical.is_Number and canonical.is_zero)


def free_atoms(expr: Any) -> List[sympy.Symbol]:
    return sorted(sympy.sympify(expr).free_symbols, key=atom_key)


def _as_sympy_number(value: Any) -> sympy.Expr:
    if isinstance(value, sympy.Basic):
        return value
    if isinstance(value, (int, np.integer)):
        return sympy.Integer(int(value))
    return sympy.Float(float(value))


def _check_bound(expr: Expr, atoms: Sequence[sympy.Symbol]) -> None:
    known = set(atoms)
    missing = [atom for atom in free_atoms(expr) if atom not in known]
    if missing:
        raise UnboundAtomError(missing[0].name)


def eval_numeric(expr: Any, binding: Mapping[sympy.Symbol, Any]) -> float:
    expr = sympy.sympify(expr)
    _check_bound(expr, list(binding))
    values = {atom: _as_sympy_number(value) for atom, value in binding.items()}
    for node in sorted(expr.atoms(sympy.log), key=str):
        argument = complex(node.args[0].xreplace(values).evalf(20))
        if argument.imag != 0 or argument.real <= 0:
            raise DomainError(f"log of non-positive argument {argument.real:g} in `{node}`")
    result = expr.xreplace(values)
    if not result.is_Number:
        result = result.evalf(20)
    value = complex(result)
    if value.imag != 0:
        raise DomainError(f"Expression `{expr}` evaluates to the complex number {value}")
    return float(value.real)


NumericFunction = Callable[..., np.ndarray]


def compile_numeric(expr: Any, atoms: Sequence[sympy.Symbol]) -> NumericFunction:
    """Vectorised numpy callable taking one array (or scalar) per atom, in order."""
    expr = sympy.sympify(expr)
    _check_bound(expr, atoms)
    placeholders = [sympy.Symbol(f"_a{index}") for index in range(len(atoms))]
    rewritten = expr.xreplace(dict(zip(atoms, placeholders)))
    rewritten = rewritten.replace(sympy.sech, lambda argument: 1 / sympy.cosh(argument))
    function = sympy.lambdify(placeholders, rewritten, modules="numpy")

    def evaluate(*arrays: Any) -> np.ndarray:
        shape = np.broadcast(*arrays).shape if arrays else ()
        return np.broadcast_to(np.asarray(function(*arrays), dtype=float), shape).copy()

    logger.debug("compiled %s over %d atoms", expr, len(atoms))
    return evaluate
