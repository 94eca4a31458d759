from typing import Any, List, Tuple

import sympy

from herglotz.expr import ActionJet, FieldJet, atom_key, simplify

_Factor = Tuple[sympy.Basic, sympy.Expr]


def _base_exp(factor: sympy.Expr) -> _Factor:
    # not `as_base_exp`: that would turn exp(a) into (E, a)
    if factor.is_Pow:
        return factor.base, factor.exp
    return factor, sympy.S.One


def _split(term: sympy.Expr) -> Tuple[sympy.Number, List[_Factor]]:
    coeff, rest = term.as_coeff_Mul()
    factors = [_base_exp(factor) for factor in sympy.Mul.make_args(rest) if factor is not sympy.S.One]
    factors.sort(key=lambda factor: (atom_key(factor[0]), _format_atom(factor[0])))
    return coeff, factors


def _jet_key(atom: sympy.Symbol) -> Tuple[int, int, str, str]:
    # highest derivative order first, then multi-index letters, then the field/component
    base, _, suffix = atom.name.partition("_")
    return -len(suffix), atom.rank, suffix, base


def _term_key(term: sympy.Expr) -> Tuple[Any, ...]:
    _, factors = _split(term)
    jets = []
    others = []
    degree = 0
    for base, exponent in factors:
        if isinstance(base, (FieldJet, ActionJet)):
            jets.extend([_jet_key(base)] * int(exponent))
        else:
            others.append((atom_key(base), _format_atom(base), -exponent))
            degree += int(exponent) if exponent.is_Integer else 0
    jets.sort()
    return (0 if jets else 1), tuple(jets), -degree, tuple(others)


def _format_number(number: sympy.Number) -> str:
    if number.is_Float:
        return repr(float(number))
    if number.is_Integer:
        return str(int(number))
    return f"({number.p}/{number.q})"


def _format_atom(atom: sympy.Basic) -> str:
    if isinstance(atom, sympy.Symbol):
        return str(atom.name)
    if atom is sympy.pi:
        return "pi"
    if atom is sympy.E:
        return "exp(1)"
    if isinstance(atom, sympy.Function):
        return f"{type(atom).__name__}({print_expression(atom.args[0])})"
    if atom.is_Number:
        return _format_number(atom)
    raise ValueError(f"Cannot print `{atom}`: it is outside the expression grammar")


def _format_factor(base: sympy.Basic, exponent: sympy.Expr) -> str:
    text = _format_atom(base)
    if exponent == 1:
        return text
    if exponent.is_Integer and exponent > 0:
        return f"{text}^{int(exponent)}"
    return f"{text}^({_format_number(exponent)})"


def _format_monomial(coeff: sympy.Number, factors: List[_Factor]) -> str:
    pieces = [_format_factor(base, exponent) for base, exponent in factors]
    if not pieces or coeff.is_Float or coeff != 1:
        pieces.insert(0, _format_number(coeff))
    return "*".join(pieces)


def print_expression(expr: Any) -> str:
    """Deterministic surface syntax of the canonical form, accepted back by the parser.

    Terms are ordered by their highest-order jet variable (so `rho*u_tt - tau*u_xx + gamma*rho*u_t`),
    jet-free terms come last by decreasing degree.
    """
    canonical = simplify(expr)
    if canonical.is_Number and canonical.is_zero:
        return "0"
    terms = sorted(sympy.Add.make_args(canonical), key=_term_key)
    text = ""
    for position, term in enumerate(terms):
        coeff, factors = _split(term)
        negative = bool(coeff.is_negative)
        body = _format_monomial(-coeff if negative else coeff, factors)
        if position == 0:
            text = f"-{body}" if negative else body
        else:
            text += f" - {body}" if negative else f" + {body}"
    return text


def print_equation(expr: Any) -> str:
    return f"{print_expression(expr)} = 0"
