from importlib.metadata import version

from herglotz.calculus import (
    EquationSet,
    closed_action_residuals,
    commutator_residual,
    constraint_expression,
    derive_equations,
    derive_first_order_equations,
    derive_higher_order_equations,
    derive_mechanics_equations,
    dissipation_form,
    herglotz_multi_operator,
    herglotz_operator,
    total_derivative,
)
from herglotz.fields import (
    Section,
    analytic_section,
    reconstruct_action_density,
    solve_damped_kdv,
    solve_damped_string,
)
from herglotz.grid import FieldSolution, Grid2D
from herglotz.jet import LagrangianSpec
from herglotz.mechanics import (
    Trajectory,
    action_gradient_check,
    contact_action,
    integrate,
    integrate_path,
    multiplier_profile,
)
from herglotz.parser import parse_expression, parse_problem
from herglotz.printer import print_equation, print_expression
from herglotz.residuals import discrete_action_gradient_check, evaluate_residuals

__version__ = version(__package__)
__all__ = [
    "EquationSet",
    "FieldSolution",
    "Grid2D",
    "LagrangianSpec",
    "Section",
    "Trajectory",
    "action_gradient_check",
    "analytic_section",
    "closed_action_residuals",
    "commutator_residual",
    "constraint_expression",
    "contact_action",
    "derive_equations",
    "derive_first_order_equations",
    "derive_higher_order_equations",
    "derive_mechanics_equations",
    "discrete_action_gradient_check",
    "dissipation_form",
    "evaluate_residuals",
    "herglotz_multi_operator",
    "herglotz_operator",
    "integrate",
    "integrate_path",
    "multiplier_profile",
    "parse_expression",
    "parse_problem",
    "print_equation",
    "print_expression",
    "reconstruct_action_density",
    "solve_damped_kdv",
    "solve_damped_string",
    "total_derivative",
]
