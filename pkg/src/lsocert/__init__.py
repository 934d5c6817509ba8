"""lsocert: certified polynomial bounds for linearly-solvable stochastic optimal control.

The toolkit turns the linear desirability PDE of a control problem into
sum-of-squares programs whose solutions are certified lower/upper bounds on
the desirability (hence upper/lower bounds on the value function), solves
them with a built-in interior-point conic solver, and cross-checks results
against a finite-difference PDE oracle and Monte Carlo policy rollouts.
"""

from .poly import Polynomial, VariableSpace, monomial_basis, parse, render

__version__ = "0.1.0"

__all__ = [
    "Polynomial",
    "VariableSpace",
    "monomial_basis",
    "parse",
    "render",
    "__version__",
]
