"""SONC lower bounds via second-order cone programming, plus certificate checkers.

Submodules
----------
polyalg
    sparse rational polynomials, monomial vectors, exact linear algebra
circuit
    circuits, circuit numbers and the nonnegativity criterion
socrep
    compilation of SONC membership / lower bounds into cone programs
solver
    primal-dual interior-point method for LP + SOC programs
soscert
    Gram, quadratic-module and copositivity certificate verification
neighborly
    general-position configurations and vanishing-polynomial witnesses
cli
    the ``sonc`` command
"""
from .polyalg import Exponent, SparsePoly, evaluate, monomial_vector, parse_poly, space_dim

__version__ = "0.1.0"

__all__ = ["Exponent", "SparsePoly", "parse_poly", "evaluate", "monomial_vector", "space_dim"]
