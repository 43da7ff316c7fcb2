"""Multivariate orthogonal polynomials on boxes: block factorization of the
moment matrix, quasi-determinant formulas, Christoffel and Geronimus
transformations, and the associated Toda and KP flows."""

from .errors import QuasitauError
from .measure import FlowState, MeasureSpec, jacobi_box, lebesgue
from .moments import moment_matrix
from .mvopr import PolynomialSystem, build_system, factorize

__version__ = "0.1.0"

__all__ = [
    "FlowState",
    "MeasureSpec",
    "PolynomialSystem",
    "QuasitauError",
    "build_system",
    "factorize",
    "jacobi_box",
    "lebesgue",
    "moment_matrix",
]
