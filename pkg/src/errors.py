# src/errors.py

import numpy as np


class EigensolverError(Exception):
    """Base class for every error raised by this package."""


class DomainError(EigensolverError, ValueError):
    """Input outside the domain of an operation (zero vector, bad spec, ...)."""


class MatrixFormatError(EigensolverError, ValueError):
    """Malformed Matrix Market / vector / config file."""


class NearSingularError(EigensolverError, np.linalg.LinAlgError):
    """
    Shifted system is numerically singular.

    `solution` holds the solve result when every pivot was nonzero,
    otherwise None.
    """

    def __init__(self, pivot_ratio, solution=None):
        super().__init__(f"near-singular shifted system (pivot ratio {pivot_ratio:.3e})")
        self.pivot_ratio = pivot_ratio
        self.solution = solution


class NotEstimableError(EigensolverError):
    """Too few usable trace entries to fit a convergence order."""


class OracleError(EigensolverError):
    """Jacobi oracle did not converge."""
