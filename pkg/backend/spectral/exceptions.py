"""
Exceptions shared by every HomogLab app.

Everything raised on purpose derives from ``HomogenizationError`` so the
management commands can tell a numerical or configuration failure apart from a
programming error.
"""


class HomogenizationError(Exception):
    """Base class for errors raised by the homogenization toolkit."""


class InvalidMultiIndex(HomogenizationError, ValueError):
    """A multiindex is negative, of the wrong dimension or not comparable."""


class ResolutionMismatch(HomogenizationError, ValueError):
    """Grids, periods and ε do not line up (L/ε not integral, n·L/ε ≠ N, ...)."""


class InvalidKernel(HomogenizationError, ValueError):
    """A smoothing kernel is not unit-mass, even or nonexpansive."""


class PreconditionViolation(HomogenizationError, ValueError):
    """An operation received data outside its domain (nonzero mean, divergence, ...)."""


class EllipticityViolation(HomogenizationError):
    """A coefficient tensor breaks the declared boundedness or coercivity constants."""


class NonFiniteValue(HomogenizationError):
    """A NaN or an infinity showed up in a computed quantity."""


class SolverDidNotConverge(HomogenizationError):
    """
    The Krylov iteration hit its budget before reaching the tolerance.

    ``residual_history`` holds the preconditioned relative residuals seen so
    far; a slowly decaying history usually means the resolution is too low for
    the coefficient contrast.
    """

    def __init__(self, message, residual_history=(), iterations=0):
        super().__init__(message)
        self.residual_history = list(residual_history)
        self.iterations = iterations
