"""
Left-preconditioned GMRES on grid value vectors.

The preconditioner is a diagonal spectral multiplier. Modes where it is zero are
removed from the Krylov space altogether, which is how the cell solves pin the
mean (and the other unresolved modes) of their solutions.
"""

import logging
import math

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from spectral.exceptions import NonFiniteValue, SolverDidNotConverge
from spectral.fields import to_spectral, to_values

from .models import KrylovResult

logger = logging.getLogger(__name__)


def solve_preconditioned(apply, inverse_symbol, rhs, grid, tol, max_iter, restart, label='solve'):
    """
    Solve ``apply(x) = rhs`` for x on ``grid`` with GMRES applied to P⁻¹A.

    ``apply`` maps a value array of ``grid.shape`` to another. ``inverse_symbol``
    is P⁻¹ in the rfft layout. ``tol`` bounds the preconditioned relative
    residual ‖P⁻¹(b − Ax)‖/‖P⁻¹b‖; ``max_iter`` counts inner iterations.
    """
    if tol <= 0:
        raise ValueError(f'Solver tolerance must be positive, got {tol}.')
    shape = grid.shape

    def precondition(vector):
        return to_values(to_spectral(vector.reshape(shape), grid) * inverse_symbol, grid).ravel()

    def matvec(vector):
        return precondition(apply(np.asarray(vector).reshape(shape)).ravel())

    rhs = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise NonFiniteValue(f'{label}: right-hand side contains NaN or Inf.')
    preconditioned_rhs = precondition(rhs.ravel())
    rhs_norm = float(np.linalg.norm(preconditioned_rhs))
    if rhs_norm == 0.0:
        logger.debug('%s: zero right-hand side, returning the zero solution', label)
        return KrylovResult(np.zeros(shape), 0, 0.0, [])

    size = grid.size
    restart = max(1, min(restart, size))
    history = []
    operator = LinearOperator((size, size), matvec=matvec, dtype=float)
    solution, info = gmres(
        operator, preconditioned_rhs,
        rtol=tol, atol=0.0, restart=restart,
        maxiter=max(1, math.ceil(max_iter / restart)),
        callback=history.append, callback_type='pr_norm',
    )
    if not np.all(np.isfinite(solution)):
        raise NonFiniteValue(f'{label}: the Krylov iterate is not finite.')
    residual = float(np.linalg.norm(preconditioned_rhs - matvec(solution))) / rhs_norm
    logger.info('%s: %d GMRES iterations, preconditioned residual %.3e', label, len(history), residual)
    logger.debug('%s: residual history %s', label, history)
    if info != 0 and residual > tol:
        raise SolverDidNotConverge(
            f'{label}: GMRES stopped after {len(history)} iterations at residual {residual:.3e} '
            f'(tolerance {tol:.1e}); raise the resolution or the iteration budget.',
            residual_history=history, iterations=len(history))
    return KrylovResult(solution.reshape(shape), len(history), residual, history)
