"""
The fine-scale problem (A_ε + 1)u^ε = f on the torus.

Coefficients are resampled as a(x/ε) with exactly n torus points per ε-cell,
so the discrete A_ε is the cell operator tiled over the torus.
"""

import logging

from django.conf import settings

from cells.krylov import solve_preconditioned
from cells.operators import DivergenceFormOperator
from spectral.exceptions import ResolutionMismatch
from spectral.fields import PeriodicField, cells_per_period

from .models import FineSolution

logger = logging.getLogger(__name__)


class FineOperator:
    """A_ε + 1 on a torus grid, with its diagonal spectral preconditioner."""

    def __init__(self, a, epsilon, torus, dealias=False):
        cells_per_period(torus.period, epsilon)
        if torus.dim != a.dim:
            raise ResolutionMismatch(f'A {a.dim}-d tensor cannot act on a {torus.dim}-d torus.')
        self.epsilon = epsilon
        self.grid = torus
        self.operator = DivergenceFormOperator.on_torus(a, epsilon, torus, dealias)

    def apply(self, values):
        return self.operator.apply(values) + values

    def preconditioner(self):
        return 1.0 / (1.0 + self.operator.reference_symbol())

    def energy_ratio(self, u, f):
        norm_f = f.l2_norm()
        return u.sobolev_norm(self.operator.order) / norm_f if norm_f > 0 else 0.0


def apply_A_eps(a, epsilon, u, dealias=False):
    """(−1)^m Σ D^α(a_{αβ}(x/ε) D^β u) on the grid of ``u``."""
    operator = DivergenceFormOperator.on_torus(a, epsilon, u.grid, dealias)
    return PeriodicField(u.grid, values=operator.apply(u.values))


def solve_fine(a, epsilon, f, tol=None, max_iter=None, restart=None, dealias=False):
    """
    u^ε with preconditioned relative residual at most ``tol``.

    Raises SolverDidNotConverge (with the residual history) when the budget
    runs out; that usually means n is too small for the coefficient contrast.
    """
    config = settings.HOMOG
    tol = config['SOLVER_TOL'] if tol is None else tol
    max_iter = config['SOLVER_MAX_ITER'] if max_iter is None else max_iter
    restart = config['GMRES_RESTART'] if restart is None else restart
    fine = FineOperator(a, epsilon, f.grid, dealias)
    result = solve_preconditioned(fine.apply, fine.preconditioner(), f.values, f.grid, tol, max_iter, restart,
                                  label=f'fine problem ε={epsilon:g}')
    u = PeriodicField(f.grid, values=result.solution)
    ratio = fine.energy_ratio(u, f)
    logger.info('Fine solve at ε=%g on %s: %d iterations, ‖u‖_H^%d/‖f‖ = %.4g',
                epsilon, f.grid.describe(), result.iterations, a.order, ratio)
    return FineSolution(u, result.iterations, result.residual, result.history, ratio)
