"""
Self-checks behind ``homog verify``.

Every suite returns a list of CheckResult; a suite passes when all of its
checks pass. The checks are the structural identities and inequalities the
toolkit relies on, evaluated on small seeded problems.
"""

import logging
from math import sqrt

import numpy as np
from django.conf import settings

from cells.models import CoefficientTensor
from cells.operators import check_ellipticity
from cells.problems import homogenize, solve_second_cell_from_residual_tensor
from solvers.approximations import operator_norm_ratios
from solvers.homogenized import (
    HomogenizedSymbol, check_elliptic_estimate, check_resolvent_inequality, resolvent_residual, solve_perturbed,
)
from spectral.fields import (
    Grid, PeriodicField, derivative, from_function, mean, multiply, random_band_limited, sample_oscillatory,
    seminorm, torus_for,
)
from spectral.multiindex import MultiIndex
from spectral.smoothing import iterated_steklov, steklov

from .models import CheckResult

logger = logging.getLogger(__name__)

SUITES = ('smoothing', 'cell', 'potentials', 'resolvent')
TWO_PI = 2.0 * np.pi
ROUNDOFF = 1.0 + 1e-12


def _at_most(suite, name, value, bound):
    return CheckResult(suite, name, bool(value <= bound), float(value), f'<= {bound:.6g}')


def _at_least(suite, name, value, bound):
    return CheckResult(suite, name, bool(value >= bound), float(value), f'>= {bound:.6g}')


def _unit_vectors(dim):
    return [MultiIndex(tuple(int(i == j) for i in range(dim))) for j in range(dim)]


def _gradient(f):
    return [derivative(f, e) for e in _unit_vectors(f.grid.dim)]


def _norm(fields):
    return sqrt(sum(field.l2_norm() ** 2 for field in fields))


def cosine_tensor(n=64):
    grid = Grid.cell(n, 1)
    a = from_function(grid, lambda y: 2.0 + np.cos(TWO_PI * y))
    return CoefficientTensor(2, 1, {((2,), (2,)): a}, lambda0=1.0, lambda1=3.0)


def nonsymmetric_tensor(n=8):
    grid = Grid.cell(n, 2)
    entries = {
        ((2, 0), (2, 0)): from_function(grid, lambda y1, y2: 2.0 + 0.5 * np.cos(TWO_PI * y1)),
        ((1, 1), (1, 1)): PeriodicField.constant(grid, 2.0),
        ((0, 2), (0, 2)): from_function(grid, lambda y1, y2: 2.0 + 0.5 * np.cos(TWO_PI * y2)),
        ((2, 0), (1, 1)): from_function(grid, lambda y1, y2: 0.3 * np.sin(TWO_PI * (y1 + y2))),
    }
    return CoefficientTensor(2, 2, entries, lambda0=1.0, lambda1=2.5)


def laminate_tensor(n=16):
    """d=2, m=2 laminate in y1 whose diagonal and coupling entries oscillate in quadrature; b ≠ 0."""
    grid = Grid.cell(n, 2)
    entries = {
        ((2, 0), (2, 0)): from_function(grid, lambda y1, y2: 2.0 + 1.2 * np.cos(TWO_PI * y1)),
        ((1, 1), (1, 1)): PeriodicField.constant(grid, 2.0),
        ((0, 2), (0, 2)): PeriodicField.constant(grid, 1.0),
        ((2, 0), (1, 1)): from_function(grid, lambda y1, y2: 2.0 * np.sin(TWO_PI * y1)),
    }
    return CoefficientTensor(2, 2, entries, lambda0=0.5, lambda1=3.2)


def smoothing_suite(trials=100, seed=0):
    """Nonexpansiveness and approximation properties of S^ε and Θ^ε."""
    rng = np.random.default_rng(seed)
    worst = {'nonexpansive': 0.0, 'first_order': 0.0, 'weighted': 0.0, 'dual_norm': 0.0,
             'smoothed_gradient': 0.0, 'weighted_smoothed_gradient': 0.0}
    for dim in (1, 2):
        cell = Grid.cell(16, dim)
        b = from_function(cell, lambda *y: 2.0 + np.prod([np.cos(TWO_PI * c) for c in y], axis=0))
        weight = sqrt(mean(multiply(b, b)))
        for epsilon in (0.25, 0.125):
            torus = torus_for(cell, epsilon, 1.0)
            b_eps = sample_oscillatory(b, epsilon, torus)
            for _ in range(trials):
                phi = random_band_limited(torus, 4, rng)
                norm = phi.l2_norm()
                smoothed = steklov(phi, epsilon)
                worst['nonexpansive'] = max(worst['nonexpansive'], smoothed.l2_norm() / norm)
                worst['first_order'] = max(worst['first_order'], (smoothed - phi).l2_norm()
                                           / (sqrt(dim) / 2.0 * epsilon * _norm(_gradient(phi))))
                worst['weighted'] = max(worst['weighted'], multiply(b_eps, smoothed).l2_norm() / (weight * norm))
                worst['dual_norm'] = max(worst['dual_norm'], 12.0 * (iterated_steklov(phi, epsilon) - phi)
                                         .sobolev_norm(-2) / (epsilon ** 2 * norm))
                gradient = [iterated_steklov(field, epsilon) for field in _gradient(phi)]
                scale = 2.0 * sqrt(dim) * norm / epsilon
                worst['smoothed_gradient'] = max(worst['smoothed_gradient'], _norm(gradient) / scale)
                worst['weighted_smoothed_gradient'] = max(
                    worst['weighted_smoothed_gradient'],
                    _norm([multiply(b_eps, field) for field in gradient]) / (weight * scale))

    torus = Grid.torus(1.0, 32, 2)
    phi = from_function(torus, lambda x1, x2: np.sin(TWO_PI * x1) * np.cos(TWO_PI * x2) + np.cos(2 * TWO_PI * x2))
    epsilons = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    errors = [(iterated_steklov(phi, epsilon) - phi).l2_norm() for epsilon in epsilons]
    slope = float(np.polyfit(np.log(epsilons), np.log(errors), 1)[0])

    results = [_at_most('smoothing', name, value, ROUNDOFF) for name, value in worst.items()]
    results.append(_at_least('smoothing', 'iterated_second_order_slope', slope, 1.9))
    return results


def cell_suite():
    """Constant-coefficient exactness and the one-dimensional oracle â = √3."""
    results = []
    grid = Grid.cell(8, 2)
    matrix = np.array([[2.0, 0.0, 0.5], [0.0, 1.5, 0.0], [0.5, 0.0, 2.0]])
    constant = homogenize(CoefficientTensor.constant(matrix, 2, 2, grid, 1.0, 2.0))
    fields = list(constant.N_first.values()) + list(constant.N_second.values()) + list(constant.g.values()) \
        + list(constant.g_tilde.values())
    results.append(_at_most('cell', 'constant_fields_vanish', max(f.sup_norm() for f in fields), 1e-12))
    results.append(_at_most('cell', 'constant_a_hat', float(np.max(np.abs(constant.a_hat - matrix))), 1e-12))
    results.append(_at_most('cell', 'constant_b', float(np.max(np.abs(constant.b))), 1e-12))

    a = cosine_tensor(64)
    data = homogenize(a, tol=1e-12)
    results.append(_at_most('cell', 'cosine_a_hat', abs(data.a_hat[0, 0] - sqrt(3.0)), 1e-6))
    second = derivative(data.N_first[MultiIndex.of(2)], (2,))
    oracle = sqrt(3.0) / a.entries[(MultiIndex.of(2), MultiIndex.of(2))].values - 1.0
    results.append(_at_most('cell', 'cosine_corrector', float(np.max(np.abs(second.values - oracle))), 1e-8))
    results.append(_at_least('cell', 'coercivity_ratio',
                             check_ellipticity(a, settings.HOMOG['ELLIPTICITY_TRIALS'], strict=False),
                             a.lambda0 * (1.0 - settings.HOMOG['ELLIPTICITY_SLACK'])))
    return results


def _variation(values):
    """max/min of nonnegative values; 1 when all of them vanish."""
    low, high = min(values), max(values)
    if high == 0.0:
        return 1.0
    return high / low if low > 0.0 else float('inf')


def _potential_skew_defect(data):
    worst = 0.0
    for potentials in (data.G, data.G_tilde):
        for (gamma, alpha, last), field in potentials.items():
            mirror = potentials[(alpha, gamma, last)]
            worst = max(worst, float(np.max(np.abs(field.values + mirror.values))))
    return worst


def potentials_suite():
    """Divergence residuals, skew symmetry, the two assembly routes and potential bound stability."""
    tol = settings.HOMOG['DIVERGENCE_TOL']
    a = nonsymmetric_tensor(8)
    data = homogenize(a, tol=1e-12)
    diagnostics = data.diagnostics
    residual = max(list(diagnostics['divergence_residual_g'].values())
                   + list(diagnostics['divergence_residual_g_tilde'].values()))
    results = [
        _at_most('potentials', 'divergence_residual', residual, tol),
        _at_most('potentials', 'skew_symmetry', _potential_skew_defect(data), 0.0),
        _at_most('potentials', 'potential_identity', diagnostics['potential_identity_error'], tol),
    ]
    route_gap = 0.0
    for delta, N in data.N_second.items():
        other = solve_second_cell_from_residual_tensor(a, data.N_first, data.g, delta, tol=1e-12)
        route_gap = max(route_gap, seminorm(other - N, a.order) / max(seminorm(N, a.order), 1e-300))
    results.append(_at_most('potentials', 'assembly_routes', route_gap, 1e-8))

    refined = homogenize(nonsymmetric_tensor(16))
    coarse, fine = diagnostics['potential_constant'], refined.diagnostics['potential_constant']
    results.append(_at_most('potentials', 'potential_constant_drift', abs(fine / coarse - 1.0), 0.2))
    logger.info('Potential constants: %.4g (n=8), %.4g (n=16)', coarse, fine)
    return results


def _resolvent_checks(label, data, epsilons, source, max_mode, samples, rng):
    symbol = HomogenizedSymbol.from_data(data)
    residual, inequality, elliptic, norms = 0.0, 0.0, [], []
    for epsilon in epsilons:
        torus = torus_for(data.grid, epsilon, 1.0)
        f = from_function(torus, source)
        residual = max(residual, resolvent_residual(symbol, epsilon, solve_perturbed(symbol, epsilon, f), f))
        inequality = max(inequality, check_resolvent_inequality(symbol, epsilon, f))
        elliptic.append(check_elliptic_estimate(symbol, epsilon, f))
        sources = [random_band_limited(torus, max_mode, rng) for _ in range(samples)]
        norms.append(operator_norm_ratios(data, epsilon, sources, symbol))
    results = [
        _at_most('resolvent', f'{label}_resolvent_residual', residual, 1e-12),
        _at_most('resolvent', f'{label}_resolvent_inequality', inequality, ROUNDOFF),
        _at_most('resolvent', f'{label}_elliptic_estimate_drift', max(elliptic) / min(elliptic) - 1.0, 0.05),
    ]
    for key in ('K2_Hm', 'K3_Hm'):
        values = [entry[key] for entry in norms]
        results.append(_at_most('resolvent', f'{label}_{key}_variation', _variation(values), 2.0))
    return results


def resolvent_suite(samples=20, seed=0):
    """
    Resolvent identity and inequality, elliptic estimate and corrector bounds
    across ε, on the one-dimensional cosine tensor (b = 0) and on a planar
    laminate with b ≠ 0.
    """
    rng = np.random.default_rng(seed)
    results = _resolvent_checks(
        'cosine', homogenize(cosine_tensor(32)), (0.25, 0.125, 0.0625, 0.03125),
        lambda x: np.sin(TWO_PI * x) + 0.5 * np.cos(2 * TWO_PI * x), 4, samples, rng)
    laminate = homogenize(laminate_tensor(16))
    logger.info('Laminate b: max |b| = %.4g', float(np.max(np.abs(laminate.b))))
    results += _resolvent_checks(
        'laminate', laminate, (0.25, 0.125, 0.0625),
        lambda x1, x2: np.sin(TWO_PI * (x1 + x2)) + 0.5 * np.cos(2 * TWO_PI * x2), 2, samples // 2, rng)
    results.append(_at_least('resolvent', 'laminate_b_magnitude', float(np.max(np.abs(laminate.b))), 1e-2))
    return results


RUNNERS = {
    'smoothing': smoothing_suite,
    'cell': cell_suite,
    'potentials': potentials_suite,
    'resolvent': resolvent_suite,
}


def run_suite(name):
    """Results of one suite, or of every suite for ``name='all'``."""
    names = SUITES if name == 'all' else (name,)
    results = []
    for suite in names:
        if suite not in RUNNERS:
            raise ValueError(f'Unknown suite {suite!r}; expected one of {SUITES + ("all",)}.')
        suite_results = RUNNERS[suite]()
        failed = sum(not result.passed for result in suite_results)
        logger.info('Suite %s: %d checks, %d failed', suite, len(suite_results), failed)
        results.extend(suite_results)
    return results
