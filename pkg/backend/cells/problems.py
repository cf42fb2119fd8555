"""
The unit-cell pipeline: first cell problems, homogenized coefficients, the
residual tensor g and its potential G, the second cell problems and the tensors
b, g̃, G̃.

All cell solves share one operator and one preconditioner; solutions live in W
(zero mean, unresolved modes pinned to zero).
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from django.conf import settings

from spectral.exceptions import NonFiniteValue, PreconditionViolation
from spectral.fields import PeriodicField, derivative, seminorm
from spectral.multiindex import enumerate_multiindices, leibniz_coefficient, sub_multiindices

from .krylov import solve_preconditioned
from .models import HomogenizedData
from .operators import DivergenceFormOperator
from .potentials import check_potential_identity, divergence, divergence_residual, skew_potential

logger = logging.getLogger(__name__)


def _defaults(tol, max_iter, restart):
    config = settings.HOMOG
    return (
        config['SOLVER_TOL'] if tol is None else tol,
        config['SOLVER_MAX_ITER'] if max_iter is None else max_iter,
        config['GMRES_RESTART'] if restart is None else restart,
    )


def cell_preconditioner(operator):
    """1/P on resolved modes, 0 on the unresolved ones (mean included)."""
    symbol = operator.reference_symbol()
    safe = np.where(symbol > 0.0, symbol, 1.0)
    return np.where(symbol > 0.0, 1.0 / safe, 0.0)


def _solve(operator, rhs, tol, max_iter, restart, label):
    tol, max_iter, restart = _defaults(tol, max_iter, restart)
    result = solve_preconditioned(operator.apply, cell_preconditioner(operator), rhs.values,
                                  operator.grid, tol, max_iter, restart, label)
    solution = PeriodicField(operator.grid, values=result.solution, zero_mean=True)
    return solution, result


def solve_cell_with_source(a, source, tol=None, max_iter=None, restart=None, dealias=False,
                           label='cell solve', operator=None):
    """N ∈ W with A N = ``source``. Returns (N, KrylovResult)."""
    operator = operator or DivergenceFormOperator.on_cell(a, dealias)
    return _solve(operator, source, tol, max_iter, restart, label)


def _divergence_form_source(operator, fluxes):
    """(−1)^{m+1} Σ_α D^α h_α as a field on the cell."""
    if not fluxes:
        return PeriodicField.zeros(operator.grid)
    values = -operator.sign * operator.divergence({alpha: h.values for alpha, h in fluxes.items()})
    return PeriodicField(operator.grid, values=values, zero_mean=True)


def first_cell_source(a, gamma, operator=None):
    operator = operator or DivergenceFormOperator.on_cell(a)
    fluxes = {alpha: a.entries[(alpha, gamma)] for alpha in a.indices if (alpha, gamma) in a.entries}
    return _divergence_form_source(operator, fluxes)


def solve_first_cell(a, gamma, tol=None, max_iter=None, restart=None, dealias=False, operator=None,
                     with_result=False):
    """
    N_γ ∈ W with Σ D^α(a_{αβ} D^β N_γ) = −Σ D^α a_{αγ}.

    With ``with_result`` the KrylovResult is returned alongside the field.
    """
    operator = operator or DivergenceFormOperator.on_cell(a, dealias)
    source = first_cell_source(a, gamma, operator)
    solution, result = _solve(operator, source, tol, max_iter, restart, f'first cell problem {gamma}')
    return (solution, result) if with_result else solution


def residual_tensor_raw(operator, a, N_beta, beta):
    """ã_{αβ} = Σ_γ a_{αγ}(e_{γβ} + D^γ N_β) for every α, as value arrays."""
    fluxes = operator.fluxes(N_beta.values)
    raw = {}
    for alpha in a.indices:
        total = np.zeros(operator.grid.shape)
        if alpha in fluxes:
            total = total + fluxes[alpha]
        entry = a.entries.get((alpha, beta))
        if entry is not None:
            total = total + entry.values
        raw[alpha] = total
    return raw


def _l2(values, grid):
    return PeriodicField(grid, values=values).l2_norm()


def residual_scales(a, N_first, operator=None):
    """
    Σ_α (‖a_{αβ}‖ + ‖Σ_γ a_{αγ} D^γ N_β‖) per β, the size the divergence of
    g_{·β} is measured against.
    """
    operator = operator or DivergenceFormOperator.on_cell(a)
    scales = {}
    for beta in a.indices:
        fluxes = operator.fluxes(N_first[beta].values)
        total = sum(_l2(flux, a.grid) for flux in fluxes.values())
        total += sum(a.entries[(alpha, beta)].l2_norm() for alpha in a.indices if (alpha, beta) in a.entries)
        scales[beta] = total
    return scales


def residual_tilde_scales(a, N_second, F, operator=None):
    """The counterpart of ``residual_scales`` for g̃_{·δ}, built from F and the fluxes of N_δ."""
    operator = operator or DivergenceFormOperator.on_cell(a)
    scales = {}
    for delta, N in N_second.items():
        fluxes = operator.fluxes(N.values)
        total = sum(_l2(flux, a.grid) for flux in fluxes.values())
        total += sum(F[(alpha, delta)].l2_norm() for alpha in a.indices)
        scales[delta] = total
    return scales


def homogenized_coefficients(a, N_first, dealias=False, operator=None):
    """
    â_{αβ} = ⟨ã_{αβ}⟩ as a p×p matrix in ``enumerate_multiindices`` order, and
    g_{αβ} = ã_{αβ} − â_{αβ}.
    """
    operator = operator or DivergenceFormOperator.on_cell(a, dealias)
    indices = a.indices
    a_hat = np.zeros((len(indices), len(indices)))
    g = {}
    for j, beta in enumerate(indices):
        raw = residual_tensor_raw(operator, a, N_first[beta], beta)
        for i, alpha in enumerate(indices):
            field = PeriodicField(a.grid, values=raw[alpha])
            a_hat[i, j] = field.mean()
            g[(alpha, beta)] = PeriodicField(a.grid, values=raw[alpha], zero_mean=True)
    return a_hat, g


def potentials_of(g, first_indices, last_indices, tol, scales=None):
    """
    Apply ``skew_potential`` per fixed last index. The result is keyed
    (γ, α, last) with Σ_γ D^γ G[(γ, α, last)] = g[(α, last)].
    """
    G = {}
    for last in last_indices:
        vector = {alpha: g[(alpha, last)] for alpha in first_indices}
        scale = None if scales is None else scales[last]
        for (gamma, alpha), field in skew_potential(vector, tol, scale).items():
            G[(gamma, alpha, last)] = field
    return G


def _second_cell_terms(a, delta):
    """The (c, γ, β, μ) quadruples entering the second cell right-hand side for ``delta``."""
    betas = [beta for beta in sub_multiindices(delta) if beta.order == a.order]
    terms = []
    for gamma in a.indices:
        for beta in betas:
            mu = gamma.offset(beta, delta)
            if mu is None:
                continue
            terms.append((leibniz_coefficient(gamma, mu), gamma, beta, mu))
    return terms


def second_cell_rhs(a, N_first, G):
    """
    F_{α,δ} = Σ c_{γ,μ}(a_{αγ} D^μ N_β + D^μ G_{αγβ}) with μ = β + γ − δ,
    over the pairs (γ, β) with β ≤ δ and μ a multiindex.
    """
    grid = a.grid
    F = {}
    for delta in enumerate_multiindices(a.order + 1, a.dim):
        terms = _second_cell_terms(a, delta)
        for alpha in a.indices:
            total = np.zeros(grid.shape)
            for c, gamma, beta, mu in terms:
                gradient = derivative(N_first[beta], mu).values
                entry = a.entries.get((alpha, gamma))
                if entry is not None:
                    total = total + c * entry.values * gradient
                total = total + c * derivative(G[(alpha, gamma, beta)], mu).values
            F[(alpha, delta)] = PeriodicField(grid, values=total)
    return F


def solve_second_cell(a, F, delta, tol=None, max_iter=None, restart=None, dealias=False, operator=None,
                      with_result=False):
    """N_δ ∈ W with Σ D^α(a_{αβ} D^β N_δ) = −Σ_α D^α F_{α,δ}."""
    operator = operator or DivergenceFormOperator.on_cell(a, dealias)
    fluxes = {alpha: F[(alpha, delta)] for alpha in a.indices}
    source = _divergence_form_source(operator, fluxes)
    solution, result = _solve(operator, source, tol, max_iter, restart, f'second cell problem {delta}')
    return (solution, result) if with_result else solution


def second_cell_source_from_residual_tensor(a, N_first, g, delta):
    """
    The right-hand side s of Σ D^α(a_{αβ} D^β N_δ) = s assembled without G:
    s = −Σ_α D^α[Σ c a_{αγ} D^μ N_β] − Σ c D^μ g_{γβ}.

    Agrees with the divergence of F up to the divergence residual of g.
    """
    grid = a.grid
    terms = _second_cell_terms(a, delta)
    fluxes = {}
    spectrum = np.zeros(grid.spectral_shape, dtype=complex)
    for c, gamma, beta, mu in terms:
        gradient = derivative(N_first[beta], mu)
        for alpha in a.indices:
            entry = a.entries.get((alpha, gamma))
            if entry is not None:
                fluxes[alpha] = fluxes.get(alpha, 0.0) + c * entry.values * gradient.values
        spectrum = spectrum + c * derivative(g[(gamma, beta)], mu).spectral
    divergence_part = divergence({alpha: PeriodicField(grid, values=h) for alpha, h in fluxes.items()}) \
        if fluxes else PeriodicField.zeros(grid)
    return PeriodicField(grid, spectral=-divergence_part.spectral - spectrum, zero_mean=True)


def solve_second_cell_from_residual_tensor(a, N_first, g, delta, tol=None, max_iter=None, restart=None):
    """N_δ through the G-free assembly route."""
    source = second_cell_source_from_residual_tensor(a, N_first, g, delta)
    operator = DivergenceFormOperator.on_cell(a)
    rhs = PeriodicField(a.grid, spectral=operator.sign * source.spectral, zero_mean=True)
    solution, _ = solve_cell_with_source(a, rhs, tol, max_iter, restart, label=f'second cell problem {delta} (g route)',
                                         operator=operator)
    return solution


def b_and_gtilde(a, N_second, F, tol=None, dealias=False, operator=None):
    """
    b_{αδ} = ⟨Σ_β a_{αβ} D^β N_δ + F_{α,δ}⟩, g̃_{αδ} the same field minus b_{αδ},
    and G̃ from ``skew_potential`` per fixed δ.
    """
    operator = operator or DivergenceFormOperator.on_cell(a, dealias)
    tol = settings.HOMOG['DIVERGENCE_TOL'] if tol is None else tol
    first = a.indices
    second = enumerate_multiindices(a.order + 1, a.dim)
    b = np.zeros((len(first), len(second)))
    g_tilde = {}
    for j, delta in enumerate(second):
        fluxes = operator.fluxes(N_second[delta].values)
        for i, alpha in enumerate(first):
            raw = F[(alpha, delta)].values
            if alpha in fluxes:
                raw = raw + fluxes[alpha]
            b[i, j] = PeriodicField(a.grid, values=raw).mean()
            g_tilde[(alpha, delta)] = PeriodicField(a.grid, values=raw, zero_mean=True)
    G_tilde = potentials_of(g_tilde, first, second, tol, residual_tilde_scales(a, N_second, F, operator))
    return b, g_tilde, G_tilde


def energy_norm_W(u, order):
    """‖u‖_W = (Σ_{|α|=m} ‖D^α u‖²)^{1/2}."""
    return seminorm(u, order)


def _parallel(function, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(function, items))


def homogenize(a, tol=None, max_iter=None, restart=None, threads=None, divergence_tol=None, dealias=False):
    """
    Run the whole cell pipeline and return a HomogenizedData.

    Cell solves for distinct γ (then distinct δ) run on up to ``threads``
    workers; results are assembled in ``enumerate_multiindices`` order so the
    output does not depend on the thread count.
    """
    tol, max_iter, restart = _defaults(tol, max_iter, restart)
    threads = settings.HOMOG['THREADS'] if threads is None else threads
    divergence_tol = settings.HOMOG['DIVERGENCE_TOL'] if divergence_tol is None else divergence_tol
    operator = DivergenceFormOperator.on_cell(a, dealias)
    first = a.indices
    second = enumerate_multiindices(a.order + 1, a.dim)
    logger.info('Homogenizing: m=%d, d=%d, cell grid %s, %d + %d cell problems',
                a.order, a.dim, a.grid.describe(), len(first), len(second))

    solved = _parallel(
        lambda gamma: solve_first_cell(a, gamma, tol, max_iter, restart, operator=operator, with_result=True),
        list(first), threads)
    N_first = {gamma: field for gamma, (field, _) in zip(first, solved)}
    iterations = {f'N_{gamma.label()}': result.iterations for gamma, (_, result) in zip(first, solved)}

    a_hat, g = homogenized_coefficients(a, N_first, operator=operator)
    g_scales = residual_scales(a, N_first, operator)
    g_residuals = {
        beta.label(): divergence_residual({alpha: g[(alpha, beta)] for alpha in first}, g_scales[beta])
        for beta in first
    }
    G = potentials_of(g, first, first, divergence_tol, g_scales)

    F = second_cell_rhs(a, N_first, G)
    solved = _parallel(
        lambda delta: solve_second_cell(a, F, delta, tol, max_iter, restart, operator=operator, with_result=True),
        list(second), threads)
    N_second = {delta: field for delta, (field, _) in zip(second, solved)}
    iterations.update({f'N_{delta.label()}': result.iterations for delta, (_, result) in zip(second, solved)})

    b, g_tilde, G_tilde = b_and_gtilde(a, N_second, F, divergence_tol, operator=operator)
    tilde_scales = residual_tilde_scales(a, N_second, F, operator)
    g_tilde_residuals = {
        delta.label(): divergence_residual({alpha: g_tilde[(alpha, delta)] for alpha in first}, tilde_scales[delta])
        for delta in second
    }

    for name, values in (('a_hat', a_hat), ('b', b)):
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f'The homogenized tensor {name} is not finite.')
    worst = max(list(g_residuals.values()) + list(g_tilde_residuals.values()))
    if worst > divergence_tol:
        raise PreconditionViolation(f'Divergence residual {worst:.3e} exceeds {divergence_tol:.1e}.')

    g_scale = sum(field.l2_norm() for field in g.values())
    diagnostics = {
        'iterations': iterations,
        'divergence_residual_g': g_residuals,
        'divergence_residual_g_tilde': g_tilde_residuals,
        'max_N_W_norm': max(energy_norm_W(field, a.order) for field in N_first.values()),
        'potential_constant': (max(field.sobolev_norm(a.order) for field in G.values()) / g_scale
                               if g_scale > 0 else 0.0),
        'potential_identity_error': max(
            check_potential_identity({(gamma, alpha): G[(gamma, alpha, beta)] for gamma in first for alpha in first},
                                     {alpha: g[(alpha, beta)] for alpha in first}, g_scales[beta])
            for beta in first),
    }
    logger.info('Homogenized: max ‖N_γ‖_W = %.4g, potential constant %.4g, worst divergence residual %.2e',
                diagnostics['max_N_W_norm'], diagnostics['potential_constant'], worst)
    return HomogenizedData(
        order=a.order, dim=a.dim, N_first=N_first, N_second=N_second, a_hat=a_hat, b=b,
        g=g, g_tilde=g_tilde, G=G, G_tilde=G_tilde, F=F, symmetric=a.symmetric, diagnostics=diagnostics,
    )
