"""
Skew-symmetric matrix potentials of m-th order divergence-free vectors.

Given g = {g_α}, |α| = m, with zero means and Σ_α D^α g_α = 0, find G with
G_{γα} = −G_{αγ} and Σ_γ D^γ G_{γα} = g_α. The construction solves
L Φ_α = g_α for L = Σ_{|γ|=m} D^{2γ} (diagonal in Fourier space) and sets
G_{γα} = D^γ Φ_α − D^α Φ_γ.
"""

import logging

import numpy as np

from spectral.exceptions import PreconditionViolation
from spectral.fields import (
    PeriodicField, derivative, dual_norm, mean, polyharmonic_symbol, project_resolved,
)

logger = logging.getLogger(__name__)

ZERO_FIELD_ATOL = 1e-12


def divergence(g_vec):
    """Σ_α D^α g_α."""
    fields = list(g_vec.items())
    total = derivative(fields[0][1], fields[0][0])
    for alpha, g in fields[1:]:
        total = PeriodicField(total.grid, spectral=total.spectral + derivative(g, alpha).spectral,
                              zero_mean=True)
    return total


def divergence_residual(g_vec, scale=None):
    """
    ‖Σ_α D^α g_α‖_{W'} / scale, or 0 when the scale vanishes.

    ``scale`` defaults to Σ_α ‖g_α‖_{L²}. Tensors that are themselves a
    difference of larger terms (g = ã − â) should be measured against the size
    of those terms instead.
    """
    order = next(iter(g_vec)).order
    scale = sum(g.l2_norm() for g in g_vec.values()) if scale is None else scale
    if scale <= ZERO_FIELD_ATOL:
        return 0.0
    return dual_norm(divergence(g_vec), order) / scale


def _inverse_polyharmonic(grid, order):
    symbol = (-1.0) ** order * polyharmonic_symbol(grid, order)
    safe = np.where(symbol != 0.0, symbol, 1.0)
    return np.where(symbol != 0.0, 1.0 / safe, 0.0)


def skew_potential(g_vec, tol=1e-8, scale=None):
    """
    The matrix potential G of ``g_vec`` as a map (γ, α) -> PeriodicField.

    Raises PreconditionViolation when some ⟨g_α⟩ is not zero or the relative
    divergence residual exceeds ``tol``, both measured against ``scale`` (see
    ``divergence_residual``). A vector negligible at that scale has the zero
    potential. Skew-symmetry is exact: the lower triangle is the bitwise
    negation of the upper one.
    """
    if not g_vec:
        raise PreconditionViolation('skew_potential needs a nonempty vector.')
    indices = sorted(g_vec, key=lambda index: index.exponents, reverse=True)
    order = indices[0].order
    grid = g_vec[indices[0]].grid
    size = sum(g.l2_norm() for g in g_vec.values())
    scale = size if scale is None else max(scale, size)

    if size <= ZERO_FIELD_ATOL * max(scale, 1.0):
        zero = PeriodicField.zeros(grid)
        return {(gamma, alpha): zero for gamma in indices for alpha in indices}

    for alpha in indices:
        if abs(mean(g_vec[alpha])) > tol * scale:
            raise PreconditionViolation(f'<g_{alpha}> = {mean(g_vec[alpha]):.3e} is not zero.')
    residual = divergence_residual(g_vec, scale)
    if residual > tol:
        raise PreconditionViolation(
            f'The vector is not divergence free: relative residual {residual:.3e} > {tol:.1e}.')

    inverse = _inverse_polyharmonic(grid, order)
    potentials = {alpha: PeriodicField(grid, spectral=g_vec[alpha].spectral * inverse, zero_mean=True)
                  for alpha in indices}

    G = {}
    zero = PeriodicField.zeros(grid)
    for i, gamma in enumerate(indices):
        G[(gamma, gamma)] = zero
        for alpha in indices[i + 1:]:
            upper = PeriodicField(
                grid,
                spectral=derivative(potentials[alpha], gamma).spectral
                - derivative(potentials[gamma], alpha).spectral,
                zero_mean=True,
            )
            G[(gamma, alpha)] = upper
            G[(alpha, gamma)] = -upper

    bound = max(G_entry.sobolev_norm(order) for G_entry in G.values()) / size
    logger.info('Matrix potential: max ‖G‖_H^%d / Σ‖g‖ = %.4g', order, bound)
    return G


def check_potential_identity(G, g_vec, scale=None):
    """
    max_α ‖Σ_γ D^γ G_{γα} − Pg_α‖ / scale with P the projection onto resolved
    modes, the exactness measure for ``skew_potential``. ``scale`` defaults to
    Σ‖g_α‖.
    """
    size = sum(g.l2_norm() for g in g_vec.values())
    scale = size if scale is None else max(scale, size)
    if scale <= ZERO_FIELD_ATOL:
        return 0.0
    worst = 0.0
    for alpha, g in g_vec.items():
        column = {gamma: G[(gamma, alpha)] for gamma in g_vec}
        error = divergence(column) - project_resolved(g)
        worst = max(worst, error.l2_norm())
    return worst / scale
