"""
The term grammar of study documents.

A coefficient or a right-hand side is a sum of terms, each one of

    {"const": c}
    {"trig": {"k": [k_1, ..., k_d], "kind": "cos" | "sin", "amplitude": A}}
    {"piecewise": {"values": [...], "resolution": M}}

Trigonometric terms are A·cos(2π k·x/L) on a box of period L (L = 1 on the
cell). Piecewise values are row-major over an M^d grid and each value is held
on the block of grid points it covers, so M must divide the grid resolution.
"""

import logging

import numpy as np

from cells.models import CoefficientTensor
from spectral.exceptions import PreconditionViolation, ResolutionMismatch
from spectral.fields import Grid, PeriodicField, coordinates
from spectral.smoothing import SmoothingKernel

logger = logging.getLogger(__name__)


def _trig_values(trig, grid):
    phase = sum(k * x for k, x in zip(trig['k'], coordinates(grid)))
    wave = np.cos if trig['kind'] == 'cos' else np.sin
    return trig.get('amplitude', 1.0) * wave(2.0 * np.pi * phase / grid.period)


def _piecewise_values(piece, grid):
    base = piece.get('resolution', grid.shape[0])
    if any(n % base for n in grid.shape):
        raise ResolutionMismatch(f'Piecewise resolution {base} does not divide grid {grid.describe()}.')
    values = np.asarray(piece['values'], dtype=float).reshape((base,) * grid.dim)
    for axis, n in enumerate(grid.shape):
        values = np.repeat(values, n // base, axis=axis)
    return values


def term_values(term, grid):
    if 'const' in term:
        return np.full(grid.shape, float(term['const']))
    if 'trig' in term:
        return np.broadcast_to(_trig_values(term['trig'], grid), grid.shape)
    if 'piecewise' in term:
        return _piecewise_values(term['piecewise'], grid)
    raise ValueError(f'Unknown term {term!r}.')


def field_from_terms(terms, grid):
    total = np.zeros(grid.shape)
    for term in terms:
        total = total + term_values(term, grid)
    return PeriodicField(grid, values=total)


def build_coefficients(config):
    """
    The CoefficientTensor of a study. With the symmetric flag, an entry given
    only as (α, β) is mirrored to (β, α).
    """
    grid = Grid.cell(config.cell_resolution, config.dim)
    entries = {(spec.alpha, spec.beta): field_from_terms(spec.terms, grid) for spec in config.coefficients}
    if config.symmetric:
        for (alpha, beta), value in list(entries.items()):
            entries.setdefault((beta, alpha), value)
    tensor = CoefficientTensor(config.order, config.dim, entries, config.lambda0, config.lambda1)
    if config.symmetric and not tensor.symmetric:
        raise PreconditionViolation(f'Study {config.name!r} is flagged symmetric but a_{{αβ}} ≠ a_{{βα}}.')
    logger.info('Coefficients of %s: %d entries on %s, symmetric=%s',
                config.name, len(tensor.entries), grid.describe(), tensor.symmetric)
    return tensor


def build_rhs(config, torus):
    return field_from_terms(config.rhs, torus)


def build_kernel(config):
    """The smoothing kernel used in ũ^ε, or None for the default Θ^ε."""
    if config.kernel == 'steklov2':
        return None
    if config.kernel == 'steklov':
        return SmoothingKernel.steklov()
    spec = config.custom_kernel
    half_width = spec['half_width']
    nodes = np.linspace(-half_width, half_width, len(spec['values']))
    samples = np.asarray(spec['values'], dtype=float)
    segments = (len(samples) - 1) // 2
    return SmoothingKernel.from_profile(
        lambda omega: np.interp(omega, nodes, samples, left=0.0, right=0.0),
        half_width, config.dim, name=f'{config.name}-kernel', panels=40 * segments,
    )
