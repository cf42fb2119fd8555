"""
Divergence-form operators A = (−1)^m Σ D^α(a_{αβ} D^β) in collocation form.

The same class serves the cell problems (coefficients on Y) and the fine
problem (coefficients resampled as a(x/ε) on the torus): derivatives are
spectral, products are taken on the grid.
"""

import logging

import numpy as np

from spectral.exceptions import EllipticityViolation
from spectral.fields import (
    PeriodicField, dealiased_product_values, derivative_multiplier, polyharmonic_symbol,
    parseval_weights, random_band_limited, require_zero_mean, sample_oscillatory, to_spectral,
    to_values,
)

logger = logging.getLogger(__name__)


class DivergenceFormOperator:
    """
    A acting on raw value arrays of one grid.

    ``coefficients`` maps (α, β) to value arrays on that grid; absent pairs are
    zero. ``reference`` holds the grid averages used by the preconditioner.
    """

    def __init__(self, grid, order, coefficients, reference, lambda0, dealias=False):
        self.grid = grid
        self.order = order
        self.dealias = dealias
        self.lambda0 = lambda0
        self.reference = dict(reference)
        self.rows = {}
        for (alpha, beta), values in coefficients.items():
            self.rows.setdefault(alpha, []).append((beta, values))
        self.betas = sorted({beta for row in self.rows.values() for beta, _ in row},
                            key=lambda index: index.exponents, reverse=True)
        self.sign = (-1.0) ** order

    @classmethod
    def on_cell(cls, a, dealias=False):
        coefficients = {key: value.values for key, value in a.entries.items()}
        return cls(a.grid, a.order, coefficients, a.averages(), a.lambda0, dealias)

    @classmethod
    def on_torus(cls, a, epsilon, torus, dealias=False):
        """A_ε with a^ε(x) = a(x/ε) sampled exactly on ``torus``."""
        coefficients = {key: sample_oscillatory(value, epsilon, torus).values
                        for key, value in a.entries.items()}
        return cls(torus, a.order, coefficients, a.averages(), a.lambda0, dealias)

    def _product(self, a, b):
        if self.dealias:
            return dealiased_product_values(a, b, self.grid)
        return a * b

    def fluxes(self, values):
        """Σ_β a_{αβ} D^β u for every α with a nonzero row."""
        spectrum = to_spectral(values, self.grid)
        gradients = {beta: to_values(spectrum * derivative_multiplier(self.grid, beta), self.grid)
                     for beta in self.betas}
        fluxes = {}
        for alpha, row in self.rows.items():
            total = np.zeros(self.grid.shape)
            for beta, coefficient in row:
                total = total + self._product(coefficient, gradients[beta])
            fluxes[alpha] = total
        return fluxes

    def divergence(self, fluxes):
        """Σ_α D^α h_α for a map α -> value array."""
        spectrum = np.zeros(self.grid.spectral_shape, dtype=complex)
        for alpha, flux in fluxes.items():
            spectrum = spectrum + derivative_multiplier(self.grid, alpha) * to_spectral(flux, self.grid)
        return to_values(spectrum, self.grid)

    def apply(self, values):
        return self.sign * self.divergence(self.fluxes(values))

    def apply_field(self, field):
        return PeriodicField(self.grid, values=self.apply(field.values), zero_mean=True)

    def energy(self, field):
        """Σ_{α,β} ∫ a_{αβ} D^β u D^α u over the grid's box."""
        spectrum = field.spectral
        total = 0.0
        for alpha, flux in self.fluxes(field.values).items():
            gradient = to_values(spectrum * derivative_multiplier(self.grid, alpha), self.grid)
            total += float(np.mean(flux * gradient))
        return total * self.grid.volume

    def reference_symbol(self):
        """
        max(σ̄(ξ), λ0 Σ_γ ξ^{2γ}) with σ̄ the symbol of the averaged-coefficient
        operator. Exact for constant coefficients; vanishes only on unresolved
        modes.
        """
        symbol = np.zeros(self.grid.spectral_shape)
        for (alpha, beta), average in self.reference.items():
            product = derivative_multiplier(self.grid, alpha) * derivative_multiplier(self.grid, beta)
            symbol = symbol + average * (self.sign * product).real
        floor = self.lambda0 * polyharmonic_symbol(self.grid, self.order)
        return np.maximum(symbol, floor)


def apply_cell_operator(a, u, dealias=False):
    """A u on the cell; u must have zero mean."""
    require_zero_mean(u, 'Cell operator argument')
    return DivergenceFormOperator.on_cell(a, dealias).apply_field(u)


def check_ellipticity(a, trials, seed=0, max_mode=None, strict=True, slack=1e-6):
    """
    min over random zero-mean trial fields of
    Σ∫ a_{αβ} D^β u D^α u / Σ_{|α|=m} ‖D^α u‖².

    A necessary check of the periodic coercivity inequality. With ``strict`` a
    ratio below λ0·(1 − slack) raises EllipticityViolation.
    """
    if trials < 1:
        raise ValueError('check_ellipticity needs at least one trial.')
    operator = DivergenceFormOperator.on_cell(a)
    rng = np.random.default_rng(seed)
    grid = a.grid
    max_mode = max(1, grid.shape[0] // 4) if max_mode is None else max_mode
    symbol = polyharmonic_symbol(grid, a.order)
    ratio = np.inf
    for _ in range(trials):
        u = random_band_limited(grid, max_mode, rng)
        denominator = float(np.sum(parseval_weights(grid) * symbol * np.abs(u.spectral) ** 2)) * grid.volume
        if denominator == 0.0:
            continue
        ratio = min(ratio, operator.energy(u) / denominator)
    logger.info('Coercivity ratio over %d trials: %.6g (declared λ0 = %g)', trials, ratio, a.lambda0)
    if strict and ratio < a.lambda0 * (1.0 - slack):
        raise EllipticityViolation(
            f'Estimated coercivity ratio {ratio:.6g} is below the declared λ0 = {a.lambda0:g}.')
    return float(ratio)
