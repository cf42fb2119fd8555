"""
Constant-coefficient homogenized problems solved exactly by Fourier division.

Â_ε = (−1)^m Σ_α D^α(Σ_β â_{αβ} D^β + ε Σ_δ b_{αδ} D^δ) acts on e^{iξ·x} as
multiplication by (−1)^m Σ (iξ)^α(iξ)^β â_{αβ} + ε(−1)^m Σ (iξ)^α(iξ)^δ b_{αδ}.
The divisor of (Â_ε + 1) is assembled from that expression directly, so
Λ(ξ) and εΛ₀(ξ) are read off as its real and imaginary parts.
"""

import logging
from dataclasses import dataclass

import numpy as np

from spectral.exceptions import EllipticityViolation, NonFiniteValue, PreconditionViolation, ResolutionMismatch
from spectral.fields import (
    PeriodicField, derivative_multiplier, parseval_weights, wavenumber_squared,
)
from spectral.multiindex import enumerate_multiindices

logger = logging.getLogger(__name__)


def _monomial(xi, alpha):
    """(iξ)^α on explicit real frequency vectors of shape (..., d)."""
    result = np.ones(xi.shape[:-1], dtype=complex)
    for j, power in enumerate(alpha):
        if power:
            result = result * (1j * xi[..., j]) ** power
    return result


@dataclass(frozen=True)
class HomogenizedSymbol:
    """
    Λ(ξ) = Σ â_{αβ} ξ^α ξ^β and Λ₀(ξ) = Σ b_{αδ} ξ^α ξ^δ, stored through â and b.

    ``a_hat`` is p×p and ``b`` is p×q in ``enumerate_multiindices`` order.
    """
    order: int
    dim: int
    a_hat: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        p = len(self.first_indices)
        q = len(self.second_indices)
        a_hat = np.asarray(self.a_hat, dtype=float)
        b = np.asarray(self.b, dtype=float) if self.b is not None else np.zeros((p, q))
        if a_hat.shape != (p, p) or b.shape != (p, q):
            raise ResolutionMismatch(f'Expected â of shape {(p, p)} and b of shape {(p, q)}, '
                                     f'got {a_hat.shape} and {b.shape}.')
        if not (np.all(np.isfinite(a_hat)) and np.all(np.isfinite(b))):
            raise NonFiniteValue('Homogenized tensors must be finite.')
        object.__setattr__(self, 'a_hat', a_hat)
        object.__setattr__(self, 'b', b)

    @classmethod
    def from_data(cls, data):
        return cls(data.order, data.dim, data.a_hat, data.b)

    @classmethod
    def constant(cls, matrix, order, dim):
        """Λ from a constant coefficient matrix, Λ₀ = 0."""
        return cls(order, dim, np.asarray(matrix, dtype=float), None)

    @property
    def first_indices(self):
        return enumerate_multiindices(self.order, self.dim)

    @property
    def second_indices(self):
        return enumerate_multiindices(self.order + 1, self.dim)

    def _terms(self, monomial):
        sign = (-1.0) ** self.order
        first = [monomial(alpha) for alpha in self.first_indices]
        second = [monomial(delta) for delta in self.second_indices]
        principal = 0.0
        for i, m_alpha in enumerate(first):
            for j, m_beta in enumerate(first):
                if self.a_hat[i, j] != 0.0:
                    principal = principal + sign * self.a_hat[i, j] * m_alpha * m_beta
        perturbation = 0.0
        for i, m_alpha in enumerate(first):
            for j, m_delta in enumerate(second):
                if self.b[i, j] != 0.0:
                    perturbation = perturbation + sign * self.b[i, j] * m_alpha * m_delta
        return principal, perturbation

    def evaluate(self, xi):
        """(Λ(ξ), Λ₀(ξ)) on real vectors ``xi`` of shape (..., d)."""
        xi = np.asarray(xi, dtype=float)
        principal, perturbation = self._terms(lambda index: _monomial(xi, index))
        shape = xi.shape[:-1]
        return (np.broadcast_to(np.real(principal), shape).copy(),
                np.broadcast_to(np.imag(perturbation), shape).copy())

    def divisor(self, grid, epsilon):
        """1 + Λ + iεΛ₀ on the rfft modes of ``grid``."""
        if epsilon < 0:
            raise ValueError(f'ε must be nonnegative, got {epsilon}.')
        principal, perturbation = self._terms(lambda index: derivative_multiplier(grid, index))
        total = 1.0 + np.real(principal) + 1j * epsilon * np.imag(perturbation)
        return np.broadcast_to(total, grid.spectral_shape)

    def Lambda(self, grid):
        return np.real(self.divisor(grid, 0.0)) - 1.0

    def Lambda0(self, grid):
        return np.imag(self.divisor(grid, 1.0))

    def ellipticity_ratio(self, rng, samples=256):
        """min Λ(ξ)/Σ_γ ξ^{2γ} over random directions ξ."""
        xi = rng.standard_normal((samples, self.dim))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        Lambda, _ = self.evaluate(xi)
        reference = sum(np.abs(_monomial(xi, gamma)) ** 2 for gamma in self.first_indices)
        return float(np.min(Lambda / reference))

    def oddness_defect(self, rng, samples=256):
        """max |Λ₀(ξ) + Λ₀(−ξ)| relative to max |Λ₀|; zero for real b."""
        xi = rng.standard_normal((samples, self.dim))
        _, plus = self.evaluate(xi)
        _, minus = self.evaluate(-xi)
        scale = max(float(np.max(np.abs(plus))), np.finfo(float).tiny)
        return float(np.max(np.abs(plus + minus))) / scale

    def require_elliptic(self, lambda0, rng, samples=256):
        ratio = self.ellipticity_ratio(rng, samples)
        if ratio < lambda0 * (1.0 - 1e-6):
            raise EllipticityViolation(
                f'Homogenized symbol ratio {ratio:.6g} is below λ0 = {lambda0:g}.')
        return ratio

    def require_odd(self, rng, tol=1e-10, samples=256):
        defect = self.oddness_defect(rng, samples)
        if defect > tol:
            raise PreconditionViolation(f'Λ₀ is not odd: relative defect {defect:.3e} above {tol:.1e}.')
        return defect


def solve_perturbed(symbol, epsilon, f):
    """û^ε with F[û^ε] = F[f]/(1 + Λ + iεΛ₀); ε = 0 gives the classical solution."""
    divisor = symbol.divisor(f.grid, epsilon)
    return PeriodicField(f.grid, spectral=f.spectral / divisor)


def solve_classical(symbol, f):
    return solve_perturbed(symbol, 0.0, f)


def _weighted_norm(spectral, grid, weights):
    return float(np.sqrt(grid.volume * np.sum(parseval_weights(grid) * weights * np.abs(spectral) ** 2)))


def check_elliptic_estimate(symbol, epsilon, f):
    """‖û^ε‖_{H^{2m}} / ‖f‖_{L²}, or 0 for f = 0."""
    norm_f = f.l2_norm()
    if norm_f == 0.0:
        return 0.0
    return solve_perturbed(symbol, epsilon, f).sobolev_norm(2 * symbol.order) / norm_f


def elliptic_estimate_bound(symbol, epsilon, grid):
    """max over the modes of (1 + |ξ|²)^m / |1 + Λ + iεΛ₀|, the sharp bound for ``check_elliptic_estimate``."""
    weight = (1.0 + wavenumber_squared(grid)) ** symbol.order
    return float(np.max(weight / np.abs(symbol.divisor(grid, epsilon))))


def resolvent_residual(symbol, epsilon, u, f):
    """‖(Â_ε + 1)u − f‖ / ‖f‖ with Â_ε applied as its symbol."""
    grid = f.grid
    residual = symbol.divisor(grid, epsilon) * u.spectral - f.spectral
    norm_f = _weighted_norm(f.spectral, grid, 1.0)
    if norm_f == 0.0:
        return _weighted_norm(residual, grid, 1.0)
    return _weighted_norm(residual, grid, 1.0) / norm_f


def check_resolvent_inequality(symbol, epsilon, f):
    """
    Σ(1+Λ)²|F[û^ε]|² ≤ Σ|F[f]|², checked mode by mode.

    Returns the largest mode-wise ratio (1+Λ)|F[û^ε]| / |F[f]|, which never
    exceeds 1 since |1 + Λ + iεΛ₀| ≥ 1 + Λ.
    """
    grid = f.grid
    u = solve_perturbed(symbol, epsilon, f)
    lhs = (1.0 + symbol.Lambda(grid)) * np.abs(u.spectral)
    rhs = np.abs(f.spectral)
    active = rhs > 0.0
    if not np.any(active):
        return 0.0
    ratio = float(np.max(lhs[active] / rhs[active]))
    logger.debug('Resolvent inequality: worst mode ratio %.6g at ε=%g', ratio, epsilon)
    return ratio

