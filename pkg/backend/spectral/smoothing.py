"""
Smoothing operators as exact Fourier multipliers.

S^ε is the moving average over the cube εY; its symbol is Π_j σ(εξ_j/2) with
σ(t) = sin(t)/t. Θ^ε = S^ε S^ε has the squared symbol. A general kernel
θ (even, nonnegative, compactly supported, unit mass) enters through its
symbol evaluated at εξ.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import InvalidKernel
from .fields import PeriodicField, wavenumbers

logger = logging.getLogger(__name__)

KERNEL_NAMES = ('steklov', 'steklov2', 'custom')
SYMBOL_ATOL = 1e-12


def steklov_symbol_1d(t):
    """σ(t/2) = sin(t/2)/(t/2) at the scaled frequency t = εξ."""
    return np.sinc(np.asarray(t) / (2.0 * np.pi))


def _steklov(scaled):
    symbol = 1.0
    for t in scaled:
        symbol = symbol * steklov_symbol_1d(t)
    return symbol


def _steklov2(scaled):
    return _steklov(scaled) ** 2


@dataclass(frozen=True)
class SmoothingKernel:
    """
    A smoothing kernel known through its symbol.

    ``symbol`` takes the tuple of scaled frequencies (εξ_1, …, εξ_d) as
    broadcastable arrays and returns the (real) symbol values.
    """
    kind: str
    symbol: Callable = field(compare=False)
    name: str = ''

    def __post_init__(self):
        if self.kind not in KERNEL_NAMES:
            raise InvalidKernel(f'Unknown kernel kind {self.kind!r}; expected one of {KERNEL_NAMES}.')

    @classmethod
    def steklov(cls):
        return cls('steklov', _steklov, 'steklov')

    @classmethod
    def iterated_steklov(cls):
        return cls('steklov2', _steklov2, 'steklov2')

    @classmethod
    def from_name(cls, name):
        if name == 'steklov':
            return cls.steklov()
        if name == 'steklov2':
            return cls.iterated_steklov()
        raise InvalidKernel(f'Kernel {name!r} cannot be built from its name alone.')

    @classmethod
    def custom(cls, symbol, name='custom', dim=None, rng=None):
        kernel = cls('custom', symbol, name)
        if dim is not None:
            validate_kernel(kernel, dim, rng=rng)
        return kernel

    @classmethod
    def from_profile(cls, profile, half_width, dim, name='custom', panels=400, nodes=8):
        """
        Product kernel θ(ω) = Π_j θ₁(ω_j) from an even 1-D profile supported on
        [-half_width, half_width]. The symbol θ̂₁(t) = 2∫_0^h θ₁(ω)cos(ωt)dω is
        computed by composite Gauss-Legendre quadrature.

        The kernel must be piecewise C^1 for the corrector estimates; that cannot
        be checked here and is the caller's responsibility.
        """
        if half_width <= 0:
            raise InvalidKernel(f'Kernel support must be positive, got {half_width}.')
        x, w = leggauss(nodes)
        edges = np.linspace(0.0, half_width, panels + 1)
        left, right = edges[:-1, None], edges[1:, None]
        omega = (0.5 * (right - left) * x + 0.5 * (right + left)).ravel()
        weights = (0.5 * (right - left) * w).ravel()
        samples = np.asarray(profile(omega), dtype=float)
        if np.any(samples < -SYMBOL_ATOL):
            raise InvalidKernel(f'Kernel {name!r} takes negative values.')
        mass = 2.0 * np.sum(weights * samples)
        if abs(mass - 1.0) > 1e-8:
            raise InvalidKernel(f'Kernel {name!r} has mass {mass ** dim:.12g}, expected 1.')
        mirrored = np.asarray(profile(-omega), dtype=float)
        if np.max(np.abs(mirrored - samples)) > 1e-12 * max(1.0, np.max(np.abs(samples))):
            raise InvalidKernel(f'Kernel {name!r} is not even.')

        def symbol_1d(t):
            t = np.asarray(t, dtype=float)
            flat = np.unique(np.abs(t.ravel()))
            values = 2.0 * (np.cos(np.outer(flat, omega)) @ (weights * samples))
            return values[np.searchsorted(flat, np.abs(t))]

        def symbol(scaled):
            result = 1.0
            for t in scaled:
                result = result * symbol_1d(t)
            return result

        kernel = cls('custom', symbol, name)
        validate_kernel(kernel, dim)
        return kernel

    def on_grid(self, grid, epsilon):
        scaled = tuple(epsilon * xi for xi in wavenumbers(grid))
        return np.broadcast_to(np.asarray(self.symbol(scaled), dtype=complex), grid.spectral_shape)


def hat_profile(omega):
    """θ₁ * θ₁ in one variable: the triangle 1 − |ω| on [−1, 1]."""
    return np.clip(1.0 - np.abs(omega), 0.0, None)


def hat_kernel(dim=1):
    return SmoothingKernel.from_profile(hat_profile, 1.0, dim, name='hat')


def validate_kernel(kernel, dim, rng=None, samples=512, spread=40.0):
    """
    Check unit mass (symbol 1 at 0), evenness, reality and |symbol| <= 1 on
    random scaled frequencies.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    zero = tuple(np.zeros(1) for _ in range(dim))
    at_zero = np.asarray(kernel.symbol(zero), dtype=complex).ravel()[0]
    if abs(at_zero - 1.0) > SYMBOL_ATOL:
        raise InvalidKernel(f'Kernel {kernel.name!r} has symbol {at_zero} at 0; unit mass requires 1.')
    points = tuple(rng.uniform(-spread, spread, samples) for _ in range(dim))
    values = np.asarray(kernel.symbol(points), dtype=complex)
    mirrored = np.asarray(kernel.symbol(tuple(-p for p in points)), dtype=complex)
    if np.max(np.abs(values.imag)) > SYMBOL_ATOL:
        raise InvalidKernel(f'Kernel {kernel.name!r} has a complex symbol; the kernel must be even.')
    if np.max(np.abs(values - mirrored)) > SYMBOL_ATOL:
        raise InvalidKernel(f'Kernel {kernel.name!r} has a symbol that is not even.')
    if np.max(np.abs(values)) > 1.0 + SYMBOL_ATOL:
        raise InvalidKernel(f'Kernel {kernel.name!r} is expansive (|symbol| > 1).')
    return kernel


def _apply(f, symbol):
    return PeriodicField(f.grid, spectral=f.spectral * symbol, zero_mean=f.zero_mean)


def steklov(f, epsilon):
    """S^ε f."""
    if epsilon <= 0:
        raise ValueError(f'ε must be positive, got {epsilon}.')
    return _apply(f, SmoothingKernel.steklov().on_grid(f.grid, epsilon))


def iterated_steklov(f, epsilon):
    """Θ^ε f = S^ε S^ε f."""
    if epsilon <= 0:
        raise ValueError(f'ε must be positive, got {epsilon}.')
    return _apply(f, SmoothingKernel.iterated_steklov().on_grid(f.grid, epsilon))


def smooth_with_kernel(f, epsilon, kernel):
    if epsilon <= 0:
        raise ValueError(f'ε must be positive, got {epsilon}.')
    if kernel.kind == 'custom':
        validate_kernel(kernel, f.grid.dim)
    return _apply(f, kernel.on_grid(f.grid, epsilon))
