"""
Periodic scalar fields on uniform grids, with a lazily synchronized spectral
representation.

Two kinds of grid are used throughout: the unit cell Y = [-1/2, 1/2)^d on which
the 1-periodic coefficients and cell solutions live, and the computational
torus [0, L)^d of the fine and homogenized problems. Spectral coefficients are
normalized so that the k = 0 coefficient is the mean of the field.

Nyquist convention: on an even grid the Nyquist mode of an axis is annihilated
by every derivative along that axis. This keeps D^α D^β = D^{α+β} exact and
every multiplier Hermitian, so real fields stay real.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft

from .exceptions import PreconditionViolation, ResolutionMismatch
from .multiindex import as_multiindex, enumerate_multiindices

logger = logging.getLogger(__name__)

ZERO_MEAN_RTOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """
    Uniform grid on a periodic box of side ``period``.

    Grid point i along an axis sits at origin + i·period/n. The cell uses
    origin -1/2, the torus origin 0.
    """
    period: float
    shape: tuple
    origin: float = 0.0

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if not shape:
            raise ResolutionMismatch('A grid needs at least one axis.')
        if any(n <= 0 or n % 2 for n in shape):
            raise ResolutionMismatch(f'Resolutions must be positive and even, got {shape}.')
        if self.period <= 0:
            raise ResolutionMismatch(f'Period must be positive, got {self.period}.')
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'period', float(self.period))
        object.__setattr__(self, 'origin', float(self.origin))

    @classmethod
    def cell(cls, resolution, dim):
        return cls(1.0, (resolution,) * dim, -0.5)

    @classmethod
    def torus(cls, period, resolution, dim):
        return cls(period, (resolution,) * dim, 0.0)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def volume(self):
        return self.period ** self.dim

    @property
    def axes(self):
        return tuple(range(self.dim))

    @property
    def spectral_shape(self):
        return self.shape[:-1] + (self.shape[-1] // 2 + 1,)

    def describe(self):
        return f'{"x".join(str(n) for n in self.shape)} on period {self.period:g}'


def _readonly(array):
    array.setflags(write=False)
    return array


@lru_cache(maxsize=256)
def integer_frequencies(grid):
    """Integer frequency vectors k, one broadcastable array per axis (rfft layout)."""
    freqs = []
    for axis, n in enumerate(grid.shape):
        if axis == grid.dim - 1:
            k = np.arange(n // 2 + 1, dtype=float)
        else:
            k = np.fft.fftfreq(n, d=1.0 / n)
        shape = [1] * grid.dim
        shape[axis] = k.size
        freqs.append(_readonly(k.reshape(shape)))
    return tuple(freqs)


@lru_cache(maxsize=256)
def wavenumbers(grid):
    """Angular frequencies ξ_j = 2πk_j/L."""
    return tuple(_readonly(2.0 * np.pi * k / grid.period) for k in integer_frequencies(grid))


@lru_cache(maxsize=256)
def nyquist_masks(grid):
    return tuple(_readonly(np.abs(k) == n // 2) for k, n in zip(integer_frequencies(grid), grid.shape))


@lru_cache(maxsize=256)
def wavenumber_squared(grid):
    total = np.zeros(grid.spectral_shape)
    for xi in wavenumbers(grid):
        total = total + xi ** 2
    return _readonly(total)


@lru_cache(maxsize=4096)
def derivative_multiplier(grid, alpha):
    """Spectral symbol (iξ)^α with Nyquist modes zeroed along differentiated axes."""
    alpha = as_multiindex(alpha)
    if alpha.dim != grid.dim:
        raise ResolutionMismatch(f'Multiindex {alpha} does not match a {grid.dim}-d grid.')
    symbol = np.ones(grid.spectral_shape, dtype=complex)
    for power, xi, nyquist in zip(alpha, wavenumbers(grid), nyquist_masks(grid)):
        if power:
            symbol = symbol * np.where(nyquist, 0.0, (1j * xi) ** power)
    return _readonly(symbol)


@lru_cache(maxsize=256)
def polyharmonic_symbol(grid, order):
    """Σ_{|γ|=m} |(iξ)^γ|², the symbol of (−1)^m Σ D^{2γ}; zero exactly on unresolved modes."""
    total = np.zeros(grid.spectral_shape)
    for gamma in enumerate_multiindices(order, grid.dim):
        total = total + np.abs(derivative_multiplier(grid, gamma)) ** 2
    return _readonly(total)


@lru_cache(maxsize=256)
def unresolved_mask(grid, order=1):
    """
    Modes no derivative of positive order can produce or detect: every
    component is 0 or Nyquist. Includes the mean (k = 0).
    """
    return _readonly(polyharmonic_symbol(grid, order) == 0.0)


@lru_cache(maxsize=256)
def parseval_weights(grid):
    """Multiplicity of each rfft coefficient in the full spectrum."""
    n_last = grid.shape[-1]
    k_last = np.arange(n_last // 2 + 1)
    weights = np.where((k_last == 0) | (k_last == n_last // 2), 1.0, 2.0)
    shape = [1] * grid.dim
    shape[-1] = weights.size
    return _readonly(np.broadcast_to(weights.reshape(shape), grid.spectral_shape).copy())


@lru_cache(maxsize=64)
def coordinates(grid):
    """Grid point coordinates, one array of full shape per axis (indexing='ij')."""
    axes = [grid.origin + np.arange(n) * grid.period / n for n in grid.shape]
    return tuple(_readonly(c) for c in np.meshgrid(*axes, indexing='ij'))


def to_spectral(values, grid):
    return scipy.fft.rfftn(values, axes=grid.axes) / grid.size


def to_values(spectral, grid):
    return scipy.fft.irfftn(spectral * grid.size, s=grid.shape, axes=grid.axes)


class PeriodicField:
    """
    Real periodic field with grid values and DFT coefficients.

    Instances are immutable: both arrays are read-only and every operation
    returns a new field. ``zero_mean`` tags members of the energy space W; the
    k = 0 coefficient of such a field is pinned to zero.
    """

    def __init__(self, grid, values=None, spectral=None, zero_mean=False):
        if values is None and spectral is None:
            raise ValueError('A PeriodicField needs values or spectral coefficients.')
        self.grid = grid
        self.zero_mean = bool(zero_mean)
        self._values = None
        self._spectral = None
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != grid.shape:
                raise ResolutionMismatch(f'Values of shape {values.shape} do not fit grid {grid.describe()}.')
            if zero_mean:
                spectral = to_spectral(values, grid)
                values = None
            else:
                self._values = _readonly(np.array(values))
        if spectral is not None:
            spectral = np.array(spectral, dtype=complex)
            if spectral.shape != grid.spectral_shape:
                raise ResolutionMismatch(f'Spectrum of shape {spectral.shape} does not fit grid {grid.describe()}.')
            if zero_mean:
                spectral[(0,) * grid.dim] = 0.0
            self._spectral = _readonly(spectral)

    @classmethod
    def zeros(cls, grid, zero_mean=True):
        return cls(grid, spectral=np.zeros(grid.spectral_shape, dtype=complex), zero_mean=zero_mean)

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, values=np.full(grid.shape, float(value)))

    @property
    def values(self):
        if self._values is None:
            self._values = _readonly(to_values(self._spectral, self.grid))
        return self._values

    @property
    def spectral(self):
        if self._spectral is None:
            self._spectral = _readonly(to_spectral(self._values, self.grid))
        return self._spectral

    def with_values(self, values, zero_mean=False):
        return PeriodicField(self.grid, values=values, zero_mean=zero_mean)

    def with_spectral(self, spectral, zero_mean=False):
        return PeriodicField(self.grid, spectral=spectral, zero_mean=zero_mean)

    def _check_grid(self, other):
        if other.grid != self.grid:
            raise ResolutionMismatch(f'Grid mismatch: {self.grid.describe()} vs {other.grid.describe()}.')

    def __add__(self, other):
        if isinstance(other, PeriodicField):
            self._check_grid(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, PeriodicField):
            self._check_grid(other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - float(other))

    def __neg__(self):
        if self._spectral is not None and self._values is None:
            return self.with_spectral(-self._spectral, zero_mean=self.zero_mean)
        field = PeriodicField(self.grid, values=-self.values)
        field.zero_mean = self.zero_mean
        return field

    def __mul__(self, other):
        if isinstance(other, PeriodicField):
            return multiply(self, other)
        scale = float(other)
        if self._spectral is not None and self._values is None:
            return self.with_spectral(self._spectral * scale, zero_mean=self.zero_mean)
        field = PeriodicField(self.grid, values=self.values * scale)
        field.zero_mean = self.zero_mean
        return field

    __rmul__ = __mul__

    def derivative(self, alpha):
        return derivative(self, alpha)

    def mean(self):
        return mean(self)

    def sobolev_norm(self, s):
        return sobolev_norm(self, s)

    def l2_norm(self):
        return sobolev_norm(self, 0)

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f'PeriodicField({self.grid.describe()}, zero_mean={self.zero_mean})'


def derivative(f, alpha):
    """D^α f as the multiplier (iξ)^α; the result always has zero mean when |α| >= 1."""
    alpha = as_multiindex(alpha)
    if alpha.order == 0:
        return f
    return PeriodicField(f.grid, spectral=f.spectral * derivative_multiplier(f.grid, alpha),
                         zero_mean=True)


def mean(f):
    """The k = 0 coefficient, equal to the grid average."""
    return float(f.spectral[(0,) * f.grid.dim].real)


@lru_cache(maxsize=256)
def _sobolev_weights(grid, s):
    return _readonly(parseval_weights(grid) * (1.0 + wavenumber_squared(grid)) ** s)


def sobolev_norm(f, s):
    """(L^d Σ_k (1+|ξ|²)^s |f̂(k)|²)^{1/2}; negative s gives the dual norms."""
    weights = _sobolev_weights(f.grid, int(s)) if float(s).is_integer() else \
        parseval_weights(f.grid) * (1.0 + wavenumber_squared(f.grid)) ** s
    return float(np.sqrt(f.grid.volume * np.sum(weights * np.abs(f.spectral) ** 2)))


def seminorm(f, order):
    """(Σ_{|α|=m} ‖D^α f‖²)^{1/2}, the norm of the cell energy space W."""
    symbol = polyharmonic_symbol(f.grid, order)
    return float(np.sqrt(f.grid.volume * np.sum(parseval_weights(f.grid) * symbol * np.abs(f.spectral) ** 2)))


def dual_norm(f, order):
    """
    Σ_k |f̂|²/Σ_γ ξ^{2γ} over resolved modes: the W' norm used for divergence
    residuals (scale-free, unlike H^{-m}).
    """
    symbol = polyharmonic_symbol(f.grid, order)
    safe = np.where(symbol > 0, symbol, 1.0)
    weights = np.where(symbol > 0, parseval_weights(f.grid) / safe, 0.0)
    return float(np.sqrt(f.grid.volume * np.sum(weights * np.abs(f.spectral) ** 2)))


def project_resolved(f):
    """Drop the modes in ``unresolved_mask`` (mean included)."""
    spectral = np.where(unresolved_mask(f.grid), 0.0, f.spectral)
    return PeriodicField(f.grid, spectral=spectral, zero_mean=True)


def multiply(f, g, dealias=False):
    """Grid (collocation) product; ``dealias`` zero-pads by the 3/2 rule first."""
    f._check_grid(g)
    if dealias:
        return f.with_values(dealiased_product_values(f.values, g.values, f.grid))
    return f.with_values(f.values * g.values)


def _low_mode_slices(n, padded):
    """Index arrays mapping the resolved modes of an n-grid into a padded grid."""
    k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    keep = np.abs(k) < n // 2
    return np.flatnonzero(keep), np.mod(k[keep], padded)


def dealiased_product_values(a, b, grid):
    padded = tuple(3 * n // 2 + (3 * n // 2) % 2 for n in grid.shape)
    source, target = zip(*(_low_mode_slices(n, p) for n, p in zip(grid.shape, padded)))
    scale_padded = float(np.prod(padded))

    def lift(values):
        spectrum = np.fft.fftn(values) / grid.size
        lifted = np.zeros(padded, dtype=complex)
        lifted[np.ix_(*target)] = spectrum[np.ix_(*source)]
        return np.fft.ifftn(lifted).real * scale_padded

    product_hat = np.fft.fftn(lift(a) * lift(b)) / scale_padded
    spectrum = np.zeros(grid.shape, dtype=complex)
    spectrum[np.ix_(*source)] = product_hat[np.ix_(*target)]
    return np.fft.ifftn(spectrum).real * grid.size


def cells_per_period(period, epsilon):
    """K = L/ε, required to be a positive integer."""
    if epsilon <= 0:
        raise ResolutionMismatch(f'ε must be positive, got {epsilon}.')
    ratio = period / epsilon
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, ratio):
        raise ResolutionMismatch(f'L/ε = {ratio} is not a positive integer (L={period}, ε={epsilon}).')
    return count


def torus_for(cell_grid, epsilon, period):
    """The torus grid with exactly n points per ε-cell (N = n·L/ε)."""
    count = cells_per_period(period, epsilon)
    return Grid(period, tuple(n * count for n in cell_grid.shape), 0.0)


def sample_oscillatory(cell_field, epsilon, torus):
    """
    b^ε(x) = b(x/ε) on the torus by exact index remapping.

    Torus point x_j = jL/N maps to y = j/n, i.e. cell index (j + n/2) mod n
    under the cell offset -1/2.
    """
    cell = cell_field.grid
    if cell.period != 1.0:
        raise ResolutionMismatch(f'Oscillatory sampling needs a unit cell, got period {cell.period}.')
    if torus.dim != cell.dim:
        raise ResolutionMismatch(f'Cell is {cell.dim}-d but the torus is {torus.dim}-d.')
    count = cells_per_period(torus.period, epsilon)
    if torus.shape != tuple(n * count for n in cell.shape):
        raise ResolutionMismatch(
            f'Torus {torus.describe()} needs {count}·n points per axis for ε={epsilon} '
            f'and cell resolution {cell.shape}.')
    values = cell_field.values
    for axis, n in enumerate(cell.shape):
        shift = (torus.origin / epsilon - cell.origin) * n
        if abs(shift - round(shift)) > 1e-9:
            raise ResolutionMismatch('Torus and cell offsets do not align on grid points.')
        values = np.roll(values, -int(round(shift)) % n, axis=axis)
    return PeriodicField(torus, values=np.tile(values, (count,) * cell.dim))


def from_function(grid, function, zero_mean=False):
    """Sample ``function(*coordinates)`` on the grid."""
    values = np.broadcast_to(np.asarray(function(*coordinates(grid)), dtype=float), grid.shape)
    return PeriodicField(grid, values=values, zero_mean=zero_mean)


def random_band_limited(grid, max_mode, rng, zero_mean=True, normalize=True):
    """
    Random real field whose integer frequencies satisfy |k_j| <= max_mode.

    Nyquist modes are never populated, so derivative-based inequalities hold
    without the Nyquist caveat.
    """
    max_mode = int(min(max_mode, min(grid.shape) // 2 - 1))
    if max_mode < 1:
        raise ResolutionMismatch(f'Grid {grid.describe()} is too coarse for a band-limited sample.')
    band = np.ones(grid.spectral_shape, dtype=bool)
    for k in integer_frequencies(grid):
        band = band & (np.abs(k) <= max_mode)
    spectral = (rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)) * band
    values = to_values(spectral, grid)
    field = PeriodicField(grid, values=values, zero_mean=zero_mean)
    if normalize:
        norm = field.l2_norm()
        if norm > 0:
            field = field * (1.0 / norm)
    return field


def require_zero_mean(f, label='field'):
    norm = f.l2_norm()
    if abs(mean(f)) > ZERO_MEAN_RTOL * max(norm, np.finfo(float).tiny):
        raise PreconditionViolation(f'{label} must have zero mean, got <u> = {mean(f):.3e}.')


def dump(f, path, fmt='csv'):
    """
    Debug export: values in row-major order, axes x_1 … x_d. Not a stable
    format.
    """
    header = f'shape={list(f.grid.shape)} period={f.grid.period} origin={f.grid.origin} order=C'
    if fmt == 'csv':
        np.savetxt(path, f.values.reshape(-1), header=header, delimiter=',')
    elif fmt == 'bin':
        f.values.astype('<f8').tofile(path)
    else:
        raise ValueError(f'Unknown dump format {fmt!r}.')
    logger.debug('Dumped %s to %s (%s)', f, path, fmt)
