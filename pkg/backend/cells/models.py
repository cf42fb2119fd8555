"""
Domain objects of the cell stage.

No database is involved: these are immutable dataclasses standing where Django
models would stand in a web app.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from spectral.exceptions import EllipticityViolation, InvalidMultiIndex, ResolutionMismatch
from spectral.fields import PeriodicField
from spectral.multiindex import as_multiindex, enumerate_multiindices

logger = logging.getLogger(__name__)

SUP_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class CoefficientTensor:
    """
    The 1-periodic coefficients {a_{αβ}(y)}, |α| = |β| = m, on the unit cell.

    Absent entries are zero. ``lambda0`` and ``lambda1`` are the declared
    coercivity and boundedness constants; the sup bound is checked on
    construction, coercivity by ``cells.operators.check_ellipticity``.
    """
    order: int
    dim: int
    entries: dict
    lambda0: float
    lambda1: float
    symmetric: bool = field(init=False)

    def __post_init__(self):
        if self.order < 1 or self.dim < 1:
            raise InvalidMultiIndex(f'Need order >= 1 and dim >= 1, got m={self.order}, d={self.dim}.')
        if self.lambda0 <= 0 or self.lambda1 <= 0:
            raise EllipticityViolation('Declared λ0 and λ1 must be positive.')
        if not self.entries:
            raise EllipticityViolation('A coefficient tensor needs at least one entry.')
        normalized = {}
        grids = set()
        for (alpha, beta), value in self.entries.items():
            alpha, beta = as_multiindex(alpha), as_multiindex(beta)
            for index in (alpha, beta):
                if index.order != self.order or index.dim != self.dim:
                    raise InvalidMultiIndex(f'Entry {index} is not of length {self.order} in {self.dim} variables.')
            if not isinstance(value, PeriodicField):
                raise TypeError(f'Entry ({alpha},{beta}) must be a PeriodicField.')
            normalized[(alpha, beta)] = value
            grids.add(value.grid)
        if len(grids) != 1:
            raise ResolutionMismatch('All coefficient entries must live on the same cell grid.')
        grid = grids.pop()
        if grid.period != 1.0 or grid.dim != self.dim:
            raise ResolutionMismatch(f'Coefficients must be sampled on the {self.dim}-d unit cell.')
        object.__setattr__(self, 'entries', normalized)

        for key, value in normalized.items():
            bound = value.sup_norm()
            if bound > self.lambda1 * (1.0 + SUP_BOUND_SLACK):
                raise EllipticityViolation(
                    f'|a_{key[0]}{key[1]}| reaches {bound:.6g} on the grid, above λ1 = {self.lambda1:g}.')
        object.__setattr__(self, 'symmetric', self._detect_symmetry())

    def _detect_symmetry(self):
        for (alpha, beta), value in self.entries.items():
            mirror = self.entries.get((beta, alpha))
            mirror_values = np.zeros(value.grid.shape) if mirror is None else mirror.values
            if not np.array_equal(value.values, mirror_values):
                return False
        return True

    @property
    def grid(self):
        return next(iter(self.entries.values())).grid

    @property
    def indices(self):
        return enumerate_multiindices(self.order, self.dim)

    def entry(self, alpha, beta):
        return self.entries.get((as_multiindex(alpha), as_multiindex(beta)))

    def averages(self):
        """⟨a_{αβ}⟩ for every present entry."""
        return {key: value.mean() for key, value in self.entries.items()}

    @classmethod
    def constant(cls, matrix, order, dim, grid, lambda0, lambda1):
        """Constant coefficients from a p×p matrix in ``enumerate_multiindices`` order."""
        indices = enumerate_multiindices(order, dim)
        matrix = np.asarray(matrix, dtype=float)
        entries = {}
        for i, alpha in enumerate(indices):
            for j, beta in enumerate(indices):
                if matrix[i, j] != 0.0:
                    entries[(alpha, beta)] = PeriodicField.constant(grid, matrix[i, j])
        return cls(order, dim, entries, lambda0, lambda1)


@dataclass
class HomogenizedData:
    """
    Everything the cell stage produces.

    Matrices are indexed in ``enumerate_multiindices`` order: ``a_hat`` is p×p
    over |α| = |β| = m, ``b`` is p×q over |α| = m, |δ| = m+1. Field maps are
    keyed by MultiIndex tuples: ``G[(γ, α, β)]`` satisfies
    g_{αβ} = Σ_γ D^γ G_{γαβ}, and likewise ``G_tilde[(γ, α, δ)]``.
    """
    order: int
    dim: int
    N_first: dict
    N_second: dict
    a_hat: np.ndarray
    b: np.ndarray
    g: dict
    g_tilde: dict
    G: dict
    G_tilde: dict
    F: dict
    symmetric: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def first_indices(self):
        return enumerate_multiindices(self.order, self.dim)

    @property
    def second_indices(self):
        return enumerate_multiindices(self.order + 1, self.dim)

    @property
    def grid(self):
        return next(iter(self.N_first.values())).grid



@dataclass
class KrylovResult:
    """Outcome of one preconditioned GMRES solve."""
    solution: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)
