"""
Multiindex arithmetic.

Every tensor in the toolkit is indexed by multiindices of a fixed length; the
order returned by ``enumerate_multiindices`` is the global layout used for
matrices such as â and b.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb, prod

from .exceptions import InvalidMultiIndex


@dataclass(frozen=True)
class MultiIndex:
    """
    Exponent vector α = (α₁, …, α_d) with nonnegative entries.

    Comparison operators implement the componentwise partial order:
    γ <= α iff γ_i <= α_i for all i, and γ < α iff additionally γ ≠ α.
    """
    exponents: tuple

    def __post_init__(self):
        exponents = tuple(int(e) for e in self.exponents)
        if not exponents:
            raise InvalidMultiIndex('A multiindex needs at least one component.')
        if any(e < 0 for e in exponents):
            raise InvalidMultiIndex(f'Negative exponent in {exponents}.')
        object.__setattr__(self, 'exponents', exponents)

    @classmethod
    def of(cls, *exponents):
        return cls(tuple(exponents))

    @classmethod
    def zero(cls, dim):
        return cls((0,) * dim)

    @property
    def order(self):
        """Length |α| = α₁ + … + α_d."""
        return sum(self.exponents)

    @property
    def dim(self):
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def __len__(self):
        return len(self.exponents)

    def __getitem__(self, i):
        return self.exponents[i]

    def _check_dim(self, other):
        if not isinstance(other, MultiIndex):
            return NotImplemented
        if other.dim != self.dim:
            raise InvalidMultiIndex(f'Dimension mismatch: {self} vs {other}.')
        return True

    def __le__(self, other):
        if self._check_dim(other) is NotImplemented:
            return NotImplemented
        return all(a <= b for a, b in zip(self, other))

    def __lt__(self, other):
        if self._check_dim(other) is NotImplemented:
            return NotImplemented
        return self <= other and self != other

    def __ge__(self, other):
        if self._check_dim(other) is NotImplemented:
            return NotImplemented
        return other <= self

    def __gt__(self, other):
        if self._check_dim(other) is NotImplemented:
            return NotImplemented
        return other < self

    def __add__(self, other):
        if self._check_dim(other) is NotImplemented:
            return NotImplemented
        return MultiIndex(tuple(a + b for a, b in zip(self, other)))

    def __sub__(self, other):
        if self._check_dim(other) is NotImplemented:
            return NotImplemented
        if not other <= self:
            raise InvalidMultiIndex(f'{other} is not <= {self}; the difference is not a multiindex.')
        return MultiIndex(tuple(a - b for a, b in zip(self, other)))

    def offset(self, plus, minus):
        """
        Return self + plus - minus when that is a multiindex, else None.

        Used for the β+γ−δ combinations of the second cell problem.
        """
        values = tuple(a + b - c for a, b, c in zip(self, plus, minus))
        if any(v < 0 for v in values):
            return None
        return MultiIndex(values)

    def to_list(self):
        return list(self.exponents)

    def label(self):
        return '-'.join(str(e) for e in self.exponents)

    @classmethod
    def from_label(cls, label):
        return cls(tuple(int(e) for e in label.split('-')))

    def __str__(self):
        return '(' + ','.join(str(e) for e in self.exponents) + ')'

    __repr__ = __str__


@lru_cache(maxsize=None)
def enumerate_multiindices(order, dim):
    """
    All multiindices of length exactly ``order`` in ``dim`` variables.

    Lexicographic with the first component descending, so (m=2, d=2) gives
    (2,0), (1,1), (0,2). The count is C(order+dim-1, dim-1).
    """
    if order < 0 or dim < 1:
        raise InvalidMultiIndex(f'Cannot enumerate order={order}, dim={dim}.')
    return tuple(MultiIndex(e) for e in _compositions(order, dim))


def _compositions(order, dim):
    if dim == 1:
        yield (order,)
        return
    for first in range(order, -1, -1):
        for rest in _compositions(order - first, dim - 1):
            yield (first,) + rest


def leibniz_coefficient(alpha, gamma):
    """
    c_{α,γ} = Π_i binom(α_i, γ_i), the coefficient of D^γ w D^{α−γ} v in D^α(wv).
    """
    if not gamma <= alpha:
        raise InvalidMultiIndex(f'Leibniz coefficient needs gamma <= alpha, got {gamma} and {alpha}.')
    return prod(comb(a, g) for a, g in zip(alpha, gamma))


def sub_multiindices(alpha):
    """Every γ with γ <= α, in the same descending-lexicographic order."""
    ranges = [range(a, -1, -1) for a in alpha]

    def expand(prefix, axis):
        if axis == len(ranges):
            yield MultiIndex(prefix)
            return
        for value in ranges[axis]:
            yield from expand(prefix + (value,), axis + 1)

    return tuple(expand((), 0))


def as_multiindex(value):
    if isinstance(value, MultiIndex):
        return value
    return MultiIndex(tuple(value))
