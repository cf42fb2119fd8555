"""
Study configuration and report objects.

``StudyConfig`` is produced by ``StudyConfigSerializer.save()``; nothing here
touches a database.
"""

from dataclasses import dataclass, field

from solvers.models import ERROR_COLUMNS

NOISE_FLOOR = 'n/a (noise floor)'

FITTED_COLUMNS = ERROR_COLUMNS[:-1]

CSV_COLUMNS = ('eps',) + ERROR_COLUMNS + ('fine_iters', 'wall_ms')


@dataclass(frozen=True)
class CoefficientSpec:
    """One a_{αβ} given as a sum of terms (see ``studies.terms``)."""
    alpha: tuple
    beta: tuple
    terms: tuple


@dataclass(frozen=True)
class StudyConfig:
    name: str
    dim: int
    order: int
    cell_resolution: int
    coefficients: tuple
    lambda0: float
    lambda1: float
    rhs: tuple
    torus_period: float
    epsilons: tuple
    tol: float
    max_iter: int
    restart: int
    seed: int = 0
    symmetric: bool = False
    dealias: bool = False
    kernel: str = 'steklov2'
    custom_kernel: dict = None
    smoothing: str = 'iterated'
    rhs_modes: int = 0
    expectations: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def sweep(self):
        """ε values largest first."""
        return tuple(sorted(self.epsilons, reverse=True))


@dataclass
class RateReport:
    """Rows ordered by ε (largest first), fitted slopes and run metadata."""
    name: str
    config_hash: str
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        return [getattr(row, name) for row in self.rows]


@dataclass
class CheckResult:
    """One assertion of a verification suite."""
    suite: str
    name: str
    passed: bool
    value: float
    bound: str = ''

    def describe(self):
        status = 'ok  ' if self.passed else 'FAIL'
        return f'[{status}] {self.suite}/{self.name}: {self.value:.6g} {self.bound}'.rstrip()
