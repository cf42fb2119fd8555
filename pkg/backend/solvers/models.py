"""Result objects of the torus-level solvers."""

from dataclasses import asdict, dataclass, field

from spectral.fields import PeriodicField

ERROR_COLUMNS = (
    'err_L2_classical', 'err_L2_uhat', 'err_Hm_first_order', 'err_Hm_tilde', 'err_Hm_v', 'norm_f',
)


@dataclass
class FineSolution:
    """u^ε together with what the Krylov solve reported."""
    field: PeriodicField
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    energy_ratio: float = 0.0


@dataclass
class ApproximationBundle:
    """
    The approximations of u^ε built from one pair (ε, f).

    ``u_smooth`` is Θ^ε û^ε, ``first_order`` keeps only the ε^m corrector and
    ``K2``/``K3`` are the corrector fields K₂(ε)f and K₃(ε)f themselves.
    """
    epsilon: float
    order: int
    source: PeriodicField
    u_hat_eps: PeriodicField
    u_smooth: PeriodicField
    u_tilde: PeriodicField
    v: PeriodicField
    u_classical: PeriodicField
    first_order: PeriodicField
    K2: PeriodicField
    K3: PeriodicField
    smoothing: str = 'iterated'

    @property
    def grid(self):
        return self.source.grid


@dataclass
class ErrorRecord:
    eps: float
    err_L2_classical: float
    err_L2_uhat: float
    err_Hm_first_order: float
    err_Hm_tilde: float
    err_Hm_v: float
    norm_f: float
    fine_iters: int = 0
    wall_ms: float = 0.0

    def as_dict(self):
        return asdict(self)
