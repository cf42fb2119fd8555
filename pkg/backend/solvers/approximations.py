"""
Corrector approximations of u^ε and the error norms of a study.

With û^ε the solution of the perturbed homogenized problem and Θ^ε = S^ε S^ε:

    ũ^ε = Θ^ε û^ε + ε^m Σ_γ N_γ^ε D^γ Θ^ε û^ε + ε^{m+1} Σ_δ N_δ^ε D^δ Θ^ε û^ε
    v^ε = û^ε + ε^m K₂(ε)f + ε^{m+1} K₃(ε)f

where N^ε(x) = N(x/ε), K₂(ε)f = Σ_γ N_γ^ε S^ε D^γ û^ε and
K₃(ε)f = Σ_δ N_δ^ε D^δ Θ^ε û^ε.
"""

import logging

import numpy as np

from spectral.exceptions import ResolutionMismatch
from spectral.fields import PeriodicField, derivative, multiply, sample_oscillatory
from spectral.smoothing import iterated_steklov, smooth_with_kernel, steklov

from .fine import solve_fine
from .homogenized import HomogenizedSymbol, check_elliptic_estimate, solve_classical, solve_perturbed
from .models import ApproximationBundle, ErrorRecord

logger = logging.getLogger(__name__)

SMOOTHING_MODES = ('iterated', 'single')


def _theta(w, epsilon, smoothing='iterated', kernel=None):
    """Θ^ε, or S^ε in the single-smoothing diagnostic, or a custom kernel."""
    if kernel is not None:
        return smooth_with_kernel(w, epsilon, kernel)
    if smoothing == 'single':
        return steklov(w, epsilon)
    if smoothing != 'iterated':
        raise ValueError(f'Unknown smoothing mode {smoothing!r}; expected one of {SMOOTHING_MODES}.')
    return iterated_steklov(w, epsilon)


def corrector_sum(cell_fields, epsilon, gradients, dealias=False):
    """Σ_κ N_κ(x/ε) w_κ with w_κ given on the torus."""
    torus = next(iter(gradients.values())).grid
    total = PeriodicField.zeros(torus, zero_mean=False)
    for index, w in gradients.items():
        oscillating = sample_oscillatory(cell_fields[index], epsilon, torus)
        total = total + multiply(oscillating, w, dealias)
    return total


def _symbol(data, symbol):
    return HomogenizedSymbol.from_data(data) if symbol is None else symbol


def _u_hat(data, epsilon, f, symbol, u_hat):
    return solve_perturbed(_symbol(data, symbol), epsilon, f) if u_hat is None else u_hat


def _check_grids(data, f):
    if f.grid.dim != data.dim:
        raise ResolutionMismatch(f'A {data.dim}-d cell bundle cannot act on a {f.grid.dim}-d torus.')


def build_tilde_u(data, epsilon, f, symbol=None, smoothing='iterated', kernel=None, dealias=False, u_hat=None):
    """(Θ^ε û^ε, ũ^ε)."""
    _check_grids(data, f)
    m = data.order
    u_smooth = _theta(_u_hat(data, epsilon, f, symbol, u_hat), epsilon, smoothing, kernel)
    first = corrector_sum(data.N_first, epsilon,
                          {gamma: derivative(u_smooth, gamma) for gamma in data.first_indices}, dealias)
    second = corrector_sum(data.N_second, epsilon,
                           {delta: derivative(u_smooth, delta) for delta in data.second_indices}, dealias)
    u_tilde = u_smooth + epsilon ** m * first + epsilon ** (m + 1) * second
    return u_smooth, u_tilde


def corrector_K2(data, epsilon, f, symbol=None, dealias=False, u_hat=None):
    """K₂(ε)f = Σ_γ N_γ(x/ε) S^ε D^γ û^ε."""
    _check_grids(data, f)
    u_hat = _u_hat(data, epsilon, f, symbol, u_hat)
    gradients = {gamma: steklov(derivative(u_hat, gamma), epsilon) for gamma in data.first_indices}
    return corrector_sum(data.N_first, epsilon, gradients, dealias)


def corrector_K3(data, epsilon, f, symbol=None, smoothing='iterated', dealias=False, u_hat=None):
    """K₃(ε)f = Σ_δ N_δ(x/ε) D^δ Θ^ε û^ε."""
    _check_grids(data, f)
    u_smooth = _theta(_u_hat(data, epsilon, f, symbol, u_hat), epsilon, smoothing)
    gradients = {delta: derivative(u_smooth, delta) for delta in data.second_indices}
    return corrector_sum(data.N_second, epsilon, gradients, dealias)


def _assemble_v(u_hat, K2, K3, epsilon, m):
    first_order = u_hat + epsilon ** m * K2
    return first_order, first_order + epsilon ** (m + 1) * K3


def build_v(data, epsilon, f, symbol=None, smoothing='iterated', dealias=False, u_hat=None):
    """v^ε = û^ε + ε^m K₂(ε)f + ε^{m+1} K₃(ε)f."""
    u_hat = _u_hat(data, epsilon, f, symbol, u_hat)
    K2 = corrector_K2(data, epsilon, f, dealias=dealias, u_hat=u_hat)
    K3 = corrector_K3(data, epsilon, f, smoothing=smoothing, dealias=dealias, u_hat=u_hat)
    return _assemble_v(u_hat, K2, K3, epsilon, data.order)[1]


def build_bundle(data, epsilon, f, symbol=None, smoothing='iterated', kernel=None, dealias=False):
    """
    Every approximation for one (ε, f). ``kernel`` replaces Θ^ε in ũ^ε only;
    ``smoothing='single'`` replaces Θ^ε by S^ε in ũ^ε and K₃.
    """
    symbol = _symbol(data, symbol)
    u_hat = solve_perturbed(symbol, epsilon, f)
    u_smooth, u_tilde = build_tilde_u(data, epsilon, f, symbol, smoothing, kernel, dealias, u_hat)
    K2 = corrector_K2(data, epsilon, f, dealias=dealias, u_hat=u_hat)
    K3 = corrector_K3(data, epsilon, f, smoothing=smoothing, dealias=dealias, u_hat=u_hat)
    first_order, v = _assemble_v(u_hat, K2, K3, epsilon, data.order)
    return ApproximationBundle(
        epsilon=epsilon, order=data.order, source=f, u_hat_eps=u_hat, u_smooth=u_smooth, u_tilde=u_tilde,
        v=v, u_classical=solve_classical(symbol, f), first_order=first_order, K2=K2, K3=K3,
        smoothing=smoothing,
    )


def error_report(u_eps, bundle, fine_iters=0, wall_ms=0.0):
    """The error columns of one ε row."""
    if u_eps.grid != bundle.grid:
        raise ResolutionMismatch(
            f'u^ε lives on {u_eps.grid.describe()} but the approximations on {bundle.grid.describe()}.')
    m = bundle.order
    record = ErrorRecord(
        eps=bundle.epsilon,
        err_L2_classical=(u_eps - bundle.u_classical).l2_norm(),
        err_L2_uhat=(u_eps - bundle.u_hat_eps).l2_norm(),
        err_Hm_first_order=(u_eps - bundle.first_order).sobolev_norm(m),
        err_Hm_tilde=(u_eps - bundle.u_tilde).sobolev_norm(m),
        err_Hm_v=(u_eps - bundle.v).sobolev_norm(m),
        norm_f=bundle.source.l2_norm(),
        fine_iters=fine_iters,
        wall_ms=wall_ms,
    )
    logger.info('ε=%g: ‖u−ũ‖_H^%d = %.3e, ‖u−v‖_H^%d = %.3e, ‖u−u₀‖ = %.3e',
                bundle.epsilon, m, record.err_Hm_tilde, m, record.err_Hm_v, record.err_L2_classical)
    return record


def operator_norm_ratios(data, epsilon, sources, symbol=None, smoothing='iterated', dealias=False, a=None,
                         tol=None, max_iter=None, restart=None):
    """
    Empirical suprema over ``sources`` of ‖ε^m K₂f‖_{H^m}/‖f‖,
    ‖ε^m K₃f‖_{H^m}/‖f‖, ‖ε^m K₂f‖_{L²}/‖f‖ and ‖û^ε‖_{H^{2m}}/‖f‖.

    Given the coefficient tensor ``a``, every source is also solved on the fine
    grid and ``v_Hm`` is the supremum of ‖u^ε − v^ε‖_{H^m}/‖f‖.
    """
    symbol = _symbol(data, symbol)
    m = data.order
    ratios = {'K2_Hm': 0.0, 'K3_Hm': 0.0, 'K2_L2': 0.0, 'elliptic': 0.0}
    if a is not None:
        ratios['v_Hm'] = 0.0
    for f in sources:
        norm_f = f.l2_norm()
        if norm_f == 0.0:
            continue
        u_hat = solve_perturbed(symbol, epsilon, f)
        K2 = corrector_K2(data, epsilon, f, dealias=dealias, u_hat=u_hat)
        K3 = corrector_K3(data, epsilon, f, smoothing=smoothing, dealias=dealias, u_hat=u_hat)
        scale = epsilon ** m / norm_f
        ratios['K2_Hm'] = max(ratios['K2_Hm'], scale * K2.sobolev_norm(m))
        ratios['K3_Hm'] = max(ratios['K3_Hm'], scale * K3.sobolev_norm(m))
        ratios['K2_L2'] = max(ratios['K2_L2'], scale * K2.l2_norm())
        ratios['elliptic'] = max(ratios['elliptic'], check_elliptic_estimate(symbol, epsilon, f))
        if a is not None:
            u_eps = solve_fine(a, epsilon, f, tol, max_iter, restart, dealias).field
            v = _assemble_v(u_hat, K2, K3, epsilon, m)[1]
            ratios['v_Hm'] = max(ratios['v_Hm'], (u_eps - v).sobolev_norm(m) / norm_f)
    logger.info('Operator norms at ε=%g over %d sources: %s', epsilon, len(sources),
                ', '.join(f'{key}={value:.4g}' for key, value in ratios.items()))
    return ratios


def is_finite_record(record):
    return all(np.isfinite(value) for value in record.as_dict().values())
