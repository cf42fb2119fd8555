from math import sqrt

import numpy as np
from django.test import SimpleTestCase

from cells.models import CoefficientTensor
from cells.operators import apply_cell_operator
from cells.problems import homogenize
from spectral.exceptions import PreconditionViolation, ResolutionMismatch
from spectral.fields import Grid, PeriodicField, from_function, random_band_limited, torus_for
from spectral.smoothing import iterated_steklov

from .approximations import (
    build_bundle, build_tilde_u, build_v, corrector_K2, corrector_K3, error_report, operator_norm_ratios,
)
from .fine import FineOperator, apply_A_eps, solve_fine
from .homogenized import (
    HomogenizedSymbol, check_elliptic_estimate, check_resolvent_inequality, elliptic_estimate_bound,
    resolvent_residual, solve_classical, solve_perturbed,
)

TWO_PI = 2.0 * np.pi


def cosine_tensor_1d(n=16):
    grid = Grid.cell(n, 1)
    a = from_function(grid, lambda y: 2.0 + np.cos(TWO_PI * y))
    return CoefficientTensor(2, 1, {((2,), (2,)): a}, lambda0=1.0, lambda1=3.0)


def nonsymmetric_symbol(seed=0):
    rng = np.random.default_rng(seed)
    return HomogenizedSymbol(2, 2, np.diag([2.0, 1.5, 2.0]), rng.standard_normal((3, 4)))


class HomogenizedSolverTest(SimpleTestCase):
    def test_one_dimensional_classical_solution(self):
        # â = √3, f = sin(2πx): u = sin(2πx)/(1 + √3(2π)⁴).
        torus = Grid.torus(1.0, 32, 1)
        f = from_function(torus, lambda x: np.sin(TWO_PI * x))
        symbol = HomogenizedSymbol(2, 1, [[sqrt(3.0)]], None)
        u = solve_classical(symbol, f)
        np.testing.assert_allclose(u.values, f.values / (1.0 + sqrt(3.0) * TWO_PI ** 4), atol=1e-15)

    def test_vanishing_b_makes_epsilon_irrelevant(self):
        # Λ₀ ≡ 0, so every ε gives the classical solution.
        torus = Grid.torus(1.0, 32, 2)
        f = random_band_limited(torus, 6, np.random.default_rng(1), zero_mean=False)
        symbol = HomogenizedSymbol.constant(np.eye(3), 2, 2)
        np.testing.assert_array_equal(solve_perturbed(symbol, 0.25, f).values, solve_classical(symbol, f).values)

    def test_symbols_of_a_constant_tensor(self):
        # Λ(ξ) = √3 ξ⁴ in one dimension; Λ₀ is odd for any real b.
        symbol = HomogenizedSymbol(2, 1, [[sqrt(3.0)]], None)
        Lambda, Lambda0 = symbol.evaluate(np.array([[2.0], [-1.5]]))
        np.testing.assert_allclose(Lambda, sqrt(3.0) * np.array([16.0, 1.5 ** 4]))
        np.testing.assert_array_equal(Lambda0, 0.0)
        self.assertLess(nonsymmetric_symbol().oddness_defect(np.random.default_rng(0)), 1e-12)

    def test_divisor_is_hermitian(self):
        # 1 + Λ + iεΛ₀ at −k is the conjugate of its value at k, so real f gives real û^ε.
        torus = Grid.torus(1.0, 16, 2)
        divisor = nonsymmetric_symbol().divisor(torus, 0.1)
        plane = divisor[:, 0]
        np.testing.assert_allclose(plane[1:][::-1], np.conj(plane[1:]), atol=1e-9)

    def test_resolvent_identity_and_inequality(self):
        # (Â_ε + 1)û^ε = f spectrally and (1+Λ)|û| <= |f| per mode.
        torus = Grid.torus(1.0, 16, 2)
        f = random_band_limited(torus, 5, np.random.default_rng(2), zero_mean=False)
        symbol = nonsymmetric_symbol()
        u = solve_perturbed(symbol, 0.1, f)
        self.assertLess(resolvent_residual(symbol, 0.1, u, f), 1e-12)
        self.assertLessEqual(check_resolvent_inequality(symbol, 0.1, f), 1.0 + 1e-12)

    def test_elliptic_estimate(self):
        # Zero data has ratio 0; otherwise the mode-wise bound holds.
        torus = Grid.torus(1.0, 16, 2)
        symbol = nonsymmetric_symbol()
        self.assertEqual(check_elliptic_estimate(symbol, 0.1, PeriodicField.zeros(torus)), 0.0)
        f = random_band_limited(torus, 5, np.random.default_rng(3))
        for epsilon in (0.25, 0.125, 0.0625):
            ratio = check_elliptic_estimate(symbol, epsilon, f)
            self.assertLessEqual(ratio, elliptic_estimate_bound(symbol, epsilon, torus) * (1.0 + 1e-12))

    def test_identity_tensor_ellipticity(self):
        # With â = I the symbol equals Σ_γ ξ^{2γ}.
        symbol = HomogenizedSymbol.constant(np.eye(3), 2, 2)
        self.assertAlmostEqual(symbol.ellipticity_ratio(np.random.default_rng(0)), 1.0, places=12)

    def test_odd_perturbation_is_accepted(self):
        self.assertLessEqual(nonsymmetric_symbol().require_odd(np.random.default_rng(0)), 1e-10)

    def test_defect_above_the_tolerance_is_rejected(self):
        # A negative tolerance rejects even an exactly odd Λ₀.
        with self.assertRaises(PreconditionViolation):
            nonsymmetric_symbol().require_odd(np.random.default_rng(0), tol=-1.0)


class FineSolverTest(SimpleTestCase):
    def test_constant_coefficients_act_as_the_symbol(self):
        # For constant a, A_ε is multiplication by Λ.
        grid = Grid.cell(8, 2)
        matrix = np.diag([2.0, 1.0, 2.0])
        a = CoefficientTensor.constant(matrix, 2, 2, grid, 1.0, 2.0)
        torus = torus_for(grid, 0.25, 1.0)
        u = random_band_limited(torus, 4, np.random.default_rng(0))
        result = apply_A_eps(a, 0.25, u)
        expected = PeriodicField(torus, spectral=HomogenizedSymbol.constant(matrix, 2, 2).Lambda(torus) * u.spectral)
        np.testing.assert_allclose(result.values, expected.values, atol=1e-8 * np.max(np.abs(expected.values)))

    def test_unit_epsilon_is_the_cell_operator(self):
        # ε = 1, L = 1: the torus is the cell shifted by half a period.
        a = cosine_tensor_1d()
        torus = Grid.torus(1.0, 16, 1)
        function = lambda x: np.sin(TWO_PI * x) + np.cos(2 * TWO_PI * x)
        on_torus = apply_A_eps(a, 1.0, from_function(torus, function))
        on_cell = apply_cell_operator(a, from_function(a.grid, function, zero_mean=True))
        np.testing.assert_allclose(on_torus.values, np.roll(on_cell.values, -8), atol=1e-8)

    def test_incompatible_resolution_is_rejected(self):
        a = cosine_tensor_1d(8)
        with self.assertRaises(ResolutionMismatch):
            apply_A_eps(a, 0.25, PeriodicField.zeros(Grid.torus(1.0, 24, 1)))

    def test_constant_coefficients_match_the_homogenized_solve(self):
        # Same operator, so the fine and homogenized solutions agree.
        grid = Grid.cell(8, 1)
        a = CoefficientTensor.constant([[2.0]], 2, 1, grid, 1.0, 2.0)
        torus = torus_for(grid, 0.125, 1.0)
        f = from_function(torus, lambda x: np.sin(TWO_PI * x) + 0.5 * np.cos(2 * TWO_PI * x))
        solution = solve_fine(a, 0.125, f)
        expected = solve_classical(HomogenizedSymbol.constant([[2.0]], 2, 1), f)
        np.testing.assert_allclose(solution.field.values, expected.values, atol=1e-12)

    def test_dense_direct_solve(self):
        # Small 1-d problem: GMRES agrees with the dense collocation matrix.
        a = cosine_tensor_1d(8)
        torus = torus_for(a.grid, 0.25, 1.0)
        fine = FineOperator(a, 0.25, torus)
        matrix = np.column_stack([fine.apply(column) for column in np.eye(torus.size)])
        f = from_function(torus, lambda x: np.sin(TWO_PI * x) + 0.5 * np.cos(2 * TWO_PI * x))
        direct = np.linalg.solve(matrix, f.values)
        solution = solve_fine(a, 0.25, f, tol=1e-12)
        np.testing.assert_allclose(solution.field.values, direct, atol=1e-6 * np.max(np.abs(direct)))

    def test_linearity(self):
        a = cosine_tensor_1d(8)
        torus = torus_for(a.grid, 0.25, 1.0)
        rng = np.random.default_rng(4)
        f1 = random_band_limited(torus, 6, rng, zero_mean=False)
        f2 = random_band_limited(torus, 6, rng, zero_mean=False)
        u1, u2 = solve_fine(a, 0.25, f1).field, solve_fine(a, 0.25, f2).field
        u12 = solve_fine(a, 0.25, f1 + f2).field
        self.assertLess((u12 - u1 - u2).l2_norm(), 1e-8 * u12.l2_norm())


class ApproximationsTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data = homogenize(cosine_tensor_1d(32))
        cls.epsilon = 0.125
        cls.torus = torus_for(cls.data.grid, cls.epsilon, 1.0)
        cls.f = from_function(cls.torus, lambda x: np.sin(TWO_PI * x) + 0.5 * np.cos(2 * TWO_PI * x))

    def test_v_is_the_sum_of_its_correctors(self):
        # v^ε = û^ε + ε^m K₂f + ε^{m+1} K₃f bitwise.
        bundle = build_bundle(self.data, self.epsilon, self.f)
        m = self.data.order
        rebuilt = (bundle.u_hat_eps + self.epsilon ** m * bundle.K2) + self.epsilon ** (m + 1) * bundle.K3
        np.testing.assert_array_equal(bundle.v.values, rebuilt.values)
        np.testing.assert_array_equal(build_v(self.data, self.epsilon, self.f).values, bundle.v.values)

    def test_standalone_correctors_match_the_bundle(self):
        bundle = build_bundle(self.data, self.epsilon, self.f)
        np.testing.assert_array_equal(corrector_K2(self.data, self.epsilon, self.f).values, bundle.K2.values)
        np.testing.assert_array_equal(corrector_K3(self.data, self.epsilon, self.f).values, bundle.K3.values)
        u_smooth, u_tilde = build_tilde_u(self.data, self.epsilon, self.f)
        np.testing.assert_array_equal(u_tilde.values, bundle.u_tilde.values)
        np.testing.assert_array_equal(u_smooth.values, iterated_steklov(bundle.u_hat_eps, self.epsilon).values)

    def test_errors_against_the_bundle_itself_vanish(self):
        bundle = build_bundle(self.data, self.epsilon, self.f)
        record = error_report(bundle.v, bundle)
        self.assertEqual(record.err_Hm_v, 0.0)
        self.assertAlmostEqual(record.norm_f, self.f.l2_norm())

    def test_grid_mismatch_is_rejected(self):
        bundle = build_bundle(self.data, self.epsilon, self.f)
        with self.assertRaises(ResolutionMismatch):
            error_report(PeriodicField.zeros(Grid.torus(1.0, 64, 1)), bundle)

    def test_constant_coefficients_are_reproduced_exactly(self):
        # No correctors: v^ε = û^ε = u^ε up to the solver tolerance.
        grid = Grid.cell(8, 1)
        a = CoefficientTensor.constant([[2.0]], 2, 1, grid, 1.0, 2.0)
        data = homogenize(a)
        torus = torus_for(grid, 0.25, 1.0)
        f = from_function(torus, lambda x: np.sin(TWO_PI * x))
        bundle = build_bundle(data, 0.25, f)
        u_eps = solve_fine(a, 0.25, f).field
        record = error_report(u_eps, bundle)
        self.assertLess(record.err_Hm_v, 1e-9)
        self.assertLess(bundle.K2.sup_norm(), 1e-12)
        self.assertLess(bundle.K3.sup_norm(), 1e-12)

    def test_corrector_bounds_vary_little_across_epsilon(self):
        # sup_f ‖ε^m K₂f‖_{H^m}/‖f‖ and the K₃ counterpart stay within a factor 2 as ε shrinks.
        rng = np.random.default_rng(0)
        norms = []
        for epsilon in (0.25, 0.125, 0.0625):
            torus = torus_for(self.data.grid, epsilon, 1.0)
            sources = [random_band_limited(torus, 4, rng) for _ in range(20)]
            norms.append(operator_norm_ratios(self.data, epsilon, sources))
        for key in ('K2_Hm', 'K3_Hm'):
            values = [entry[key] for entry in norms]
            self.assertGreater(min(values), 0.0)
            self.assertLessEqual(max(values) / min(values), 2.0, key)
        self.assertNotIn('v_Hm', norms[0])

    def test_fine_solve_ratio_is_second_order(self):
        # sup_f ‖u^ε − v^ε‖_{H^m}/‖f‖ drops by more than half when ε halves.
        a = cosine_tensor_1d(32)
        ratios = []
        for epsilon in (0.0625, 0.03125):
            torus = torus_for(self.data.grid, epsilon, 1.0)
            sources = [from_function(torus, lambda x: np.sin(TWO_PI * x)),
                       from_function(torus, lambda x: np.cos(2 * TWO_PI * x))]
            ratios.append(operator_norm_ratios(self.data, epsilon, sources, a=a)['v_Hm'])
        self.assertGreater(ratios[1], 0.0)
        self.assertLess(ratios[1], 0.5 * ratios[0])
