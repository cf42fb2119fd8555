import tempfile
from math import sqrt

import numpy as np
from django.test import SimpleTestCase, tag

from spectral.exceptions import EllipticityViolation, PreconditionViolation
from spectral.fields import Grid, PeriodicField, derivative, from_function, random_band_limited
from spectral.multiindex import MultiIndex, enumerate_multiindices

from .bundle import load_bundle, save_bundle
from .krylov import solve_preconditioned
from .models import CoefficientTensor, KrylovResult
from .operators import apply_cell_operator, check_ellipticity
from .potentials import check_potential_identity, divergence_residual, skew_potential
from .problems import (
    b_and_gtilde, homogenize, homogenized_coefficients, second_cell_rhs, solve_first_cell,
    solve_second_cell, solve_second_cell_from_residual_tensor,
)

TWO_PI = 2.0 * np.pi


def cosine_tensor_1d(n=64):
    """d=1, m=2, a(y) = 2 + cos(2πy)."""
    grid = Grid.cell(n, 1)
    a = from_function(grid, lambda y: 2.0 + np.cos(TWO_PI * y))
    return CoefficientTensor(2, 1, {((2,), (2,)): a}, lambda0=1.0, lambda1=3.0)


def nonsymmetric_tensor_2d(n=8):
    """d=2, m=2 with a coupling a_{(2,0),(1,1)} that has no mirror entry."""
    grid = Grid.cell(n, 2)
    entries = {
        ((2, 0), (2, 0)): from_function(grid, lambda y1, y2: 2.0 + 0.5 * np.cos(TWO_PI * y1)),
        ((1, 1), (1, 1)): PeriodicField.constant(grid, 2.0),
        ((0, 2), (0, 2)): from_function(grid, lambda y1, y2: 2.0 + 0.5 * np.cos(TWO_PI * y2)),
        ((2, 0), (1, 1)): from_function(grid, lambda y1, y2: 0.3 * np.sin(TWO_PI * (y1 + y2))),
    }
    return CoefficientTensor(2, 2, entries, lambda0=1.0, lambda1=2.5)


def laminate_tensor_2d(n=16):
    """Laminate in y1 with a_{(2,0),(2,0)} and the coupling a_{(2,0),(1,1)} oscillating in quadrature."""
    grid = Grid.cell(n, 2)
    entries = {
        ((2, 0), (2, 0)): from_function(grid, lambda y1, y2: 2.0 + 1.2 * np.cos(TWO_PI * y1)),
        ((1, 1), (1, 1)): PeriodicField.constant(grid, 2.0),
        ((0, 2), (0, 2)): PeriodicField.constant(grid, 1.0),
        ((2, 0), (1, 1)): from_function(grid, lambda y1, y2: 2.0 * np.sin(TWO_PI * y1)),
    }
    return CoefficientTensor(2, 2, entries, lambda0=0.5, lambda1=3.2)


def constant_tensor_2d(n=8):
    matrix = [[2.0, 0.0, 0.5], [0.0, 1.5, 0.0], [0.5, 0.0, 2.0]]
    return CoefficientTensor.constant(matrix, 2, 2, Grid.cell(n, 2), lambda0=1.0, lambda1=2.0), np.array(matrix)


class CoefficientTensorTest(SimpleTestCase):
    def test_sup_bound_is_enforced(self):
        # Entries larger than the declared λ1 on the grid are a configuration error.
        grid = Grid.cell(16, 1)
        a = from_function(grid, lambda y: 2.0 + np.cos(TWO_PI * y))
        with self.assertRaises(EllipticityViolation):
            CoefficientTensor(2, 1, {((2,), (2,)): a}, lambda0=1.0, lambda1=2.5)

    def test_symmetry_flag(self):
        # The symmetric flag compares a_{αβ} with a_{βα} entry by entry.
        self.assertTrue(cosine_tensor_1d(16).symmetric)
        self.assertFalse(nonsymmetric_tensor_2d().symmetric)
        self.assertTrue(constant_tensor_2d()[0].symmetric)


class CellOperatorTest(SimpleTestCase):
    def test_negative_laplacian_on_a_single_mode(self):
        # m=1, a=1: A sin(2πy) = (2π)² sin(2πy).
        grid = Grid.cell(16, 1)
        a = CoefficientTensor(1, 1, {((1,), (1,)): PeriodicField.constant(grid, 1.0)}, 1.0, 1.0)
        u = from_function(grid, lambda y: np.sin(TWO_PI * y), zero_mean=True)
        result = apply_cell_operator(a, u)
        np.testing.assert_allclose(result.values, TWO_PI ** 2 * u.values, atol=1e-9)

    def test_biharmonic_with_constant_coefficient(self):
        # m=2, a=3: A sin(2πy) = 3(2π)⁴ sin(2πy).
        grid = Grid.cell(16, 1)
        a = CoefficientTensor(2, 1, {((2,), (2,)): PeriodicField.constant(grid, 3.0)}, 1.0, 3.0)
        u = from_function(grid, lambda y: np.sin(TWO_PI * y), zero_mean=True)
        result = apply_cell_operator(a, u)
        np.testing.assert_allclose(result.values, 3.0 * TWO_PI ** 4 * u.values, atol=1e-7)

    def test_variable_coefficient_matches_closed_form(self):
        # −((2+cos)u')' with u = sin(2πy) equals (2π)²(2 sin(2πy) + sin(4πy)).
        grid = Grid.cell(16, 1)
        a = CoefficientTensor(1, 1, {((1,), (1,)): from_function(grid, lambda y: 2.0 + np.cos(TWO_PI * y))},
                              1.0, 3.0)
        u = from_function(grid, lambda y: np.sin(TWO_PI * y), zero_mean=True)
        expected = from_function(grid, lambda y: TWO_PI ** 2 * (2.0 * np.sin(TWO_PI * y) + np.sin(2 * TWO_PI * y)))
        np.testing.assert_allclose(apply_cell_operator(a, u).values, expected.values, atol=1e-9)

    def test_nonzero_mean_argument_is_rejected(self):
        # The cell operator acts on W only.
        a = cosine_tensor_1d(16)
        with self.assertRaises(PreconditionViolation):
            apply_cell_operator(a, PeriodicField.constant(a.grid, 1.0))


class EllipticityTest(SimpleTestCase):
    def test_identity_tensor_has_ratio_one(self):
        # Constant a with unit diagonal gives exactly the W norm.
        grid = Grid.cell(8, 2)
        a = CoefficientTensor.constant(np.eye(3), 2, 2, grid, 1.0, 1.0)
        self.assertAlmostEqual(check_ellipticity(a, trials=8), 1.0, places=10)

    def test_pointwise_lower_bound(self):
        # a = 2 + cos(2πy) >= 1 on the grid, so the ratio is at least 1.
        ratio = check_ellipticity(cosine_tensor_1d(32), trials=16)
        self.assertGreaterEqual(ratio, 1.0 - 1e-12)

    def test_trials_are_reproducible(self):
        # A fixed seed gives the same estimate.
        a = nonsymmetric_tensor_2d()
        self.assertEqual(check_ellipticity(a, trials=5, seed=3), check_ellipticity(a, trials=5, seed=3))

    def test_overstated_lambda0_is_flagged(self):
        # Declaring λ0 = 2.5 for a tensor that reaches 1 fails the check.
        grid = Grid.cell(32, 1)
        a = CoefficientTensor(2, 1, {((2,), (2,)): from_function(grid, lambda y: 2.0 + np.cos(TWO_PI * y))},
                              lambda0=2.5, lambda1=3.0)
        with self.assertRaises(EllipticityViolation):
            check_ellipticity(a, trials=16)


class KrylovTest(SimpleTestCase):
    def test_zero_right_hand_side_short_circuits(self):
        grid = Grid.cell(8, 1)
        result = solve_preconditioned(lambda v: v, 1.0, np.zeros(grid.shape), grid, 1e-10, 10, 5)
        self.assertIsInstance(result, KrylovResult)
        self.assertEqual(result.iterations, 0)
        self.assertEqual(result.history, [])
        np.testing.assert_array_equal(result.solution, 0.0)

    def test_identity_operator(self):
        # P⁻¹A = I converges in one step.
        grid = Grid.cell(8, 1)
        rhs = np.random.default_rng(0).standard_normal(grid.shape)
        result = solve_preconditioned(lambda v: v, 1.0, rhs, grid, 1e-10, 10, 5)
        np.testing.assert_allclose(result.solution, rhs, atol=1e-12)
        self.assertLessEqual(result.residual, 1e-10)

    def test_cell_solve_reports_its_iterations(self):
        N, result = solve_first_cell(cosine_tensor_1d(16), MultiIndex.of(2), with_result=True)
        self.assertIsInstance(result, KrylovResult)
        self.assertGreater(result.iterations, 0)
        self.assertEqual(len(result.history), result.iterations)
        self.assertLessEqual(result.residual, 1e-10)
        self.assertEqual(result.solution.shape, N.values.shape)


class FirstCellProblemTest(SimpleTestCase):
    def test_constant_coefficients_have_no_corrector(self):
        # The right-hand side vanishes, and so does N_γ.
        a, _ = constant_tensor_2d()
        for gamma in a.indices:
            self.assertLess(solve_first_cell(a, gamma).sup_norm(), 1e-12)

    def test_one_dimensional_closed_form(self):
        # a(1 + N″) is constant, so N″ = √3/a − 1.
        a = cosine_tensor_1d(64)
        N = solve_first_cell(a, MultiIndex.of(2), tol=1e-12)
        expected = from_function(a.grid, lambda y: sqrt(3.0) / (2.0 + np.cos(TWO_PI * y)) - 1.0)
        np.testing.assert_allclose(derivative(N, (2,)).values, expected.values, atol=1e-8)
        self.assertLess(abs(N.mean()), 1e-14)

    def test_homogenized_coefficient_oracle(self):
        # â = ⟨1/a⟩⁻¹ = √3 for a = 2 + cos(2πy).
        a = cosine_tensor_1d()
        N_first = {MultiIndex.of(2): solve_first_cell(a, MultiIndex.of(2))}
        a_hat, g = homogenized_coefficients(a, N_first)
        self.assertAlmostEqual(a_hat[0, 0], sqrt(3.0), delta=1e-6)
        self.assertLess(abs(g[(MultiIndex.of(2), MultiIndex.of(2))].mean()), 1e-14)

    def test_constant_homogenized_tensor_is_the_coefficient(self):
        # Constant a: â = a and g = 0.
        a, matrix = constant_tensor_2d()
        N_first = {gamma: solve_first_cell(a, gamma) for gamma in a.indices}
        a_hat, g = homogenized_coefficients(a, N_first)
        np.testing.assert_allclose(a_hat, matrix, atol=1e-12)
        for field in g.values():
            self.assertLess(field.sup_norm(), 1e-12)

    def test_residual_tensor_is_divergence_free(self):
        # Σ_α D^α g_{αβ} = 0 up to the solver tolerance.
        a = nonsymmetric_tensor_2d()
        N_first = {gamma: solve_first_cell(a, gamma) for gamma in a.indices}
        _, g = homogenized_coefficients(a, N_first)
        for beta in a.indices:
            self.assertLess(divergence_residual({alpha: g[(alpha, beta)] for alpha in a.indices}), 1e-8)


class SkewPotentialTest(SimpleTestCase):
    def divergence_free_vector(self, order, n=16, seed=0):
        # g_α = Σ_γ D^γ H_{γα} with H skew is divergence free for any H.
        grid = Grid.cell(n, 2)
        rng = np.random.default_rng(seed)
        indices = enumerate_multiindices(order, 2)
        H = {}
        for i, gamma in enumerate(indices):
            for alpha in indices[i + 1:]:
                H[(gamma, alpha)] = random_band_limited(grid, 3, rng)
                H[(alpha, gamma)] = -H[(gamma, alpha)]
        g = {}
        for alpha in indices:
            total = PeriodicField.zeros(grid)
            for gamma in indices:
                if gamma != alpha:
                    total = PeriodicField(grid, spectral=total.spectral + derivative(H[(gamma, alpha)], gamma).spectral,
                                          zero_mean=True)
            g[alpha] = total
        return g

    def test_zero_vector_gives_zero_potential(self):
        grid = Grid.cell(8, 2)
        g = {alpha: PeriodicField.zeros(grid) for alpha in enumerate_multiindices(2, 2)}
        G = skew_potential(g)
        self.assertTrue(all(field.sup_norm() == 0.0 for field in G.values()))

    def test_divergence_identity_and_skew_symmetry(self):
        # Σ_γ D^γ G_{γα} = g_α and G_{γα} = −G_{αγ} bitwise, for m = 1 and m = 2.
        for order in (1, 2):
            g = self.divergence_free_vector(order)
            G = skew_potential(g)
            self.assertLess(check_potential_identity(G, g), 1e-12)
            for (gamma, alpha), field in G.items():
                np.testing.assert_array_equal(field.spectral, -G[(alpha, gamma)].spectral)

    def test_rejects_a_vector_with_divergence(self):
        # (cos(2πy₁), 0) has divergence −2π sin(2πy₁).
        grid = Grid.cell(8, 2)
        g = {MultiIndex.of(1, 0): from_function(grid, lambda y1, y2: np.cos(TWO_PI * y1), zero_mean=True),
             MultiIndex.of(0, 1): PeriodicField.zeros(grid)}
        with self.assertRaises(PreconditionViolation):
            skew_potential(g)

    def test_rejects_a_nonzero_mean(self):
        grid = Grid.cell(8, 2)
        g = {MultiIndex.of(1, 0): PeriodicField.constant(grid, 1.0),
             MultiIndex.of(0, 1): PeriodicField.zeros(grid)}
        with self.assertRaises(PreconditionViolation):
            skew_potential(g)


class SecondCellProblemTest(SimpleTestCase):
    def setUp(self):
        self.a = cosine_tensor_1d()
        self.gamma = MultiIndex.of(2)
        self.delta = MultiIndex.of(3)
        N = solve_first_cell(self.a, self.gamma)
        self.N_first = {self.gamma: N}
        zero = PeriodicField.zeros(self.a.grid)
        self.G = {(self.gamma, self.gamma, self.gamma): zero}

    def test_one_dimensional_right_hand_side(self):
        # Only β=γ=(2), μ=(1) contributes, with c = 2: F = 2 a N′.
        F = second_cell_rhs(self.a, self.N_first, self.G)
        a = self.a.entries[(self.gamma, self.gamma)].values
        expected = 2.0 * a * derivative(self.N_first[self.gamma], (1,)).values
        np.testing.assert_allclose(F[(self.gamma, self.delta)].values, expected, atol=1e-12)

    def test_zero_source_gives_zero_solution(self):
        F = {(self.gamma, self.delta): PeriodicField.zeros(self.a.grid)}
        self.assertEqual(solve_second_cell(self.a, F, self.delta).sup_norm(), 0.0)

    def test_b_vanishes_in_one_dimension(self):
        # a N_δ″ + 2aN′ is constant with zero mean, so b = 0 and g̃ = 0.
        F = second_cell_rhs(self.a, self.N_first, self.G)
        N_second = {self.delta: solve_second_cell(self.a, F, self.delta)}
        b, g_tilde, G_tilde = b_and_gtilde(self.a, N_second, F)
        self.assertLess(abs(b[0, 0]), 1e-8)
        self.assertLess(g_tilde[(self.gamma, self.delta)].sup_norm(), 1e-6)
        self.assertLess(abs(g_tilde[(self.gamma, self.delta)].mean()), 1e-10)

    def test_both_assembly_routes_agree(self):
        # Eliminating G in favour of g changes N_δ only at the solver tolerance.
        a = nonsymmetric_tensor_2d()
        data = homogenize(a, tol=1e-12)
        for delta in enumerate_multiindices(3, 2):
            direct = data.N_second[delta]
            other = solve_second_cell_from_residual_tensor(a, data.N_first, data.g, delta, tol=1e-12)
            scale = max(direct.l2_norm(), 1e-30)
            self.assertLess((direct - other).l2_norm() / scale, 1e-8)


class HomogenizeTest(SimpleTestCase):
    def test_constant_coefficients(self):
        # N = 0, â = a, b = 0, g = g̃ = 0.
        a, matrix = constant_tensor_2d()
        data = homogenize(a)
        np.testing.assert_allclose(data.a_hat, matrix, atol=1e-12)
        np.testing.assert_allclose(data.b, 0.0, atol=1e-12)
        for fields in (data.N_first, data.N_second, data.g, data.g_tilde):
            for field in fields.values():
                self.assertLess(field.sup_norm(), 1e-12)

    def test_nonsymmetric_structure(self):
        # Every accepted run has divergence-free g, g̃ and exactly skew G, G̃.
        data = homogenize(nonsymmetric_tensor_2d())
        residuals = list(data.diagnostics['divergence_residual_g'].values()) \
            + list(data.diagnostics['divergence_residual_g_tilde'].values())
        self.assertLess(max(residuals), 1e-8)
        for (gamma, alpha, last), field in data.G_tilde.items():
            np.testing.assert_array_equal(field.spectral, -data.G_tilde[(alpha, gamma, last)].spectral)
        for N in list(data.N_first.values()) + list(data.N_second.values()):
            self.assertLess(abs(N.mean()), 1e-14)
        self.assertFalse(data.symmetric)

    def test_thread_count_does_not_change_the_result(self):
        # Parallel cell solves are assembled in a fixed order.
        a = nonsymmetric_tensor_2d()
        serial, parallel = homogenize(a, threads=1), homogenize(a, threads=3)
        np.testing.assert_array_equal(serial.a_hat, parallel.a_hat)
        np.testing.assert_array_equal(serial.b, parallel.b)
        for delta, field in serial.N_second.items():
            np.testing.assert_array_equal(field.values, parallel.N_second[delta].values)

    @tag('slow')
    def test_potential_constant_is_stable_under_refinement(self):
        # ‖G‖_{H^m}/Σ‖g‖ moves by less than 20% from n = 16 to n = 32.
        coarse = homogenize(nonsymmetric_tensor_2d(16)).diagnostics['potential_constant']
        fine = homogenize(nonsymmetric_tensor_2d(32)).diagnostics['potential_constant']
        self.assertGreater(coarse, 0.0)
        self.assertLess(abs(fine - coarse) / coarse, 0.2)

    @tag('slow')
    def test_nonzero_b_is_stable_under_refinement(self):
        # The quadrature laminate has b of order 0.1; doubling n moves it by under 2%.
        coarse = homogenize(laminate_tensor_2d(16)).b
        fine = homogenize(laminate_tensor_2d(32)).b
        scale = np.max(np.abs(fine))
        self.assertGreater(scale, 1e-2)
        self.assertLess(np.max(np.abs(fine - coarse)), 2e-2 * scale)

    def test_bundle_round_trip(self):
        # The JSON + npz bundle restores tensors and fields.
        data = homogenize(cosine_tensor_1d(32))
        with tempfile.TemporaryDirectory() as directory:
            save_bundle(data, f'{directory}/cell')
            loaded = load_bundle(f'{directory}/cell.json')
        np.testing.assert_array_equal(loaded.a_hat, data.a_hat)
        np.testing.assert_array_equal(loaded.b, data.b)
        self.assertEqual(set(loaded.F), set(data.F))
        gamma = MultiIndex.of(2)
        np.testing.assert_allclose(loaded.N_first[gamma].values, data.N_first[gamma].values, atol=1e-15)
