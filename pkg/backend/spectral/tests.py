import tempfile
from math import comb, sqrt
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .exceptions import InvalidKernel, InvalidMultiIndex, PreconditionViolation, ResolutionMismatch
from .fields import (
    Grid, PeriodicField, derivative, dump, from_function, mean, multiply, random_band_limited,
    require_zero_mean, sample_oscillatory, sobolev_norm, torus_for,
)
from .multiindex import MultiIndex, enumerate_multiindices, leibniz_coefficient, sub_multiindices
from .smoothing import (
    SmoothingKernel, hat_kernel, iterated_steklov, smooth_with_kernel, steklov, validate_kernel,
)

TWO_PI = 2.0 * np.pi
TRIALS = 100


def unit_vectors(dim):
    return [MultiIndex(tuple(int(i == j) for i in range(dim))) for j in range(dim)]


def gradient_norm(f):
    return sqrt(sum(derivative(f, e).l2_norm() ** 2 for e in unit_vectors(f.grid.dim)))


def oscillating_weight(dim, n=16):
    """b(y) = 2 + Π cos(2πy_j) on the cell; b² is resolved exactly by every torus used below."""
    cell = Grid.cell(n, dim)
    return from_function(cell, lambda *y: 2.0 + np.prod([np.cos(TWO_PI * c) for c in y], axis=0))


class MultiIndexTest(SimpleTestCase):
    def test_enumeration_order_and_count(self):
        # Descending lexicographic order, C(m+d−1, d−1) entries.
        self.assertEqual([alpha.exponents for alpha in enumerate_multiindices(2, 2)], [(2, 0), (1, 1), (0, 2)])
        self.assertEqual([alpha.exponents for alpha in enumerate_multiindices(0, 3)], [(0, 0, 0)])
        for order, dim in ((3, 2), (2, 3), (4, 1), (3, 3)):
            self.assertEqual(len(enumerate_multiindices(order, dim)), comb(order + dim - 1, dim - 1))
        self.assertEqual(enumerate_multiindices(3, 2), enumerate_multiindices(3, 2))

    def test_partial_order(self):
        self.assertTrue(MultiIndex.of(1, 0) <= MultiIndex.of(2, 1))
        self.assertTrue(MultiIndex.of(1, 0) < MultiIndex.of(1, 1))
        self.assertFalse(MultiIndex.of(1, 1) < MultiIndex.of(1, 1))
        self.assertFalse(MultiIndex.of(2, 0) <= MultiIndex.of(1, 1))
        self.assertFalse(MultiIndex.of(1, 1) <= MultiIndex.of(2, 0))

    def test_invalid_multiindices(self):
        with self.assertRaises(InvalidMultiIndex):
            MultiIndex.of(1, -1)
        with self.assertRaises(InvalidMultiIndex):
            MultiIndex.of(1, 0) <= MultiIndex.of(1, 0, 0)
        with self.assertRaises(InvalidMultiIndex):
            MultiIndex.of(1, 0) - MultiIndex.of(0, 1)

    def test_offset(self):
        # β + γ − δ, or None when a component goes negative.
        self.assertEqual(MultiIndex.of(1, 1).offset(MultiIndex.of(1, 0), MultiIndex.of(0, 2)), None)
        self.assertEqual(MultiIndex.of(2, 0).offset(MultiIndex.of(1, 1), MultiIndex.of(3, 0)), MultiIndex.of(0, 1))

    def test_leibniz_examples(self):
        alpha = MultiIndex.of(2, 1)
        self.assertEqual(leibniz_coefficient(alpha, MultiIndex.zero(2)), 1)
        self.assertEqual(leibniz_coefficient(alpha, alpha), 1)
        self.assertEqual(leibniz_coefficient(alpha, MultiIndex.of(1, 0)), 2)
        self.assertEqual(leibniz_coefficient(MultiIndex.of(2, 0), MultiIndex.of(1, 0)), 2)
        with self.assertRaises(InvalidMultiIndex):
            leibniz_coefficient(MultiIndex.of(1, 0), MultiIndex.of(0, 1))

    def test_leibniz_symmetry_and_sum(self):
        # c_{α,γ} = c_{α,α−γ} and Σ_γ c_{α,γ} = 2^{|α|}.
        for alpha in enumerate_multiindices(3, 2) + enumerate_multiindices(2, 3):
            gammas = sub_multiindices(alpha)
            for gamma in gammas:
                self.assertEqual(leibniz_coefficient(alpha, gamma), leibniz_coefficient(alpha, alpha - gamma))
            self.assertEqual(sum(leibniz_coefficient(alpha, gamma) for gamma in gammas), 2 ** alpha.order)

    def test_labels(self):
        alpha = MultiIndex.of(2, 0, 1)
        self.assertEqual(alpha.label(), '2-0-1')
        self.assertEqual(MultiIndex.from_label('2-0-1'), alpha)
        self.assertEqual(alpha.to_list(), [2, 0, 1])


class PeriodicFieldTest(SimpleTestCase):
    def test_second_derivative_of_cosine(self):
        grid = Grid.cell(16, 1)
        f = from_function(grid, lambda y: np.cos(TWO_PI * y))
        expected = -TWO_PI ** 2 * f.values
        np.testing.assert_allclose(derivative(f, (2,)).values, expected, atol=1e-10)

    def test_derivative_of_a_constant_vanishes(self):
        f = PeriodicField.constant(Grid.cell(8, 2), 3.0)
        for alpha in ((1, 0), (1, 1), (0, 3)):
            np.testing.assert_allclose(derivative(f, alpha).values, 0.0, atol=1e-9)

    def test_mixed_derivative(self):
        # D^{(1,1)} sin(2πy₁)cos(4πy₂) = −8π² cos(2πy₁) sin(4πy₂).
        grid = Grid.cell(16, 2)
        f = from_function(grid, lambda y1, y2: np.sin(TWO_PI * y1) * np.cos(2 * TWO_PI * y2))
        expected = from_function(grid, lambda y1, y2: -2.0 * TWO_PI ** 2 * np.cos(TWO_PI * y1)
                                 * np.sin(2 * TWO_PI * y2))
        np.testing.assert_allclose(derivative(f, (1, 1)).values, expected.values, atol=1e-10)

    def test_derivatives_compose(self):
        # D^α D^β = D^{α+β}, and every derivative has zero mean.
        grid = Grid.torus(1.0, 16, 2)
        f = random_band_limited(grid, 7, np.random.default_rng(0), zero_mean=False)
        for alpha, beta in (((1, 0), (0, 1)), ((2, 0), (1, 1)), ((1, 1), (0, 2))):
            composed = derivative(derivative(f, alpha), beta)
            direct = derivative(f, MultiIndex.of(*alpha) + MultiIndex.of(*beta))
            np.testing.assert_allclose(composed.values, direct.values, atol=1e-12 * np.max(np.abs(direct.values)))
            self.assertEqual(mean(derivative(f, alpha)), 0.0)

    def test_nyquist_mode_is_annihilated(self):
        grid = Grid.torus(1.0, 8, 1)
        f = PeriodicField(grid, values=(-1.0) ** np.arange(8))
        np.testing.assert_allclose(derivative(f, (1,)).values, 0.0, atol=1e-12)

    def test_means(self):
        grid = Grid.cell(16, 1)
        self.assertAlmostEqual(mean(from_function(grid, lambda y: 3.0 + np.cos(TWO_PI * y))), 3.0, places=14)
        self.assertAlmostEqual(mean(from_function(grid, lambda y: np.sin(TWO_PI * y))), 0.0, places=14)
        product = multiply(from_function(grid, lambda y: 2.0 * np.cos(TWO_PI * y)),
                           from_function(grid, lambda y: 3.0 * np.cos(TWO_PI * y)))
        self.assertAlmostEqual(mean(product), 3.0, places=13)

    def test_sobolev_norms_of_a_sine(self):
        torus = Grid.torus(1.0, 16, 1)
        f = from_function(torus, lambda x: np.sin(TWO_PI * x))
        self.assertAlmostEqual(sobolev_norm(f, 0), sqrt(0.5), places=13)
        self.assertAlmostEqual(sobolev_norm(f, 1), sqrt((1.0 + TWO_PI ** 2) / 2.0), places=12)
        self.assertAlmostEqual(sobolev_norm(f, -2), sqrt((1.0 + TWO_PI ** 2) ** -2 / 2.0), places=15)

    def test_plancherel(self):
        # ‖f‖² = L^d times the grid mean square.
        torus = Grid.torus(2.0, 16, 2)
        f = random_band_limited(torus, 7, np.random.default_rng(1), zero_mean=False, normalize=False)
        direct = torus.volume * np.mean(f.values ** 2)
        self.assertAlmostEqual(f.l2_norm() ** 2 / direct, 1.0, places=12)

    def test_zero_mean_tag(self):
        grid = Grid.cell(8, 1)
        with self.assertRaises(PreconditionViolation):
            require_zero_mean(from_function(grid, lambda y: 1.0 + np.cos(TWO_PI * y)))
        tagged = from_function(grid, lambda y: 1.0 + np.cos(TWO_PI * y), zero_mean=True)
        require_zero_mean(tagged)
        self.assertEqual(mean(tagged), 0.0)

    def test_dealiased_product_of_resolved_modes(self):
        # Padding changes nothing while the product is still resolved.
        grid = Grid.torus(1.0, 16, 1)
        f = from_function(grid, lambda x: np.cos(TWO_PI * x))
        g = from_function(grid, lambda x: np.sin(2 * TWO_PI * x))
        np.testing.assert_allclose(multiply(f, g, dealias=True).values, multiply(f, g).values, atol=1e-13)

    def test_dump_writes_every_value(self):
        f = from_function(Grid.cell(4, 2), lambda y1, y2: y1 + 10 * y2)
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'field.csv'
            dump(f, path)
            np.testing.assert_allclose(np.loadtxt(path, delimiter=','), f.values.reshape(-1))


class OscillatorySamplingTest(SimpleTestCase):
    def test_cosine_is_compressed(self):
        # cos(2πy) with ε = 1/4 becomes cos(8πx).
        cell = from_function(Grid.cell(16, 1), lambda y: np.cos(TWO_PI * y))
        torus = torus_for(cell.grid, 0.25, 1.0)
        sampled = sample_oscillatory(cell, 0.25, torus)
        expected = from_function(torus, lambda x: np.cos(4 * TWO_PI * x))
        np.testing.assert_allclose(sampled.values, expected.values, atol=1e-12)

    def test_constant_stays_constant(self):
        cell = PeriodicField.constant(Grid.cell(8, 2), 2.5)
        torus = torus_for(cell.grid, 0.5, 2.0)
        np.testing.assert_array_equal(sample_oscillatory(cell, 0.5, torus).values, 2.5)

    def test_piecewise_constant_is_tiled(self):
        # Torus index j reads cell index (j + n/2) mod n.
        cell_grid = Grid.cell(8, 1)
        cell = from_function(cell_grid, lambda y: np.where(np.abs(y) < 0.25, 3.0, 1.0))
        torus = torus_for(cell_grid, 0.125, 1.0)
        sampled = sample_oscillatory(cell, 0.125, torus)
        for j in range(torus.shape[0]):
            self.assertEqual(sampled.values[j], cell.values[(j + 4) % 8])

    def test_norm_per_unit_volume_is_preserved(self):
        cell = random_band_limited(Grid.cell(8, 2), 3, np.random.default_rng(2), zero_mean=False)
        torus = torus_for(cell.grid, 0.25, 2.0)
        sampled = sample_oscillatory(cell, 0.25, torus)
        self.assertAlmostEqual(sampled.l2_norm() / sqrt(torus.volume), cell.l2_norm(), places=12)

    def test_incompatible_resolutions_are_rejected(self):
        cell = PeriodicField.constant(Grid.cell(8, 1), 1.0)
        with self.assertRaises(ResolutionMismatch):
            sample_oscillatory(cell, 0.25, Grid.torus(1.0, 16, 1))
        with self.assertRaises(ResolutionMismatch):
            torus_for(cell.grid, 0.3, 1.0)


class SmoothingTest(SimpleTestCase):
    def test_constants_are_preserved(self):
        f = PeriodicField.constant(Grid.torus(1.0, 16, 2), 1.75)
        np.testing.assert_allclose(steklov(f, 0.25).values, 1.75, atol=1e-14)
        np.testing.assert_allclose(iterated_steklov(f, 0.25).values, 1.75, atol=1e-14)

    def test_steklov_of_a_sine(self):
        # σ(π/2) = 2/π and σ(π) = 0.
        torus = Grid.torus(1.0, 16, 1)
        f = from_function(torus, lambda x: np.sin(TWO_PI * x))
        np.testing.assert_allclose(steklov(f, 0.5).values, 2.0 / np.pi * f.values, atol=1e-14)
        np.testing.assert_allclose(iterated_steklov(f, 0.5).values, (2.0 / np.pi) ** 2 * f.values, atol=1e-14)
        np.testing.assert_allclose(steklov(f, 1.0).values, 0.0, atol=1e-14)

    def test_steklov_matches_the_cell_average(self):
        # S^ε f(x) = ε^{-1}∫_{x−ε/2}^{x+ε/2} f for f = sin(2πx).
        torus = Grid.torus(1.0, 16, 1)
        f = from_function(torus, lambda x: np.sin(TWO_PI * x))
        epsilon = 0.3
        x = torus.origin + np.arange(16) / 16.0
        average = (np.cos(TWO_PI * (x - epsilon / 2)) - np.cos(TWO_PI * (x + epsilon / 2))) / (TWO_PI * epsilon)
        np.testing.assert_allclose(steklov(f, epsilon).values, average, atol=1e-14)

    def test_iterated_is_steklov_twice(self):
        f = random_band_limited(Grid.torus(1.0, 32, 2), 10, np.random.default_rng(3))
        np.testing.assert_allclose(iterated_steklov(f, 0.125).values, steklov(steklov(f, 0.125), 0.125).values,
                                   atol=1e-14)

    def test_named_kernels_reproduce_the_operators(self):
        f = random_band_limited(Grid.torus(1.0, 32, 2), 10, np.random.default_rng(4))
        np.testing.assert_array_equal(smooth_with_kernel(f, 0.125, SmoothingKernel.from_name('steklov')).values,
                                      steklov(f, 0.125).values)
        np.testing.assert_array_equal(smooth_with_kernel(f, 0.125, SmoothingKernel.from_name('steklov2')).values,
                                      iterated_steklov(f, 0.125).values)

    def test_hat_kernel_is_iterated_steklov_in_one_dimension(self):
        # The triangle on [−1, 1] is the indicator of Y convolved with itself.
        f = random_band_limited(Grid.torus(1.0, 32, 1), 15, np.random.default_rng(5))
        np.testing.assert_allclose(smooth_with_kernel(f, 0.25, hat_kernel(1)).values,
                                   iterated_steklov(f, 0.25).values, atol=1e-12)

    def test_invalid_kernels_are_rejected(self):
        with self.assertRaises(InvalidKernel):
            SmoothingKernel('gaussian', lambda scaled: 1.0)
        with self.assertRaises(InvalidKernel):
            SmoothingKernel.custom(lambda scaled: 2.0 * np.cos(scaled[0]), dim=1)
        with self.assertRaises(InvalidKernel):
            SmoothingKernel.custom(lambda scaled: np.exp(0.1j * scaled[0]), dim=1)
        with self.assertRaises(InvalidKernel):
            SmoothingKernel.custom(lambda scaled: 1.0 + scaled[0] ** 2, dim=1)
        with self.assertRaises(InvalidKernel):
            SmoothingKernel.from_profile(lambda w: 2.0 * np.clip(1.0 - np.abs(w), 0.0, None), 1.0, 1)
        with self.assertRaises(InvalidKernel):
            SmoothingKernel.from_name('custom')

    def test_valid_custom_kernel(self):
        kernel = SmoothingKernel.custom(lambda scaled: np.sinc(scaled[0] / TWO_PI) ** 4, dim=1)
        self.assertIs(validate_kernel(kernel, 1), kernel)


class SmoothingInequalityTest(SimpleTestCase):
    """Inequalities for S^ε and Θ^ε checked over random band-limited fields."""

    def test_steklov_is_nonexpansive(self):
        rng = np.random.default_rng(10)
        for dim in (1, 2):
            torus = Grid.torus(1.0, 32, dim)
            for _ in range(TRIALS):
                phi = random_band_limited(torus, 12, rng)
                self.assertLessEqual(steklov(phi, 0.1).l2_norm(), phi.l2_norm() * (1.0 + 1e-12))

    def test_steklov_approximates_identity(self):
        # ‖S^ε φ − φ‖ <= (√d/2) ε ‖∇φ‖.
        rng = np.random.default_rng(11)
        for dim in (1, 2):
            torus = Grid.torus(1.0, 32, dim)
            for epsilon in (0.25, 0.05):
                for _ in range(TRIALS):
                    phi = random_band_limited(torus, 12, rng)
                    bound = sqrt(dim) / 2.0 * epsilon * gradient_norm(phi)
                    self.assertLessEqual((steklov(phi, epsilon) - phi).l2_norm(), bound * (1.0 + 1e-12))

    def test_oscillating_weight_after_smoothing(self):
        # ‖b^ε S^ε φ‖ <= ⟨b²⟩^{1/2} ‖φ‖.
        rng = np.random.default_rng(12)
        for dim in (1, 2):
            b = oscillating_weight(dim)
            weight = sqrt(mean(multiply(b, b)))
            for epsilon in (0.25, 0.125):
                torus = torus_for(b.grid, epsilon, 1.0)
                b_eps = sample_oscillatory(b, epsilon, torus)
                for _ in range(TRIALS):
                    phi = random_band_limited(torus, 4, rng)
                    lhs = multiply(b_eps, steklov(phi, epsilon)).l2_norm()
                    self.assertLessEqual(lhs, weight * phi.l2_norm() * (1.0 + 1e-12))

    def test_iterated_steklov_is_second_order(self):
        # ‖Θ^ε φ − φ‖ decays like ε² for a fixed smooth φ.
        torus = Grid.torus(1.0, 32, 2)
        phi = from_function(torus, lambda x1, x2: np.sin(TWO_PI * x1) * np.cos(TWO_PI * x2) + np.cos(2 * TWO_PI * x2))
        epsilons = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
        errors = np.array([(iterated_steklov(phi, e) - phi).l2_norm() for e in epsilons])
        slope = np.polyfit(np.log(epsilons), np.log(errors), 1)[0]
        self.assertGreaterEqual(slope, 1.9)

    def test_iterated_steklov_in_the_dual_norm(self):
        # ‖Θ^ε φ − φ‖_{H^{-2}} <= ε²/12 ‖φ‖ with the same constant for every ε.
        rng = np.random.default_rng(13)
        for dim in (1, 2):
            torus = Grid.torus(1.0, 32, dim)
            for epsilon in (0.5, 0.25, 0.125, 0.0625):
                worst = 0.0
                for _ in range(TRIALS):
                    phi = random_band_limited(torus, 15, rng)
                    worst = max(worst, (iterated_steklov(phi, epsilon) - phi).sobolev_norm(-2) / phi.l2_norm())
                self.assertLessEqual(worst / epsilon ** 2, 1.0 / 12.0 * (1.0 + 1e-12))

    def test_smoothed_gradient_bounds(self):
        # ‖Θ^ε ∇φ‖ and ‖b^ε Θ^ε ∇φ‖/⟨b²⟩^{1/2} are at most 2√d ε^{-1} ‖φ‖.
        rng = np.random.default_rng(14)
        for dim in (1, 2):
            b = oscillating_weight(dim)
            weight = sqrt(mean(multiply(b, b)))
            constant = 2.0 * sqrt(dim)
            for epsilon in (0.25, 0.125):
                torus = torus_for(b.grid, epsilon, 1.0)
                b_eps = sample_oscillatory(b, epsilon, torus)
                for _ in range(TRIALS):
                    phi = random_band_limited(torus, 4, rng)
                    smoothed = [iterated_steklov(derivative(phi, e), epsilon) for e in unit_vectors(dim)]
                    plain = sqrt(sum(s.l2_norm() ** 2 for s in smoothed))
                    weighted = sqrt(sum(multiply(b_eps, s).l2_norm() ** 2 for s in smoothed))
                    self.assertLessEqual(epsilon * plain, constant * phi.l2_norm() * (1.0 + 1e-12))
                    self.assertLessEqual(epsilon * weighted, constant * weight * phi.l2_norm() * (1.0 + 1e-12))
