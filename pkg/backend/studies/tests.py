import json
import tempfile
from io import StringIO
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import yaml
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings, tag

from solvers.models import ErrorRecord
from spectral.exceptions import PreconditionViolation, ResolutionMismatch
from spectral.fields import Grid, coordinates
from spectral.smoothing import SmoothingKernel

from .exceptions import StageError
from .models import CSV_COLUMNS, FITTED_COLUMNS, NOISE_FLOOR
from .runner import (
    check_expectations, config_hash, fit_rate, fit_slopes, load_config, parse_config, read_report_csv,
    run_study, write_report_csv,
)
from .serializers import StudyConfigSerializer
from .terms import build_coefficients, build_kernel, term_values
from .verification import run_suite

TWO_PI = 2.0 * np.pi
EPSILONS = [0.125, 0.0625, 0.03125, 0.015625]


def constant_document(**overrides):
    document = {
        'name': 'constant',
        'd': 1,
        'm': 2,
        'cell_resolution': 8,
        'coefficients': [{'alpha': [2], 'beta': [2], 'terms': [{'const': 2.0}]}],
        'lambda0': 1.0,
        'lambda1': 2.0,
        'rhs': [{'trig': {'k': [1], 'kind': 'sin'}}],
        'epsilons': [0.5, 0.25, 0.125],
    }
    document.update(overrides)
    return document


def planar_document(entries, symmetric):
    """d = 2, m = 1 with the given (alpha, beta, terms) entries."""
    return constant_document(
        d=2, m=1,
        coefficients=[{'alpha': alpha, 'beta': beta, 'terms': terms} for alpha, beta, terms in entries],
        lambda1=2.5,
        rhs=[{'trig': {'k': [1, 0], 'kind': 'sin'}}],
        epsilons=[0.5],
        flags={'symmetric': symmetric},
    )


def record(eps, value, norm_f=1.0):
    return ErrorRecord(eps, value, value, value, value, value, norm_f)


def errors_of(document):
    serializer = StudyConfigSerializer(data=document)
    serializer.is_valid()
    return serializer.errors


class StudyConfigSerializerTest(SimpleTestCase):
    def test_valid_document_falls_back_to_settings(self):
        # Solver options missing from the document come from settings.HOMOG.
        config = parse_config(constant_document())
        self.assertEqual(config.dim, 1)
        self.assertEqual(config.tol, settings.HOMOG['SOLVER_TOL'])
        self.assertEqual(config.max_iter, settings.HOMOG['SOLVER_MAX_ITER'])
        self.assertEqual(config.kernel, 'steklov2')
        self.assertEqual(config.smoothing, 'iterated')
        self.assertEqual(config.sweep, (0.5, 0.25, 0.125))

    def test_solver_block_overrides_defaults(self):
        config = parse_config(constant_document(solver={'tol': 1e-8, 'max_iter': 50, 'restart': 10}))
        self.assertEqual((config.tol, config.max_iter, config.restart), (1e-8, 50, 10))

    def test_rejects_odd_resolution(self):
        self.assertIn('cell_resolution', errors_of(constant_document(cell_resolution=9)))

    def test_rejects_malformed_multiindices(self):
        # |α| must equal m and α must have d components.
        for alpha in ([1], [2, 0]):
            document = constant_document(coefficients=[{'alpha': alpha, 'beta': [2], 'terms': [{'const': 2.0}]}])
            self.assertIn('non_field_errors', errors_of(document))

    def test_rejects_duplicate_entries(self):
        entry = {'alpha': [2], 'beta': [2], 'terms': [{'const': 1.0}]}
        self.assertIn('non_field_errors', errors_of(constant_document(coefficients=[entry, entry])))

    def test_rejects_incommensurate_or_repeated_epsilons(self):
        self.assertIn('non_field_errors', errors_of(constant_document(epsilons=[0.3])))
        self.assertIn('non_field_errors', errors_of(constant_document(epsilons=[0.25, 0.25])))
        self.assertIn('non_field_errors', errors_of(constant_document(epsilons=[-0.25])))

    def test_rejects_ambiguous_terms(self):
        document = constant_document(rhs=[{'const': 1.0, 'trig': {'k': [1], 'kind': 'cos'}}])
        self.assertIn('rhs', errors_of(document))

    def test_rejects_wrong_frequency_length(self):
        document = constant_document(rhs=[{'trig': {'k': [1, 1], 'kind': 'cos'}}])
        self.assertIn('non_field_errors', errors_of(document))

    def test_rejects_piecewise_that_does_not_tile(self):
        coefficients = [{'alpha': [2], 'beta': [2], 'terms': [{'piecewise': {'values': [1.0, 1.5, 2.0]}}]}]
        self.assertIn('non_field_errors', errors_of(constant_document(coefficients=coefficients)))

    def test_rejects_bad_expectations(self):
        self.assertIn('expectations', errors_of(constant_document(expectations={'norm_f': [1.0, 2.0]})))
        self.assertIn('expectations', errors_of(constant_document(expectations={'err_Hm_v': [2.0, 1.0]})))

    def test_custom_kernel_needs_samples(self):
        self.assertIn('non_field_errors', errors_of(constant_document(flags={'kernel': 'custom'})))
        document = constant_document(flags={'kernel': 'custom'},
                                     custom_kernel={'half_width': 1.0, 'values': [0.0, 1.0, 1.0, 0.0]})
        self.assertIn('custom_kernel', errors_of(document))

    def test_rejects_inverted_constants(self):
        self.assertIn('non_field_errors', errors_of(constant_document(lambda0=3.0)))

    def test_defaults_parse(self):
        for name, dim in (('S1', 1), ('S2', 2), ('S3', 2)):
            config = load_config(name)
            self.assertEqual(config.name, name)
            self.assertEqual(config.dim, dim)
            self.assertEqual(config.order, 2)
        self.assertTrue(load_config('S1').symmetric)
        self.assertFalse(load_config('S3').symmetric)

    def test_hash_tracks_the_document(self):
        first = parse_config(constant_document())
        self.assertEqual(config_hash(first), config_hash(parse_config(constant_document())))
        self.assertNotEqual(config_hash(first), config_hash(parse_config(constant_document(seed=1))))

    def test_yaml_and_json_files_agree(self):
        with tempfile.TemporaryDirectory() as tmp:
            json_path, yaml_path = Path(tmp) / 'c.json', Path(tmp) / 'c.yaml'
            json_path.write_text(json.dumps(constant_document()))
            yaml_path.write_text(yaml.safe_dump(constant_document()))
            self.assertEqual(load_config(json_path), load_config(yaml_path))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_config('/nonexistent/study.json')


class TermGrammarTest(SimpleTestCase):
    def test_constant_and_trigonometric_terms(self):
        grid = Grid.cell(8, 1)
        np.testing.assert_array_equal(term_values({'const': 1.5}, grid), np.full(8, 1.5))
        values = term_values({'trig': {'k': [2], 'kind': 'sin', 'amplitude': 0.5}}, grid)
        np.testing.assert_allclose(values, 0.5 * np.sin(2 * TWO_PI * coordinates(grid)[0]), atol=1e-15)

    def test_trigonometric_terms_on_a_torus_use_its_period(self):
        torus = Grid.torus(2.0, 16, 2)
        x1, x2 = coordinates(torus)
        values = term_values({'trig': {'k': [1, 1], 'kind': 'cos'}}, torus)
        np.testing.assert_allclose(values, np.cos(TWO_PI * (x1 + x2) / 2.0), atol=1e-14)

    def test_piecewise_blocks(self):
        values = term_values({'piecewise': {'values': [1.0, 2.0], 'resolution': 2}}, Grid.cell(4, 1))
        np.testing.assert_array_equal(values, [1.0, 1.0, 2.0, 2.0])
        values = term_values({'piecewise': {'values': [1.0, 2.0, 3.0, 4.0], 'resolution': 2}}, Grid.cell(4, 2))
        np.testing.assert_array_equal(values, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])

    def test_piecewise_resolution_must_divide(self):
        with self.assertRaises(ResolutionMismatch):
            term_values({'piecewise': {'values': [1.0, 2.0, 3.0], 'resolution': 3}}, Grid.cell(4, 1))

    def test_symmetric_flag_mirrors_entries(self):
        cross = [{'trig': {'k': [1, 0], 'kind': 'cos', 'amplitude': 0.5}}]
        config = parse_config(planar_document([
            ([1, 0], [1, 0], [{'const': 2.0}]),
            ([0, 1], [0, 1], [{'const': 2.0}]),
            ([1, 0], [0, 1], cross),
        ], symmetric=True))
        tensor = build_coefficients(config)
        self.assertTrue(tensor.symmetric)
        np.testing.assert_array_equal(tensor.entry((0, 1), (1, 0)).values, tensor.entry((1, 0), (0, 1)).values)

    def test_symmetric_flag_rejects_asymmetric_entries(self):
        config = parse_config(planar_document([
            ([1, 0], [1, 0], [{'const': 2.0}]),
            ([0, 1], [0, 1], [{'const': 2.0}]),
            ([1, 0], [0, 1], [{'const': 0.5}]),
            ([0, 1], [1, 0], [{'const': 0.25}]),
        ], symmetric=True))
        with self.assertRaises(PreconditionViolation):
            build_coefficients(config)

    def test_kernels(self):
        self.assertIsNone(build_kernel(parse_config(constant_document())))
        self.assertEqual(build_kernel(parse_config(constant_document(flags={'kernel': 'steklov'}))).name, 'steklov')
        custom = build_kernel(parse_config(constant_document(
            flags={'kernel': 'custom'}, custom_kernel={'half_width': 1.0, 'values': [0.0, 1.0, 0.0]})))
        self.assertIsInstance(custom, SmoothingKernel)
        self.assertEqual(custom.name, 'constant-kernel')


class RateFitTest(SimpleTestCase):
    def test_exact_power_laws(self):
        eps = np.array(EPSILONS)
        self.assertAlmostEqual(fit_rate(zip(eps, 3.0 * eps ** 2)), 2.0, places=12)
        self.assertAlmostEqual(fit_rate(zip(eps, eps)), 1.0, places=12)

    def test_perturbed_power_law(self):
        # Alternating ±5% noise moves the quadratic slope by less than 0.1.
        eps = np.array(EPSILONS)
        noise = np.array([1.05, 0.95, 1.05, 0.95])
        slope = fit_rate(zip(eps, eps ** 2 * noise))
        self.assertTrue(1.9 <= slope <= 2.1, slope)

    def test_invalid_inputs(self):
        with self.assertRaises(ValueError):
            fit_rate([(0.5, 1.0)])
        with self.assertRaises(ValueError):
            fit_rate([(0.5, 1.0), (0.25, 0.0)])

    def test_noise_floor(self):
        # With tol = 1e-10 the floor is 1e-9·‖f‖.
        rows = [record(eps, 1e-12) for eps in EPSILONS]
        self.assertEqual(set(fit_slopes(rows, 1e-10).values()), {NOISE_FLOOR})
        rows = [record(eps, eps ** 2) for eps in EPSILONS[:3]] + [record(EPSILONS[3], 1e-10)]
        slopes = fit_slopes(rows, 1e-10)
        self.assertAlmostEqual(slopes['err_Hm_v'], 2.0, places=10)
        self.assertEqual(set(slopes), set(FITTED_COLUMNS))

    def test_noise_floor_scales_with_the_source(self):
        rows = [record(eps, 1e-8 * eps, norm_f=1e3) for eps in EPSILONS]
        self.assertEqual(fit_slopes(rows, 1e-10)['err_L2_uhat'], NOISE_FLOOR)

    def test_expectations(self):
        config = parse_config(constant_document(expectations={'err_Hm_v': [1.8, 2.3], 'err_Hm_tilde': [0.0, 1.0]}))
        rows = [record(eps, eps ** 2) for eps in EPSILONS]

        report = SimpleNamespace(slopes=fit_slopes(rows, 1e-10))
        failures = check_expectations(report, config.expectations)
        self.assertEqual(len(failures), 1)
        self.assertTrue(failures[0].startswith('err_Hm_tilde'))


@override_settings(HOMOG={**settings.HOMOG, 'RECORD_TIMING': False})
class StudyRunTest(SimpleTestCase):
    def test_constant_coefficients_sit_on_the_noise_floor(self):
        # u^ε is the classical solution and the correctors vanish; only Θ^ε in ũ^ε leaves an error.
        report = run_study(parse_config(constant_document()))
        self.assertEqual(report.column('eps'), [0.5, 0.25, 0.125])
        smoothed = report.slopes.pop('err_Hm_tilde')
        self.assertTrue(1.7 < smoothed < 2.0, smoothed)
        self.assertEqual(set(report.slopes.values()), {NOISE_FLOOR})
        self.assertEqual(report.metadata['sweep']['0.25']['torus_resolution'], 32)
        np.testing.assert_allclose(report.metadata['a_hat'], [[2.0]])

    def test_csv_is_deterministic(self):
        config = parse_config(constant_document())
        with tempfile.TemporaryDirectory() as tmp:
            first = write_report_csv(run_study(config), Path(tmp) / 'first.csv')
            second = write_report_csv(run_study(config), Path(tmp) / 'second.csv')
            self.assertEqual(first.read_bytes(), second.read_bytes())
            rows, trailer = read_report_csv(first)
        self.assertEqual(list(rows[0]), list(CSV_COLUMNS))
        self.assertEqual([row['eps'] for row in rows], [0.5, 0.25, 0.125])
        self.assertEqual(trailer['config_hash'], config_hash(config))
        self.assertEqual(trailer['slopes']['err_Hm_v'], NOISE_FLOOR)
        self.assertTrue(all(row['wall_ms'] == 0.0 for row in rows))

    def test_thread_count_does_not_change_results(self):
        config = parse_config(constant_document())
        serial = run_study(config, threads=1)
        with self.settings(HOMOG={**settings.HOMOG, 'THREADS': 3}):
            parallel = run_study(config, threads=3)
        self.assertEqual([row.as_dict() for row in serial.rows], [row.as_dict() for row in parallel.rows])

    def test_operator_norms_are_recorded(self):
        report = run_study(parse_config(constant_document(rhs_modes=3)))
        norms = report.metadata['sweep']['0.125']['operator_norms']
        self.assertEqual(set(norms), {'K2_Hm', 'K3_Hm', 'K2_L2', 'elliptic', 'v_Hm'})
        # Constant coefficients: u^ε = v^ε up to the solver tolerance for every source.
        self.assertLess(norms['v_Hm'], 1e-8)
        self.assertIn('perturbation_oddness_defect', report.metadata)

    def test_failing_stage_is_named(self):
        config = parse_config(planar_document([
            ([1, 0], [1, 0], [{'const': 2.0}]),
            ([0, 1], [0, 1], [{'const': 2.0}]),
            ([1, 0], [0, 1], [{'const': 0.5}]),
            ([0, 1], [1, 0], [{'const': 0.25}]),
        ], symmetric=True))
        with self.assertRaises(StageError) as caught:
            run_study(config)
        self.assertEqual(caught.exception.stage, 'coefficients')
        self.assertIsNone(caught.exception.eps)
        self.assertIsInstance(caught.exception.cause, PreconditionViolation)
        self.assertEqual(caught.exception.partial_report.rows, [])

    @tag('slow')
    def test_default_one_dimensional_study_meets_its_rates(self):
        config = load_config('S1')
        report = run_study(config)
        self.assertEqual(check_expectations(report, config.expectations), [])

    @tag('slow')
    def test_default_planar_study_meets_its_rates(self):
        config = load_config('S2')
        report = run_study(config)
        self.assertIn('err_Hm_first_order', config.expectations)
        self.assertEqual(check_expectations(report, config.expectations), [])

    @tag('slow')
    def test_default_nonsymmetric_study_needs_the_perturbation(self):
        # With b ≠ 0 the classical solution is only first-order accurate in L², û^ε stays second order.
        config = load_config('S3')
        report = run_study(config)
        self.assertFalse(report.metadata['symmetric'])
        self.assertGreater(np.max(np.abs(report.metadata['b'])), 1e-2)
        self.assertEqual(check_expectations(report, config.expectations), [])


@override_settings(HOMOG={**settings.HOMOG, 'RECORD_TIMING': False})
class CommandTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write_config(self, document):
        path = self.dir / 'study.json'
        path.write_text(json.dumps(document))
        return str(path)

    def test_study_writes_the_report(self):
        out = self.dir / 'report.csv'
        stdout = StringIO()
        call_command('study', config=self.write_config(constant_document()), out=str(out), stdout=stdout)
        rows, trailer = read_report_csv(out)
        self.assertEqual(len(rows), 3)
        self.assertEqual(trailer['name'], 'constant')
        self.assertIn('report written', stdout.getvalue())

    def test_failed_expectations_exit_with_code_two(self):
        document = constant_document(expectations={'err_Hm_v': [1.8, 2.3]})
        out = self.dir / 'report.csv'
        with self.assertRaises(CommandError) as caught:
            call_command('study', config=self.write_config(document), out=str(out), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
        self.assertTrue(out.is_file())

    def test_invalid_config_is_an_execution_error(self):
        with self.assertRaises(CommandError) as caught:
            call_command('study', config=self.write_config(constant_document(cell_resolution=9)),
                         out=str(self.dir / 'r.csv'), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 1)
        self.assertIn('cell_resolution', str(caught.exception))

    def test_unreadable_config(self):
        path = self.dir / 'broken.json'
        path.write_text('{not json')
        with self.assertRaises(CommandError):
            call_command('study', config=str(path), out=str(self.dir / 'r.csv'), stdout=StringIO())

    def test_failing_stage_is_an_execution_error(self):
        document = planar_document([
            ([1, 0], [1, 0], [{'const': 2.0}]),
            ([0, 1], [0, 1], [{'const': 2.0}]),
            ([1, 0], [0, 1], [{'const': 0.5}]),
            ([0, 1], [1, 0], [{'const': 0.25}]),
        ], symmetric=True)
        with self.assertRaises(CommandError) as caught:
            call_command('study', config=self.write_config(document), out=str(self.dir / 'r.csv'),
                         stdout=StringIO(), stderr=StringIO())
        self.assertEqual(caught.exception.returncode, 1)
        self.assertIn('coefficients', str(caught.exception))

    def test_cell_writes_a_bundle(self):
        call_command('cell', config=self.write_config(constant_document()), out=str(self.dir / 'bundle'),
                     stdout=StringIO())
        self.assertTrue((self.dir / 'bundle.json').is_file())
        self.assertTrue((self.dir / 'bundle.npz').is_file())

    def test_verify_smoothing_suite(self):
        stdout = StringIO()
        call_command('verify', suite='smoothing', stdout=stdout)
        self.assertIn('checks passed', stdout.getvalue())


class VerificationTest(SimpleTestCase):
    # Each suite reports its checks; all of them hold on the built-in problems.
    def test_cell_suite(self):
        results = run_suite('cell')
        self.assertTrue(results)
        self.assertEqual([r.describe() for r in results if not r.passed], [])

    def test_smoothing_suite_covers_every_inequality(self):
        names = {result.name for result in run_suite('smoothing')}
        self.assertIn('iterated_second_order_slope', names)
        self.assertIn('weighted_smoothed_gradient', names)

    @tag('slow')
    def test_potentials_suite(self):
        results = run_suite('potentials')
        self.assertLessEqual({'divergence_residual', 'assembly_routes'}, {r.name for r in results})
        self.assertEqual([r.describe() for r in results if not r.passed], [])

    @tag('slow')
    def test_resolvent_suite_includes_a_nonzero_b(self):
        results = run_suite('resolvent')
        names = {r.name for r in results}
        self.assertIn('laminate_elliptic_estimate_drift', names)
        self.assertIn('cosine_K3_Hm_variation', names)
        self.assertEqual([r.describe() for r in results if not r.passed], [])

    def test_unknown_suite(self):
        with self.assertRaises(ValueError):
            run_suite('everything')
