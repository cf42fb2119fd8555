"""
End-to-end convergence studies.

For every ε of a study (largest first): build f on the torus, solve the fine
problem, assemble the approximations, and record the error norms. Slopes are
fitted per error column once the sweep is complete.
"""

import csv
import hashlib
import json
import logging
import time
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml
from django.conf import settings

from cells.operators import check_ellipticity
from cells.problems import homogenize
from solvers.approximations import build_bundle, error_report, is_finite_record, operator_norm_ratios
from solvers.fine import solve_fine
from solvers.homogenized import HomogenizedSymbol, check_resolvent_inequality
from spectral.exceptions import HomogenizationError, NonFiniteValue
from spectral.fields import random_band_limited, torus_for

from .exceptions import StageError
from .models import CSV_COLUMNS, FITTED_COLUMNS, NOISE_FLOOR, RateReport
from .serializers import StudyConfigSerializer
from .terms import build_coefficients, build_kernel, build_rhs

logger = logging.getLogger(__name__)

STAGE_ERRORS = (HomogenizationError, ValueError, ArithmeticError)


def parse_config(document):
    """Validate a study document; raises rest_framework ValidationError."""
    serializer = StudyConfigSerializer(data=document)
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def load_config(path_or_name):
    """
    Read a study from a JSON or YAML file, or from the default studies by name
    (``S1``, ``S2``, ``S3``).
    """
    path = Path(path_or_name)
    if not path.is_file():
        candidate = Path(settings.HOMOG['DEFAULT_STUDIES_DIR']) / f'{path_or_name}.json'
        if not candidate.is_file():
            raise FileNotFoundError(f'No study file or default study named {path_or_name!r}.')
        path = candidate
    text = path.read_text()
    document = yaml.safe_load(text) if path.suffix in ('.yaml', '.yml') else json.loads(text)
    config = parse_config(document)
    logger.info('Loaded study %s from %s', config.name, path)
    return config


def config_hash(config):
    canonical = json.dumps(config.source, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def fit_rate(points):
    """Least-squares slope of log(err) against log(eps)."""
    points = list(points)
    if len(points) < 2:
        raise ValueError('A rate fit needs at least two points.')
    eps, err = np.asarray(points, dtype=float).T
    if np.any(eps <= 0) or np.any(err <= 0):
        raise ValueError('Rate fits need positive ε and positive errors.')
    return float(np.polyfit(np.log(eps), np.log(err), 1)[0])


def fit_slopes(rows, tol):
    """
    Slope per error column over the points above the noise floor
    NOISE_FLOOR_FACTOR·tol·‖f‖. Fewer than three usable points give NOISE_FLOOR.
    """
    factor = settings.HOMOG['NOISE_FLOOR_FACTOR']
    slopes = {}
    for column in FITTED_COLUMNS:
        points = [(row.eps, getattr(row, column)) for row in rows
                  if getattr(row, column) > factor * tol * row.norm_f]
        if len(points) < len(rows):
            logger.warning('%s: %d of %d points below the solver noise floor', column,
                           len(rows) - len(points), len(rows))
        slopes[column] = fit_rate(points) if len(points) >= 3 else NOISE_FLOOR
    return slopes


def check_expectations(report, expectations):
    """Messages for every fitted slope outside its expected [low, high] range."""
    failures = []
    for column, (low, high) in sorted(expectations.items()):
        slope = report.slopes.get(column)
        if not isinstance(slope, float):
            failures.append(f'{column}: slope {slope!r}, expected [{low:g}, {high:g}]')
        elif not low <= slope <= high:
            failures.append(f'{column}: slope {slope:.4f} outside [{low:g}, {high:g}]')
    return failures


@contextmanager
def stage(name, report, eps=None):
    logger.info('Stage %s%s', name, '' if eps is None else f' at ε={eps:g}')
    try:
        yield
    except StageError:
        raise
    except STAGE_ERRORS as exc:
        raise StageError(name, eps, exc, report) from exc


def _jsonable(value):
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


class StudyRun:
    """The ε-independent state of one study: coefficients, cell data, symbol."""

    def __init__(self, config, threads):
        self.config = config
        self.threads = threads
        self.timing = settings.HOMOG['RECORD_TIMING']
        self.report = RateReport(config.name, config_hash(config))
        self.extras = {}

    def prepare(self):
        config = self.config
        with stage('coefficients', self.report):
            self.a = build_coefficients(config)
            self.coercivity = check_ellipticity(
                self.a, settings.HOMOG['ELLIPTICITY_TRIALS'], seed=config.seed,
                slack=settings.HOMOG['ELLIPTICITY_SLACK'])
            self.kernel = build_kernel(config)
        with stage('cell', self.report):
            self.data = homogenize(self.a, config.tol, config.max_iter, config.restart,
                                   threads=self.threads, dealias=config.dealias)
            self.symbol = HomogenizedSymbol.from_data(self.data)
            self.homogenized_ratio = self.symbol.require_elliptic(config.lambda0, np.random.default_rng(config.seed))
            self.oddness = self.symbol.require_odd(np.random.default_rng(config.seed))
            logger.info('Homogenized symbol: ellipticity ratio %.6g, oddness defect %.3e',
                        self.homogenized_ratio, self.oddness)

    def elapsed_ms(self, started):
        return (time.perf_counter() - started) * 1000.0 if self.timing else 0.0

    def sweep_entry(self, epsilon):
        """One row of the report; raises StageError tagged with ε."""
        config = self.config
        report = self.report
        torus = torus_for(self.a.grid, epsilon, config.torus_period)
        with stage('rhs', report, epsilon):
            f = build_rhs(config, torus)
        started = time.perf_counter()
        with stage('fine', report, epsilon):
            solution = solve_fine(self.a, epsilon, f, config.tol, config.max_iter, config.restart, config.dealias)
        with stage('approximations', report, epsilon):
            bundle = build_bundle(self.data, epsilon, f, self.symbol, config.smoothing, self.kernel, config.dealias)
        with stage('errors', report, epsilon):
            record = error_report(solution.field, bundle, solution.iterations, self.elapsed_ms(started))
            if not is_finite_record(record):
                raise NonFiniteValue(f'Non-finite error norms: {record.as_dict()}')
        extras = {
            'torus_resolution': torus.shape[0],
            'fine_iterations': solution.iterations,
            'energy_ratio': solution.energy_ratio,
            'resolvent_mode_ratio': check_resolvent_inequality(self.symbol, epsilon, f),
        }
        if config.rhs_modes:
            with stage('operator_norms', report, epsilon):
                extras['operator_norms'] = self._operator_norms(epsilon, torus)
        return record, extras

    def _operator_norms(self, epsilon, torus):
        config = self.config
        rng = np.random.default_rng([config.seed, round(1.0 / epsilon)])
        max_mode = max(1, config.cell_resolution // 4)
        sources = [random_band_limited(torus, max_mode, rng) for _ in range(config.rhs_modes)]
        return operator_norm_ratios(self.data, epsilon, sources, self.symbol, config.smoothing, config.dealias,
                                    a=self.a, tol=config.tol, max_iter=config.max_iter, restart=config.restart)

    def sweep(self):
        epsilons = list(self.config.sweep)
        if self.threads > 1 and len(epsilons) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futures = [pool.submit(self.sweep_entry, epsilon) for epsilon in epsilons]
                for epsilon, future in zip(epsilons, futures):
                    self._collect(epsilon, *future.result())
        else:
            for epsilon in epsilons:
                self._collect(epsilon, *self.sweep_entry(epsilon))

    def _collect(self, epsilon, record, extras):
        self.report.rows.append(record)
        self.extras[f'{epsilon:g}'] = extras

    def metadata(self, wall_ms):
        config, data = self.config, self.data
        diagnostics = data.diagnostics
        return _jsonable({
            'name': config.name,
            'config_hash': self.report.config_hash,
            'dim': config.dim,
            'order': config.order,
            'cell_resolution': config.cell_resolution,
            'torus_period': config.torus_period,
            'solver_tol': config.tol,
            'seed': config.seed,
            'symmetric': data.symmetric,
            'smoothing': config.smoothing,
            'kernel': config.kernel,
            'dealias': config.dealias,
            'a_hat': data.a_hat,
            'b': data.b,
            'coercivity_ratio': self.coercivity,
            'homogenized_ellipticity_ratio': self.homogenized_ratio,
            'perturbation_oddness_defect': self.oddness,
            'cell_iterations': diagnostics['iterations'],
            'cell_diagnostics': {key: diagnostics[key] for key in
                                 ('max_N_W_norm', 'potential_constant', 'potential_identity_error')},
            'sweep': self.extras,
            'wall_ms': wall_ms,
        })


def run_study(config, threads=None):
    """
    Run every stage of ``config`` and return its RateReport.

    A failing stage raises StageError; its ``partial_report`` keeps the rows
    finished before the failure.
    """
    cap = settings.HOMOG['THREADS']
    threads = cap if threads is None else max(1, min(threads, cap))
    started = time.perf_counter()
    run = StudyRun(config, threads)
    logger.info('Study %s (%s): d=%d, m=%d, n=%d, ε ∈ %s', config.name, run.report.config_hash,
                config.dim, config.order, config.cell_resolution, ', '.join(f'{e:g}' for e in config.sweep))
    run.prepare()
    run.sweep()
    report = run.report
    report.slopes = fit_slopes(report.rows, config.tol)
    report.metadata = run.metadata(run.elapsed_ms(started))
    for column, slope in report.slopes.items():
        logger.info('%s: slope %s', column, slope if isinstance(slope, str) else f'{slope:.3f}')
    return report


def _format(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_report_csv(report, path):
    """The error table, a blank line, then the slopes and metadata as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            values = row.as_dict()
            writer.writerow([_format(values[column]) for column in CSV_COLUMNS])
        handle.write('\n')
        trailer = {'name': report.name, 'config_hash': report.config_hash,
                   'slopes': report.slopes, 'metadata': report.metadata}
        handle.write(json.dumps(_jsonable(trailer), indent=2, sort_keys=True))
        handle.write('\n')
    logger.info('Wrote %d rows to %s', len(report.rows), path)
    return path


def read_report_csv(path):
    """(rows as dicts of floats, trailer dict) from a file written by ``write_report_csv``."""
    table, _, trailer = Path(path).read_text().partition('\n\n')
    rows = [{key: float(value) for key, value in row.items()} for row in csv.DictReader(table.splitlines())]
    return rows, json.loads(trailer) if trailer.strip() else {}
