import logging
from pathlib import Path

from django.core.management.base import CommandError

from studies.exceptions import StageError
from studies.management.base import ASSERTION_FAILED, HomogCommand
from studies.runner import check_expectations, run_study, write_report_csv

logger = logging.getLogger('studies')


class Command(HomogCommand):
    help = 'Run a convergence study and write its error table with fitted slopes.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)

    def handle(self, *args, **options):
        config = self.load(options['config'])
        out = Path(options['out'])
        try:
            report = run_study(config, options['threads'])
        except StageError as exc:
            if exc.partial_report is not None and exc.partial_report.rows:
                write_report_csv(exc.partial_report, out)
                self.stderr.write(f'Partial report with {len(exc.partial_report.rows)} rows written to {out}')
            raise CommandError(str(exc))

        write_report_csv(report, out)
        for column, slope in report.slopes.items():
            shown = slope if isinstance(slope, str) else f'{slope:.3f}'
            self.stdout.write(f'{column:<20} {shown}')

        failures = check_expectations(report, config.expectations)
        if failures:
            for failure in failures:
                logger.error('Expectation failed: %s', failure)
            raise CommandError('Slope expectations failed:\n  ' + '\n  '.join(failures),
                               returncode=ASSERTION_FAILED)
        self.stdout.write(self.style.SUCCESS(f'{config.name}: report written to {out}'))
