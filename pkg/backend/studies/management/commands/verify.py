from django.core.management.base import CommandError

from studies.management.base import ASSERTION_FAILED, HomogCommand
from studies.verification import SUITES, run_suite


class Command(HomogCommand):
    help = 'Run the built-in self-checks.'

    def add_arguments(self, parser):
        parser.add_argument('--suite', choices=SUITES + ('all',), default='all')

    def handle(self, *args, **options):
        results = run_suite(options['suite'])
        for result in results:
            line = result.describe()
            self.stdout.write(line if result.passed else self.style.ERROR(line))
        failed = [result for result in results if not result.passed]
        if failed:
            raise CommandError(f'{len(failed)} of {len(results)} checks failed.', returncode=ASSERTION_FAILED)
        self.stdout.write(self.style.SUCCESS(f'All {len(results)} checks passed.'))
