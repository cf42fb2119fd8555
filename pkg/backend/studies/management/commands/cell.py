from django.conf import settings

from cells.bundle import save_bundle
from cells.operators import check_ellipticity
from cells.problems import homogenize
from studies.management.base import HomogCommand
from studies.terms import build_coefficients


class Command(HomogCommand):
    help = 'Solve the cell problems of a study and write the homogenized data bundle.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)

    def handle(self, *args, **options):
        config = self.load(options['config'])
        cap = settings.HOMOG['THREADS']
        threads = cap if options['threads'] is None else max(1, min(options['threads'], cap))

        a = build_coefficients(config)
        check_ellipticity(a, settings.HOMOG['ELLIPTICITY_TRIALS'], seed=config.seed,
                          slack=settings.HOMOG['ELLIPTICITY_SLACK'])
        data = homogenize(a, config.tol, config.max_iter, config.restart, threads=threads, dealias=config.dealias)
        json_path, npz_path = save_bundle(data, options['out'])

        self.stdout.write(f'a_hat =\n{data.a_hat}')
        self.stdout.write(f'b =\n{data.b}')
        self.stdout.write(self.style.SUCCESS(f'Bundle written to {json_path} and {npz_path}'))
