import json
import logging

import yaml
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from spectral.exceptions import HomogenizationError
from studies.runner import load_config

logger = logging.getLogger('studies')

ASSERTION_FAILED = 2


def flatten_errors(detail, prefix=''):
    """ValidationError.detail as 'path: message' lines."""
    if isinstance(detail, dict):
        return [line for key, value in detail.items()
                for line in flatten_errors(value, f'{prefix}{key}.' if key != 'non_field_errors' else prefix)]
    if isinstance(detail, list):
        if all(not isinstance(item, (dict, list)) for item in detail):
            return [f'{prefix.rstrip(".") or "config"}: {item}' for item in detail]
        return [line for i, item in enumerate(detail) for line in flatten_errors(item, f'{prefix}{i}.')]
    return [f'{prefix.rstrip(".") or "config"}: {detail}']


class HomogCommand(BaseCommand):
    """Common options and error handling of the ``homog`` subcommands."""

    def add_config_arguments(self, parser):
        parser.add_argument('--config', required=True,
                            help='Study file (.json, .yaml) or a default study name: S1, S2, S3.')
        parser.add_argument('--out', required=True, help='Output path.')
        parser.add_argument('--threads', type=int, default=None,
                            help='Worker threads, capped by HOMOG_THREADS.')

    def load(self, reference):
        try:
            return load_config(reference)
        except ValidationError as exc:
            raise CommandError('Invalid study:\n  ' + '\n  '.join(flatten_errors(exc.detail)))
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as exc:
            raise CommandError(f'Cannot read {reference}: {exc}')

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except HomogenizationError as exc:
            logger.error('%s: %s', type(exc).__name__, exc)
            raise CommandError(f'{type(exc).__name__}: {exc}')
