"""
Django settings for the HomogLab project.

The project has no web surface and no database: Django provides the settings
layer, the management commands behind the ``homog`` CLI and the test runner.
Numerical defaults live in the ``HOMOG`` dictionary below and can be
overridden from the environment.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


def env_flag(name, default):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


SECRET_KEY = os.environ.get('HOMOG_SECRET_KEY', 'homoglab-local-only')

DEBUG = env_flag('HOMOG_DEBUG', False)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',

    'spectral',
    'cells',
    'solvers',
    'studies',
]

# No models anywhere in the project.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}


# Numerical defaults

HOMOG = {
    'THREADS': max(1, int(os.environ.get('HOMOG_THREADS', '1'))),
    'SOLVER_TOL': float(os.environ.get('HOMOG_SOLVER_TOL', '1e-10')),
    'SOLVER_MAX_ITER': int(os.environ.get('HOMOG_SOLVER_MAX_ITER', '10000')),
    'GMRES_RESTART': int(os.environ.get('HOMOG_GMRES_RESTART', '60')),
    'DIVERGENCE_TOL': 1e-8,
    'ELLIPTICITY_TRIALS': 32,
    'ELLIPTICITY_SLACK': 1e-6,
    'NOISE_FLOOR_FACTOR': 10.0,
    'RECORD_TIMING': env_flag('HOMOG_RECORD_TIMING', True),
    'DEFAULT_STUDIES_DIR': BASE_DIR / 'studies' / 'defaults',
}


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)-7s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.environ.get('HOMOG_LOG_LEVEL', 'INFO'),
    },
}
