"""
Django settings for the gwsearch project.

The project has no web surface: Django provides the management commands,
the settings layer, the run registry (ORM) and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'django-insecure-gwsearch-local-only')

DEBUG = os.environ.get('DJANGO_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'discovery',
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'discovery': {
            'handlers': ['console'],
            'level': os.environ.get('DISCOVERY_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Search engine defaults. A run config JSON is deep-merged over this
# document by discovery.config.load_config; `manage.py init_config` dumps it.
DISCOVERY_DEFAULTS = {
    'budget': 200,
    'seeds': {
        'search': 0,
        'data': 0,
    },
    'tree': {
        'c0': 1.0,
        'gamma': 0.5,
        'epsilon': 1e-6,
        'expansion_visits': 2,
        'max_depth': 10,
        'prune_margin': 0.2,
        'prune_min_siblings': 3,
        'convergence_window': 30,
        'convergence_tol': 0.01,
    },
    'population': {
        'k': 10,
        'beta': 0.005,
        'm': 3,
        'init_variants': 8,
        'init_mutations': 2,
        'init_retries': 2,
    },
    'schedule': {
        'enabled': True,
        'pm_variants': ['single', 'two_stage'],
        'pwc_variants': ['reflection', 'analysis'],
    },
    'generator': {
        'backend': 'mock',
        'script': None,
        'generation_model': 'o3-mini',
        'reflection_model': 'deepseek-r1',
        'temperature': 1.0,
        'base_url': 'https://api.openai.com/v1',
        'api_key_env': 'EVOMCTS_API_KEY',
        'timeout': 120.0,
        'max_in_flight': 4,
        'max_retries': 3,
        'backoff': 2.0,
    },
    'dataset': {
        'path': None,
        'fs': 2048.0,
        'segment_duration': 900.0,
        'n_train': 8,
        'n_test': 2,
        'injections_per_segment': 6,
        'd_max': 2500.0,
        'amplitude': 35000.0,
        'psd_level': 1.0,
        'f_corner': 30.0,
        'f_floor': 10.0,
        'f_lower': 20.0,
        'f_upper': 512.0,
        'chirp_mass_range': [5.0, 20.0],
        'min_separation': 30.0,
        'edge_margin': 20.0,
        'gps_start': 1238166018.0,
    },
    'limits': {
        't_max': 60.0,
        'e_max': 3,
    },
    'far_range': [4.0, 1000.0],
    'executor': {
        'mode': 'dsl',
        'argv': [],
        'seed_candidate': None,
    },
    'workers': 1,
    'diversity_window': 50,
    'output_dir': 'runs/run-0',
    'prompt_override_dir': None,
}
