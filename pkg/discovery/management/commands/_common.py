"""Helpers shared by the discovery management commands."""

from django.core.management.base import CommandError

from discovery.config import load_config
from discovery.exceptions import ConfigError

USAGE_ERROR = 2
OUTAGE_ERROR = 3
EVALUATION_ERROR = 4


def config_from_options(options, overrides=None):
    try:
        return load_config(options.get('config'), overrides or None)
    except ConfigError as exc:
        raise CommandError(str(exc), returncode=USAGE_ERROR)


def add_config_argument(parser):
    parser.add_argument('--config', help='Run config JSON, merged over the defaults')
