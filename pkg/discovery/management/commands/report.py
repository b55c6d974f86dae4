from django.core.management.base import BaseCommand, CommandError

from discovery.config import load_config
from discovery.exceptions import ConfigError
from discovery.reporting import IncompleteRun, build_report

from ._common import USAGE_ERROR


class Command(BaseCommand):
    help = 'Plot the fitness trajectory, diversity and sensitivity curves of a run and summarize it'

    def add_arguments(self, parser):
        parser.add_argument('run_dir')
        parser.add_argument('--format', default='png', choices=['png', 'svg'])

    def handle(self, *args, **options):
        run_dir = options['run_dir']
        far_range = (4.0, 1000.0)
        try:
            far_range = load_config(f"{run_dir}/config.json").far_range
        except ConfigError:
            self.stdout.write(self.style.WARNING('No readable config.json; using the default FAR range'))
        try:
            paths = build_report(run_dir, far_range=far_range, image_format=options['format'])
        except IncompleteRun as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)
        self.stdout.write(paths['summary'].read_text(), ending='')
        self.stdout.write(self.style.SUCCESS(f"Report written to {run_dir}"))
