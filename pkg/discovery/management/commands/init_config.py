import json
from pathlib import Path

from django.core.management.base import BaseCommand

from discovery.config import default_document


class Command(BaseCommand):
    help = 'Write the full default run configuration as JSON'

    def add_arguments(self, parser):
        parser.add_argument('--output', help='File to write (default: stdout)')

    def handle(self, *args, **options):
        document = json.dumps(default_document(), indent=2) + '\n'
        if options['output']:
            Path(options['output']).write_text(document)
            self.stdout.write(self.style.SUCCESS(f"Wrote default config to {options['output']}"))
        else:
            self.stdout.write(document, ending='')
