import json
from pathlib import Path

import pandas as pd
from django.core.management.base import BaseCommand, CommandError

from ._common import USAGE_ERROR

COLUMNS = ['id', 'parent', 'depth', 'op', 'fitness', 'q', 'visits', 'pruned', 'design_idea', 'reflection']


class Command(BaseCommand):
    help = 'Export the search tree of a run (nodes with parent, depth, op, fitness, q, visits, idea, reflection)'

    def add_arguments(self, parser):
        parser.add_argument('run_dir')
        parser.add_argument('--format', default='json', choices=['json', 'csv'])
        parser.add_argument('--output', help='File to write (default: stdout)')

    def handle(self, *args, **options):
        path = Path(options['run_dir']) / 'tree.json'
        if not path.exists():
            raise CommandError(f"{path} does not exist", returncode=USAGE_ERROR)
        nodes = [{key: node.get(key) for key in COLUMNS} for node in json.loads(path.read_text())['nodes']]
        if options['format'] == 'csv':
            text = pd.DataFrame(nodes, columns=COLUMNS).to_csv(index=False)
        else:
            text = json.dumps({'nodes': nodes}, indent=2) + '\n'
        if options['output']:
            Path(options['output']).write_text(text)
            self.stdout.write(self.style.SUCCESS(f"Exported {len(nodes)} nodes to {options['output']}"))
        else:
            self.stdout.write(text, ending='')
