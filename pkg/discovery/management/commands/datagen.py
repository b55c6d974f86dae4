from django.core.management.base import BaseCommand, CommandError

from discovery import datagen
from discovery.exceptions import ParameterError

from ._common import USAGE_ERROR, add_config_argument, config_from_options


class Command(BaseCommand):
    help = 'Generate the synthetic two-detector benchmark (train and test segments)'

    def add_arguments(self, parser):
        add_config_argument(parser)
        parser.add_argument('--output', help='Dataset directory (default: dataset.path from the config)')
        parser.add_argument('--seed', type=int, help='Data seed (default: seeds.data from the config)')

    def handle(self, *args, **options):
        config = config_from_options(options)
        output = options['output'] or config.dataset.path
        if not output:
            raise CommandError('no output directory: pass --output or set dataset.path', returncode=USAGE_ERROR)
        seed = config.data_seed if options['seed'] is None else options['seed']
        try:
            benchmark = datagen.build_benchmark(config.dataset, seed)
        except ParameterError as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)
        datagen.save_benchmark(benchmark, output)
        injections = sum(len(s.foreground.injections) for s in benchmark.segments)
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {len(benchmark.segments)} segments with {injections} injections to {output}"
        ))
