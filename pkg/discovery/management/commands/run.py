from django.core.management.base import BaseCommand, CommandError

from discovery import datagen
from discovery.exceptions import ConfigError, GeneratorError, ParameterError, SearchAborted
from discovery.genclient import build_generator
from discovery.registry import RunRegistry
from discovery.search import EvoMctsSearch

from ._common import EVALUATION_ERROR, OUTAGE_ERROR, USAGE_ERROR, add_config_argument, config_from_options


class Command(BaseCommand):
    help = 'Run the tree search from the seed pipeline and write the run directory'

    def add_arguments(self, parser):
        add_config_argument(parser)
        parser.add_argument('--output', help='Run directory (default: output_dir from the config)')
        parser.add_argument('--budget', type=int, help='Override the evaluation budget')
        parser.add_argument('--seed', type=int, help='Override the search seed')
        parser.add_argument('--dataset', help='Benchmark directory (default: dataset.path, else generated)')
        parser.add_argument('--script', help='Scripted generator JSON (mock backend)')
        parser.add_argument('--no-registry', action='store_true', help='Do not index the run in the database')

    def handle(self, *args, **options):
        overrides = {}
        if options['output']:
            overrides['output_dir'] = options['output']
        if options['budget'] is not None:
            overrides['budget'] = options['budget']
        if options['seed'] is not None:
            overrides['seeds'] = {'search': options['seed']}
        if options['dataset']:
            overrides['dataset'] = {'path': options['dataset']}
        if options['script']:
            overrides['generator'] = {'script': options['script']}
        config = config_from_options(options, overrides)

        try:
            benchmark = datagen.resolve_benchmark(config.dataset, config.data_seed)
            generator = build_generator(config.generator, seed=config.search_seed)
        except (ConfigError, ParameterError, FileNotFoundError) as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)

        registry = None if options['no_registry'] else RunRegistry(config, config.output_dir)
        search = EvoMctsSearch(config, benchmark, generator, registry=registry)
        try:
            run_dir = search.run()
        except GeneratorError as exc:
            raise CommandError(f"generator unavailable, partial run in {config.output_dir}: {exc}",
                               returncode=OUTAGE_ERROR)
        except SearchAborted as exc:
            raise CommandError(str(exc), returncode=EVALUATION_ERROR)

        summary = search.summary()
        self.stdout.write(self.style.SUCCESS(
            f"Run finished in {run_dir}: {summary['evaluations']} evaluations, "
            f"seed {summary['seed_fitness']:.2f}, elite {summary['elite_fitness']:.2f}"
        ))
