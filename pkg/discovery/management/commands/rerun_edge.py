import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from discovery import datagen, genclient
from discovery.exceptions import ConfigError, ParameterError
from discovery.search import EvoMctsSearch

from ._common import USAGE_ERROR, config_from_options


class Command(BaseCommand):
    help = 'Re-execute one recorded evolutionary transition n times and summarize the fitness samples'

    def add_arguments(self, parser):
        parser.add_argument('run_dir')
        parser.add_argument('--eval', type=int, required=True, dest='eval_index',
                            help='Eval index of the run-log record to replay')
        parser.add_argument('-n', type=int, default=100, help='Number of repetitions')
        parser.add_argument('--config', help='Config JSON (default: the run directory config.json)')
        parser.add_argument('--script', help='Scripted generator JSON (mock backend)')
        parser.add_argument('--seed', type=int, help='Generator sampling seed')
        parser.add_argument('--output', help='Summary JSON (default: <run_dir>/edge_<eval>.json)')

    def handle(self, *args, **options):
        run_dir = Path(options['run_dir'])
        if not (run_dir / 'tree.json').exists():
            raise CommandError(f"{run_dir} has no tree.json", returncode=USAGE_ERROR)
        options['config'] = options['config'] or str(run_dir / 'config.json')
        overrides = {'generator': {'script': options['script']}} if options['script'] else {}
        config = config_from_options(options, overrides)
        seed = config.search_seed if options['seed'] is None else options['seed']

        try:
            benchmark = datagen.resolve_benchmark(config.dataset, config.data_seed)
            generator = genclient.build_generator(config.generator, seed=seed)
            search = EvoMctsSearch.restore(run_dir, config, benchmark, generator)
            request = search.recorded_request(options['eval_index'])
        except (ConfigError, ParameterError, FileNotFoundError) as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)

        def run_once(repetition):
            outcome = search.execute(request)
            return outcome.result.auc if outcome.success else None

        reference = search.state.nodes[request.focus].fitness
        stats = genclient.rerun_edge(run_once, options['n'], reference=reference)
        summary = stats.summary()
        summary['request'] = request.to_dict()
        output = Path(options['output'] or run_dir / f"edge_{options['eval_index']}.json")
        output.write_text(json.dumps(summary, indent=2) + '\n')
        self.stdout.write(self.style.SUCCESS(
            f"{summary['n']} repetitions: mean {summary['mean']:.4f}, sd {summary['sd']:.4f}, "
            f"{summary['fraction_exceeding']:.2%} above the parent ({reference})"
        ))
