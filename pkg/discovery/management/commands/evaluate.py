import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from discovery import datagen, dsl, scoring
from discovery.evaluation import CandidateEvaluator
from discovery.exceptions import EvaluationError, ParameterError

from ._common import EVALUATION_ERROR, USAGE_ERROR, add_config_argument, config_from_options

ALIASES = {'seed': dsl.SEED_DSL, 'elite': dsl.ELITE_DSL}


class Command(BaseCommand):
    help = 'Score one candidate on a benchmark and write its evaluation report and catalogs'

    def add_arguments(self, parser):
        parser.add_argument('candidate', help="Candidate file, or the built-in 'seed' / 'elite' pipelines")
        add_config_argument(parser)
        parser.add_argument('--dataset', help='Benchmark directory (default: dataset.path, else generated)')
        parser.add_argument('--split', default='train', choices=['train', 'test'])
        parser.add_argument('--output', default='evaluation', help='Directory for report.json and catalogs')

    def read_candidate(self, name):
        if name in ALIASES:
            return ALIASES[name]
        path = Path(name)
        if not path.is_file():
            raise CommandError(f"candidate file {name} does not exist", returncode=USAGE_ERROR)
        return path.read_text()

    def handle(self, *args, **options):
        config = config_from_options(options)
        text = self.read_candidate(options['candidate'])
        try:
            if options['dataset']:
                benchmark = datagen.load_benchmark(options['dataset'])
            else:
                benchmark = datagen.resolve_benchmark(config.dataset, config.data_seed)
            evaluator = CandidateEvaluator.from_config(benchmark, config, split=options['split'])
        except (FileNotFoundError, ParameterError) as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)

        output = Path(options['output'])
        output.mkdir(parents=True, exist_ok=True)
        try:
            candidate = evaluator.compile(text)
            background, foreground, error_trials = evaluator.run_catalogs(candidate)
        except EvaluationError as exc:
            failure = {'error': exc.kind, 'message': exc.message}
            (output / 'report.json').write_text(json.dumps(failure, indent=2) + '\n')
            raise CommandError(f"{exc.kind}: {exc.message}", returncode=EVALUATION_ERROR)

        result = scoring.auc_fitness(
            background, foreground, evaluator.truth, evaluator.background_duration,
            benchmark.d_max, evaluator.far_range,
        )
        result.error_trials = error_trials
        background.to_csv(output / 'background.csv')
        foreground.to_csv(output / 'foreground.csv')
        (output / 'report.json').write_text(json.dumps(result.to_report(), indent=2) + '\n')
        self.stdout.write(self.style.SUCCESS(f"auc={result.auc:.4f}"))
        if result.degenerate:
            self.stdout.write(self.style.WARNING('No background triggers inside the FAR range; fitness is 0'))
