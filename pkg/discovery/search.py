"""
The search loop: seed evaluation, initial population, then repeated
select / expand-by-schedule / evaluate / backpropagate until the budget is
spent or progress stalls. Writes every run artifact into the output
directory.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, dsl, evolve, prompts
from .evaluation import CandidateEvaluator
from .exceptions import ConfigError, EvaluationError, GeneratorError, SearchAborted
from .genclient import correction_loop
from .tree import SearchState

logger = logging.getLogger(__name__)

ARTIFACTS = (
    'config.json', 'run_log.jsonl', 'evaluations.jsonl', 'tree.json', 'analysis.json', 'analysis.csv',
    'best_candidate.txt', 'summary.json',
)


def load_seed_text(config):
    """Seed candidate text: executor.seed_candidate as a file path or inline text, else the built-in seed."""
    value = config.executor.seed_candidate
    if value:
        path = Path(value)
        if '\n' not in value and path.is_file():
            return path.read_text()
        return value
    if config.executor.mode != 'dsl':
        raise ConfigError("executor.seed_candidate is required in external mode")
    return dsl.SEED_DSL


@dataclass
class RequestOutcome:
    request: evolve.OpRequest
    success: bool
    candidate: object = None
    result: object = None
    design_idea: str = ''
    summary: str = ''
    reflection: str = ''
    calls: int = 0
    rechat_rounds: int = 0
    errors: list = None


def _dump_jsonl(path, rows):
    with open(path, 'w') as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + '\n')


def _dump_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + '\n')


class EvoMctsSearch:
    """One search run over a benchmark with a given generator."""

    def __init__(self, config, benchmark, generator, *, output_dir=None, registry=None, evaluator=None,
                 library=None):
        self.config = config
        self.benchmark = benchmark
        self.generator = generator
        self.output_dir = Path(output_dir or config.output_dir)
        self.registry = registry
        self.evaluator = evaluator or CandidateEvaluator.from_config(benchmark, config)
        self.library = library or prompts.PromptLibrary(
            config.prompt_override_dir, dsl_mode=config.executor.mode == 'dsl',
            max_depth=config.tree.max_depth,
        )
        self.rng = np.random.default_rng(config.search_seed)
        self.state = SearchState.from_config(config.tree, config.budget)
        self.population = evolve.Population(k=config.population.k, beta=config.population.beta)
        self.variants = evolve.VariantCycle({
            'PM': config.schedule.pm_variants,
            'PWC': config.schedule.pwc_variants,
        })
        self.run_log = []
        self.evaluations = []
        self.timings = []
        self.results = {}
        self.level = 0
        self.status = 'completed'
        self.message = ''
        self.converged = False
        self.test_fitness = None

    # -- prompt bindings ----------------------------------------------------

    def _node(self, node_id):
        return self.state.nodes[node_id]

    @staticmethod
    def _description(node):
        return node.summary or node.design_idea

    @staticmethod
    def _reflection(node):
        return node.reflection or node.design_idea

    @staticmethod
    def _score(node):
        return 'n/a' if node.fitness is None else f"{node.fitness:.2f}"

    def _reflect(self, kind, depth, bindings):
        bundle = self.library.render(kind, depth, bindings)
        return prompts.extract_idea(self.generator.generate(bundle))

    def _operator_bundle(self, request, depth):
        """(reflection text, generation bundle) for one operator request."""
        kind, variant = request.kind, request.variant
        focus = self._node(request.focus)
        max_depth = self.config.tree.max_depth

        if kind == 'init':
            index = int(request.variant or 0)
            root = self.state.root
            directives = prompts.INIT_DIRECTIVES
            return '', self.library.render('init', depth, {
                'seed_description': self._description(root),
                'seed_code': root.candidate,
                'variant_index': index + 1,
                'variant_count': self.config.population.init_variants,
                'variation_directive': directives[index % len(directives)],
            })

        if kind == 'PC':
            worse, better = (self._node(i) for i in request.inputs)
            reflection = self._reflect('pc_reflection', depth, {
                'max_depth': max_depth, 'code_worse': worse.candidate, 'code_better': better.candidate,
            })
            return reflection, self.library.render('pc', depth, {
                'worse_code': worse.candidate, 'better_code': better.candidate, 'reflection': reflection,
            })

        if kind == 'SC':
            peers = [self._node(i) for i in request.inputs[1:]]
            father = self._node(focus.parent) if focus.parent is not None else focus
            peer_text = '\n'.join(
                f"[Peer {n + 1} Reflection | Score: {self._score(p)}]{self._reflection(p)}"
                for n, p in enumerate(peers)
            )
            reflection = self._reflect('sc_reflection', depth, {
                'parent_depth': focus.depth, 'max_depth': max_depth, 'parent_reflections': peer_text,
                'father_depth': father.depth, 'father_reflection': self._reflection(father),
            })
            return reflection, self.library.render('sc', depth, {
                'reflection': reflection, 'algorithm_description': self._description(focus),
                'algorithm_code': focus.candidate,
            })

        if kind == 'PWC':
            path = [self._node(i) for i in request.inputs]
            if variant == 'analysis':
                info = '\n'.join(
                    f"[No.{n + 1} algorithm's reflection (depth: {p.depth})]"
                    f"<{self._description(p)}><{self._score(p)}><{p.candidate}>"
                    for n, p in enumerate(path)
                )
                reflection = self._reflect('pwc_analysis', depth, {
                    'max_depth': max_depth, 'num_algorithms': len(path), 'parent_info': info,
                })
            else:
                info = '\n'.join(
                    f"[No.{n + 1} algorithm's reflection (depth: {p.depth})]<{self._reflection(p)}>"
                    for n, p in enumerate(path)
                )
                reflection = self._reflect('pwc_reflection', depth, {
                    'max_depth': max_depth, 'num_algorithms': len(path), 'algorithm_reflections': info,
                })
            return reflection, self.library.render('pwc', depth, {
                'reflection': reflection, 'algorithm_description': self._description(focus),
                'algorithm_code': focus.candidate,
            })

        if kind == 'PM':
            elite = self._node(request.inputs[1])
            if variant == 'two_stage':
                lineage = [self._node(i) for i in self.state.path_to_root(focus.id)][::-1]
                insights = '\n'.join(
                    f"[Parent {n + 1} Reflection | Score: {self._score(p)}]{self._reflection(p)}"
                    for n, p in enumerate(lineage)
                )
                reflection = self._reflect('pm_reflection', depth, {
                    'parent_reflections': insights, 'elite_reflection': self._reflection(elite),
                })
                return reflection, self.library.render('pm_two_stage', depth, {
                    'reflection': reflection,
                    'elite_algorithm_description': self._description(elite),
                    'elite_algorithm_code': elite.candidate,
                })
            return '', self.library.render('pm', depth, {
                'original_algorithm_description': self._description(focus),
                'original_algorithm_code': focus.candidate,
                'original_objective_value': self._score(focus),
                'better_algorithm_description': self._description(elite),
                'better_algorithm_code': elite.candidate,
                'better_objective_value': self._score(elite),
                'better_algorithm_reflection': self._reflection(elite),
            })

        raise SearchAborted(f"unknown operator {kind!r}")

    # -- execution ----------------------------------------------------------

    def _evaluate_parsed(self, parsed):
        candidate = self.evaluator.compile(parsed.code, parsed.design_idea)
        return candidate, self.evaluator.evaluate(candidate)

    def execute(self, request):
        """Run one operator request through generation, correction and evaluation. No tree writes."""
        depth = self._node(request.focus).depth + 1
        reflection, bundle = self._operator_bundle(request, depth)
        outcome = correction_loop(self.generator, bundle, self._evaluate_parsed)
        if not outcome.success:
            return RequestOutcome(request, False, calls=outcome.calls, rechat_rounds=outcome.rechat_rounds,
                                  errors=outcome.errors)
        candidate, result = outcome.result
        summary_bundle = self.library.summarize(outcome.parsed.design_idea, candidate.canonical_text, depth)
        summary = self.generator.generate(summary_bundle).strip()
        return RequestOutcome(
            request, True, candidate=candidate, result=result, design_idea=outcome.parsed.design_idea,
            summary=summary, reflection=reflection, calls=outcome.calls,
            rechat_rounds=outcome.rechat_rounds, errors=outcome.errors,
        )

    def _execute_all(self, requests):
        if self.config.workers <= 1 or len(requests) <= 1:
            return [self.execute(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            futures = [pool.submit(self.execute, r) for r in requests]
            return [f.result() for f in futures]

    def _elite_fitness(self):
        best = self.state.best_node()
        return None if best is None else best.fitness

    def _record(self, outcome, node_id):
        request = outcome.request
        record = {
            'eval': self.state.t,
            'level': self.level,
            'op': request.kind,
            'variant': request.variant,
            'focus': request.focus,
            'inputs': list(request.inputs),
            'node': node_id,
            'fitness': None if node_id is None else self._node(node_id).fitness,
            'elite_fitness': self._elite_fitness(),
            'calls': outcome.calls,
            'rechat_rounds': outcome.rechat_rounds,
            'errors': [e['kind'] for e in outcome.errors or []],
            'status': 'ok' if node_id is not None else 'skipped',
        }
        self.run_log.append(record)
        if self.registry is not None:
            self.registry.record(record)
        return record

    def _record_evaluation(self, node_id, candidate, result):
        _, flagged = analysis.normalize_code_flagged(candidate.canonical_text)
        self.evaluations.append({
            'index': len(self.evaluations),
            'node': node_id,
            'op': self._node(node_id).origin_op,
            'fitness': result.auc,
            'degenerate': result.degenerate,
            'error_trials': result.error_trials,
            'canonical': analysis.normalize_code(candidate.canonical_text),
            'normalization_flag': flagged,
        })
        self.timings.append({'node': node_id, 'wall_time': result.wall_time})
        self.results[node_id] = result

    def _apply(self, outcome, parent_id, gated=True):
        """Write one outcome into the tree and population. Returns the new node id or None."""
        self.state.tick()
        node_id = None
        if outcome.success:
            add = self.state.expand if gated else self.state.add_node
            op = outcome.request.kind
            node_id = add(
                parent_id, op, candidate=outcome.candidate.canonical_text, design_idea=outcome.design_idea,
                summary=outcome.summary, reflection=outcome.reflection,
            )
            self.state.backpropagate(node_id, outcome.result.auc)
            self._record_evaluation(node_id, outcome.candidate, outcome.result)
            evolve.update_population(self.population, node_id, self.state, self.rng)
        self._record(outcome, node_id)
        return node_id

    # -- phases ------------------------------------------------------------

    def evaluate_seed(self):
        text = load_seed_text(self.config)
        try:
            candidate = self.evaluator.compile(text, 'Seed pipeline')
            result = self.evaluator.evaluate(candidate)
        except EvaluationError as exc:
            raise SearchAborted(f"seed candidate failed ({exc.kind}): {exc.message}") from exc
        analysis_bundle = self.library.render('seed_analysis', 0, {'prompt_seed_func': candidate.canonical_text})
        reflection = prompts.extract_idea(self.generator.generate(analysis_bundle))
        root = self.state.add_root(candidate=candidate.canonical_text, design_idea='Seed pipeline',
                                   reflection=reflection)
        self.state.backpropagate(root, result.auc)
        self._record_evaluation(root, candidate, result)
        evolve.update_population(self.population, root, self.state, self.rng)
        record = {
            'eval': 0, 'level': 0, 'op': 'seed', 'variant': '', 'focus': None, 'inputs': [], 'node': root,
            'fitness': result.auc, 'elite_fitness': result.auc, 'calls': 1, 'rechat_rounds': 0,
            'errors': [], 'status': 'ok',
        }
        self.run_log.append(record)
        if self.registry is not None:
            self.registry.record(record)
        logger.info("Seed fitness %.4f", result.auc)
        return root

    def _propose_init(self, kind, index, request):
        if kind == 'init':
            request = evolve.OpRequest('init', request.focus, (request.focus,), str(index))
        else:
            request = evolve.OpRequest('PM', request.focus, request.inputs, self.variants.next('PM') or 'single')
        outcome = self.execute(request)
        return self._apply(outcome, request.focus, gated=False)

    def init_population(self, root):
        population = self.config.population
        evolve.init_population(
            self.state, root, self._propose_init, population=self.population, rng=self.rng,
            variants=population.init_variants, mutations=population.init_mutations,
            retries=population.init_retries,
        )
        logger.info("Initial population of %d nodes", len(self.population.members))

    def expand_level(self):
        """One selection and one scheduled expansion. Returns False when selection could not expand."""
        leaf = self.state.select_leaf()
        point = self.state.expansion_point(leaf)
        if not self.state.can_expand(point):
            return False
        self.level += 1
        kinds = evolve.plan_level(self.config.schedule.enabled, self.rng)
        requests = []
        for kind in kinds[:self.state.budget - self.state.t]:
            variant = self.variants.next(kind) if kind in ('PM', 'PWC') else ''
            requests.append(evolve.choose_inputs(
                kind, self.state, point, elite_id=self.population.elite, rng=self.rng,
                m=self.config.population.m, variant=variant,
            ))
        requests = [
            r if r.variant or r.kind != 'PM' else evolve.OpRequest(r.kind, r.focus, r.inputs, 'single')
            for r in requests
        ]
        for outcome in self._execute_all(requests):
            self._apply(outcome, point)
        logger.info(
            "Level %d at node %d (depth %d): %d/%d evaluations, elite %.4f",
            self.level, point, self._node(point).depth, self.state.t, self.state.budget,
            self._elite_fitness(),
        )
        return True

    def validate_elite(self):
        """Score the elite on the held-out test split, when it holds injections."""
        if not self.benchmark.truth('test') or self.population.elite is None:
            return None
        elite = self._node(self.population.elite)
        tester = CandidateEvaluator.from_config(self.benchmark, self.config, split='test')
        try:
            return tester.evaluate(tester.compile(elite.candidate)).auc
        except EvaluationError as exc:
            logger.warning("Elite failed on the test split (%s): %s", exc.kind, exc.message)
            return None

    def run(self):
        """Run the search and write artifacts. GeneratorOutage is re-raised after partial artifacts."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(self.output_dir / 'config.json', self.config.to_document())
        outage = None
        try:
            root = self.evaluate_seed()
            if self.state.budget > 0:
                self.init_population(root)
            while self.state.t < self.state.budget:
                if not self.expand_level():
                    continue
                pruned, self.converged = self.state.maintenance()
                if pruned:
                    logger.debug("Pruned nodes %s", pruned)
                if self.converged:
                    logger.info("Best fitness stalled over %d evaluations; stopping",
                                self.config.tree.convergence_window)
                    break
        except GeneratorError as exc:
            self.status = 'halted'
            self.message = str(exc)
            outage = exc
            logger.error("Search halted: %s", exc)
        except SearchAborted as exc:
            self.status = 'aborted'
            self.message = str(exc)
            self.write_artifacts()
            if self.registry is not None:
                self.registry.finish(self.status, self.summary())
            raise
        if outage is None:
            self.test_fitness = self.validate_elite()
        self.write_artifacts()
        if self.registry is not None:
            self.registry.finish(self.status, self.summary())
        if outage is not None:
            raise outage
        return self.output_dir

    # -- artifacts ---------------------------------------------------------

    def elite_node(self):
        if self.population.elite is not None:
            return self._node(self.population.elite)
        return self.state.root if self.state.nodes else None

    def lineage(self, node_id):
        return [
            {'id': i, 'op': self._node(i).origin_op, 'depth': self._node(i).depth,
             'fitness': self._node(i).fitness}
            for i in self.state.path_to_root(node_id)
        ]

    def summary(self):
        elite = self.elite_node()
        seed = self.run_log[0]['fitness'] if self.run_log else None
        report = analysis.analyze_run(self.evaluations, self.config.diversity_window) if self.evaluations else None
        return {
            'status': self.status,
            'message': self.message,
            'budget': self.state.budget,
            'evaluations': self.state.t,
            'levels': self.level,
            'converged': self.converged,
            'seed_fitness': seed,
            'elite_node': None if elite is None else elite.id,
            'elite_fitness': None if elite is None else elite.fitness,
            'test_fitness': self.test_fitness,
            'lineage': [] if elite is None else self.lineage(elite.id),
            'phase_transitions': [] if report is None else report['phase_transitions'],
            'cache_hits': self.evaluator.cache_hits,
        }

    def write_artifacts(self):
        out = self.output_dir
        _dump_jsonl(out / 'run_log.jsonl', self.run_log)
        _dump_jsonl(out / 'evaluations.jsonl', self.evaluations)
        _dump_jsonl(out / 'timings.jsonl', self.timings)
        tree = self.state.to_dict()
        tree['population'] = self.population.to_dict()
        _dump_json(out / 'tree.json', tree)
        if self.evaluations:
            report = analysis.analyze_run(self.evaluations, self.config.diversity_window)
            members = [self._node(i).candidate for i in self.population.members]
            if members:
                report['population'] = analysis.population_diversity(
                    [analysis.normalize_code(m) for m in members]
                )
            _dump_json(out / 'analysis.json', report)
            analysis.analysis_frame(report).to_csv(out / 'analysis.csv', index=False)
            _dump_json(out / 'curves.json', self._curves(report))
        elite = self.elite_node()
        if elite is not None:
            (out / 'best_candidate.txt').write_text(elite.candidate)
            self._write_elite_catalogs(elite)
        _dump_json(out / 'summary.json', self.summary())

    def _curves(self, report):
        """Sensitivity curves of the seed, the elite and every phase-transition node."""
        labels = {0: 'seed'}
        evaluations = report['evaluations']
        for event in report['phase_transitions']:
            labels[evaluations[event['index']]['node']] = 'transition'
        elite = self.elite_node()
        if elite is not None:
            labels[elite.id] = 'elite'
        curves = {}
        for node_id, label in sorted(labels.items()):
            result = self.results.get(node_id)
            if result is None:
                continue
            curve = result.to_report()
            curve.pop('wall_time')
            curve['label'] = label
            curve['fitness'] = result.auc
            curves[str(node_id)] = curve
        return curves

    def _write_elite_catalogs(self, elite):
        try:
            candidate = self.evaluator.compile(elite.candidate)
            background, foreground, _ = self.evaluator.run_catalogs(candidate)
        except EvaluationError as exc:
            logger.warning("Could not rebuild elite catalogs: %s", exc)
            return
        background.to_csv(self.output_dir / 'best_background.csv')
        foreground.to_csv(self.output_dir / 'best_foreground.csv')

    # -- restore -------------------------------------------------------------

    @classmethod
    def restore(cls, run_dir, config, benchmark, generator):
        """A search positioned at the end of a finished run, for replaying recorded edges."""
        run_dir = Path(run_dir)
        search = cls(config, benchmark, generator, output_dir=run_dir)
        tree = json.loads((run_dir / 'tree.json').read_text())
        search.state = SearchState.from_dict(tree)
        population = tree.get('population', {})
        search.population = evolve.Population(
            k=population.get('k', config.population.k), beta=population.get('beta', config.population.beta),
            members=list(population.get('members', [])), elite=population.get('elite'),
        )
        with open(run_dir / 'run_log.jsonl') as handle:
            search.run_log = [json.loads(line) for line in handle if line.strip()]
        return search

    def recorded_request(self, eval_index):
        for record in self.run_log:
            if record['eval'] == eval_index and record['op'] != 'seed':
                return evolve.OpRequest(record['op'], record['focus'], tuple(record['inputs']),
                                        record.get('variant', ''))
        raise ConfigError(f"run log has no operator record with eval index {eval_index}")
