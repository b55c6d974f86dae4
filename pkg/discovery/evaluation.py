"""
Candidate evaluation: parse, execute on background and foreground segments,
score. Failures are raised as EvaluationError with one of the kinds the
correction loop reports back to the generator.
"""

import logging
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datagen, dsl, scoring
from .exceptions import DslParseError, EvaluationError, ParameterError
from .pipelines import DetectionCatalog

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateProgram:
    """Generated candidate: the text as emitted plus its parsed form in DSL mode."""

    text: str
    design_idea: str = ''
    program: dsl.PipelineDsl = None

    @property
    def canonical_text(self):
        if self.program is not None:
            return self.program.to_text()
        return self.text.strip() + '\n'


def compile_candidate(text, mode='dsl', design_idea=''):
    """Build a CandidateProgram, raising EvaluationError('parse') for bad DSL text."""
    if mode != 'dsl':
        return CandidateProgram(text=dsl.extract_block(text), design_idea=design_idea)
    try:
        program = dsl.parse_dsl(text)
    except DslParseError as exc:
        raise EvaluationError('parse', str(exc)) from exc
    return CandidateProgram(text=program.to_text(), design_idea=design_idea, program=program)


class ExternalExecutor:
    """Runs candidate code through a user command.

    `argv` items may reference {candidate}, {h1}, {l1} and {output}; the
    command must write a time,stat,var CSV to {output} and exit 0.
    """

    def __init__(self, argv):
        self.argv = list(argv)

    def __call__(self, candidate, h1, l1, timeout):
        with tempfile.TemporaryDirectory(prefix='gwsearch-') as tmp:
            tmp = Path(tmp)
            candidate_path = tmp / 'candidate.txt'
            candidate_path.write_text(candidate.text)
            datagen.write_series(tmp, 'H1', h1)
            datagen.write_series(tmp, 'L1', l1)
            paths = {
                'candidate': str(candidate_path),
                'h1': str(tmp / 'H1.f64'),
                'l1': str(tmp / 'L1.f64'),
                'output': str(tmp / 'catalog.csv'),
            }
            args = [item.format(**paths) for item in self.argv]
            try:
                result = subprocess.run(args, cwd=tmp, capture_output=True, text=True, timeout=timeout)
            except subprocess.TimeoutExpired:
                raise EvaluationError('timeout', f"executor exceeded {timeout:.1f} s")
            except OSError as exc:
                raise EvaluationError('runtime', f"cannot start executor: {exc}")
            if result.returncode != 0:
                raise EvaluationError(
                    'runtime', f"executor exited with code {result.returncode}: {result.stderr[-2000:]}"
                )
            output = Path(paths['output'])
            if not output.exists():
                raise EvaluationError('runtime', "executor exited 0 but wrote no catalog")
            try:
                return DetectionCatalog.read_csv(output)
            except (ParameterError, ValueError) as exc:
                raise EvaluationError('runtime', f"unreadable catalog: {exc}")


def _run_dsl(candidate, h1, l1, timeout):
    """Run a parsed pipeline in a worker thread, giving up after `timeout` seconds."""
    pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix='gwsearch-dsl')
    future = pool.submit(dsl.run_dsl, candidate.program, h1, l1)
    try:
        return future.result(timeout=timeout)
    except FutureTimeout:
        raise EvaluationError('timeout', f"pipeline exceeded {timeout:.1f} s on one segment") from None
    finally:
        # a timed-out run keeps its thread until the stage returns
        pool.shutdown(wait=False)


def loudest_segment(segments):
    """Index of the segment holding the loudest injection (highest snr_opt, else nearest)."""
    best, best_key = None, None
    for index, segment in enumerate(segments):
        for injection in segment.foreground.injections:
            snr = injection.snr_opt
            key = (snr if np.isfinite(snr) else -np.inf, -injection.distance)
            if best_key is None or key > best_key:
                best, best_key = index, key
    return best


class CandidateEvaluator:
    """Scores candidates on one split of a benchmark, caching by canonical text."""

    def __init__(self, benchmark, *, split='train', t_max=60.0, e_max=3, far_range=scoring.FAR_RANGE,
                 mode='dsl', executor=None):
        self.benchmark = benchmark
        self.split = split
        self.segments = benchmark.split(split)
        if not self.segments:
            raise ParameterError(f"benchmark has no '{split}' segments")
        self.truth = benchmark.truth(split)
        if not self.truth:
            raise ParameterError(f"benchmark '{split}' split has no injections to score against")
        self.background_duration = benchmark.background_duration(split)
        self.t_max = t_max
        self.e_max = e_max
        self.far_range = tuple(far_range)
        self.mode = mode
        self.executor = executor or _run_dsl
        self.loudest = loudest_segment(self.segments)
        self._cache = {}
        self._lock = threading.Lock()
        self.cache_hits = 0

    @classmethod
    def from_config(cls, benchmark, config, split='train'):
        executor = None
        if config.executor.mode == 'external':
            executor = ExternalExecutor(config.executor.argv)
        return cls(
            benchmark, split=split, t_max=config.limits.t_max, e_max=config.limits.e_max,
            far_range=config.far_range, mode=config.executor.mode, executor=executor,
        )

    def compile(self, text, design_idea=''):
        return compile_candidate(text, self.mode, design_idea)

    def _execute(self, candidate, started):
        backgrounds, foregrounds = [], []
        for index, segment in enumerate(self.segments):
            for part, target in ((segment.background, backgrounds), (segment.foreground, foregrounds)):
                remaining = self.t_max - (time.perf_counter() - started)
                if remaining <= 0:
                    raise EvaluationError('timeout', f"evaluation exceeded {self.t_max:.1f} s")
                try:
                    catalog = self.executor(candidate, part.h1, part.l1, remaining)
                except EvaluationError:
                    raise
                except Exception as exc:
                    raise EvaluationError('runtime', f"{type(exc).__name__}: {exc}") from exc
                target.append(catalog)
            if index == self.loudest and len(foregrounds[-1]) == 0:
                raise EvaluationError(
                    'no_signal', f"no triggers on segment {segment.name}, which holds the loudest injection"
                )
        if time.perf_counter() - started > self.t_max:
            raise EvaluationError('timeout', f"evaluation exceeded {self.t_max:.1f} s")
        return DetectionCatalog.concatenate(backgrounds), DetectionCatalog.concatenate(foregrounds)

    def run_catalogs(self, candidate):
        """Background and foreground catalogs over the split, with retries for runtime errors."""
        attempts = self.e_max if self.mode == 'external' else 1
        error_trials = 0
        started = time.perf_counter()
        while True:
            try:
                background, foreground = self._execute(candidate, started)
                return background, foreground, error_trials
            except EvaluationError as exc:
                error_trials += 1
                if exc.kind != 'runtime' or error_trials >= attempts:
                    raise

    def evaluate(self, candidate):
        """EvalResult for `candidate` (text or CandidateProgram); raises EvaluationError."""
        if isinstance(candidate, str):
            candidate = self.compile(candidate)
        key = candidate.canonical_text
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self.cache_hits += 1
        if cached is not None:
            if isinstance(cached, EvaluationError):
                raise cached
            return cached

        started = time.perf_counter()
        try:
            background, foreground, error_trials = self.run_catalogs(candidate)
            result = scoring.auc_fitness(
                background, foreground, self.truth, self.background_duration,
                self.benchmark.d_max, self.far_range,
            )
        except EvaluationError as exc:
            logger.debug("Candidate failed (%s): %s", exc.kind, exc.message)
            if exc.kind != 'timeout':
                with self._lock:
                    self._cache[key] = exc
            raise
        result.wall_time = time.perf_counter() - started
        result.error_trials = error_trials
        with self._lock:
            self._cache[key] = result
        logger.debug("Candidate scored auc=%.4f in %.2f s", result.auc, result.wall_time)
        return result
