"""
Candidate generators and the bounded correction loop.

LiveGenerator speaks the OpenAI-compatible chat-completion protocol over
HTTPS. ScriptedGenerator replays responses from a JSON script and is what
every test and offline run uses.
"""

import json
import logging
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .exceptions import ConfigError, EvaluationError, GeneratorError, GeneratorOutage, ResponseParseError
from .prompts import REFLECTION_KINDS, build_rechat, parse_response

logger = logging.getLogger(__name__)

MAX_RECHAT_ROUNDS = 3

CANNED_REFLECTION = "{Keep the strongest conditioning stage and tighten the trigger thresholds.}"
CANNED_SUMMARY = "A staged pipeline of whitening, a time-frequency metric and peak triggering."


class LiveGenerator:
    """Chat-completion client; the API key is read from the environment and never logged."""

    def __init__(self, config, session=None):
        self.config = config
        self._api_key = config.api_key()
        if not self._api_key:
            raise ConfigError(f"environment variable {config.api_key_env} is not set")
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self.url = config.base_url.rstrip('/') + '/chat/completions'

    def model_for(self, bundle):
        if bundle.model_role == 'reflection':
            return self.config.reflection_model
        return self.config.generation_model

    def payload(self, bundle):
        return {
            'model': self.model_for(bundle),
            'messages': bundle.messages(),
            'temperature': self.config.temperature,
        }

    def _request(self, payload):
        headers = {'Authorization': f"Bearer {self._api_key}", 'Content-Type': 'application/json'}
        try:
            with self._slots:
                response = self.session.post(self.url, json=payload, headers=headers,
                                             timeout=self.config.timeout)
        except requests.exceptions.RequestException as exc:
            raise GeneratorError(f"request failed: {type(exc).__name__}", retryable=True) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise GeneratorError(f"HTTP {response.status_code}: {response.text[:200]}", retryable=True)
        try:
            response.raise_for_status()
        except requests.exceptions.HTTPError as exc:
            raise GeneratorError(f"HTTP {response.status_code}: {response.text[:200]}") from exc
        try:
            return response.json()['choices'][0]['message']['content']
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GeneratorError(f"unexpected response body: {response.text[:200]}") from exc

    def generate(self, bundle):
        payload = self.payload(bundle)
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            try:
                return self._request(payload)
            except GeneratorError as exc:
                if not exc.retryable:
                    raise
                logger.warning("Generator request failed (%s); attempt %d of %d", exc, attempt + 1, attempts)
                if attempt + 1 < attempts:
                    time.sleep(self.config.backoff ** attempt)
        raise GeneratorOutage(f"generator unavailable after {attempts} attempts")


class ScriptedGenerator:
    """Deterministic generator driven by a script document.

    Lookup order per request: ``keyed["<kind>:<depth>:<call>"]`` (call counts
    requests of that kind and depth), then the ``responses[kind]`` list
    cycled, then the ``default`` list cycled. An entry is either a string or
    ``{"choices": [{"weight": w, "text": t}, ...]}``, drawn with the seeded
    generator. Reflection and summary prompts fall back to canned text.
    """

    def __init__(self, script=None, seed=0):
        script = script or {}
        self.keyed = dict(script.get('keyed', {}))
        self.responses = {k.lower(): list(v) for k, v in script.get('responses', {}).items()}
        self.default = list(script.get('default', []))
        self.rng = np.random.default_rng(script.get('seed', seed))
        self.calls = []
        self._by_key = defaultdict(int)
        self._by_kind = defaultdict(int)
        self._default_count = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path, seed=0):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"generator script {path} does not exist")
        try:
            return cls(json.loads(path.read_text()), seed=seed)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"generator script {path} is not valid JSON: {exc}") from exc

    def _draw(self, entry):
        if isinstance(entry, str):
            return entry
        choices = entry['choices']
        weights = np.array([c['weight'] for c in choices], dtype=np.float64)
        index = int(self.rng.choice(len(choices), p=weights / weights.sum()))
        return choices[index]['text']

    def _lookup(self, kind, depth):
        call = self._by_key[(kind, depth)]
        self._by_key[(kind, depth)] += 1
        key = f"{kind}:{depth}:{call}"
        if key in self.keyed:
            return self.keyed[key]
        if self.responses.get(kind):
            entries = self.responses[kind]
            entry = entries[self._by_kind[kind] % len(entries)]
            self._by_kind[kind] += 1
            return entry
        if self.default and kind != 'summary' and kind not in REFLECTION_KINDS:
            entry = self.default[self._default_count % len(self.default)]
            self._default_count += 1
            return entry
        if kind == 'summary':
            return CANNED_SUMMARY
        if kind in REFLECTION_KINDS:
            return CANNED_REFLECTION
        raise GeneratorError(f"script has no response for '{kind}' at depth {depth}")

    def generate(self, bundle):
        with self._lock:
            text = self._draw(self._lookup(bundle.kind, bundle.depth))
            self.calls.append((bundle.kind, bundle.depth, bundle.model_role))
        return text


def build_generator(config, seed=0):
    if config.backend == 'live':
        return LiveGenerator(config)
    if config.script:
        return ScriptedGenerator.from_file(config.script, seed=seed)
    return ScriptedGenerator(seed=seed)


@dataclass
class CorrectionOutcome:
    success: bool
    parsed: object = None
    result: object = None
    calls: int = 0
    rechat_rounds: int = 0
    errors: list = field(default_factory=list)


def correction_loop(generator, bundle, evaluate, max_rounds=MAX_RECHAT_ROUNDS):
    """Generate, parse and evaluate; on failure rechat with the error report up to `max_rounds` times.

    `evaluate(parsed)` returns the evaluation result or raises EvaluationError.
    GeneratorOutage propagates to the caller.
    """
    outcome = CorrectionOutcome(success=False)
    while True:
        reply = generator.generate(bundle)
        outcome.calls += 1
        try:
            parsed = parse_response(reply)
            result = evaluate(parsed)
        except ResponseParseError as exc:
            failure = EvaluationError('parse', str(exc))
        except EvaluationError as exc:
            failure = exc
        else:
            outcome.success = True
            outcome.parsed = parsed
            outcome.result = result
            return outcome
        outcome.errors.append({'kind': failure.kind, 'message': failure.message})
        if outcome.rechat_rounds >= max_rounds:
            logger.info("Giving up on %s after %d rechat rounds", bundle.kind, outcome.rechat_rounds)
            return outcome
        bundle = build_rechat(bundle, reply, failure.report())
        outcome.rechat_rounds += 1


@dataclass
class EdgeRerunStats:
    samples: list
    reference: float = None

    @property
    def fitness(self):
        return np.array([s for s in self.samples if s is not None], dtype=np.float64)

    @property
    def mean(self):
        values = self.fitness
        return float(values.mean()) if values.size else float('nan')

    @property
    def sd(self):
        values = self.fitness
        return float(values.std(ddof=1)) if values.size > 1 else 0.0

    @property
    def failures(self):
        return sum(1 for s in self.samples if s is None)

    @property
    def fraction_exceeding(self):
        if not self.samples or self.reference is None:
            return float('nan')
        return float(np.sum(self.fitness > self.reference)) / len(self.samples)

    def summary(self):
        return {
            'n': len(self.samples),
            'failures': self.failures,
            'mean': self.mean,
            'sd': self.sd,
            'reference': self.reference,
            'fraction_exceeding': self.fraction_exceeding,
            'samples': list(self.samples),
        }


def rerun_edge(run_once, n, reference=None):
    """Repeat one recorded transition `n` times; failed repetitions are kept as None."""
    samples = []
    for repetition in range(int(n)):
        try:
            samples.append(run_once(repetition))
        except GeneratorError as exc:
            logger.warning("Repetition %d failed: %s", repetition, exc)
            samples.append(None)
    return EdgeRerunStats(samples=samples, reference=reference)
