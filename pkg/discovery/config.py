"""
Run configuration.

Defaults come from ``settings.DISCOVERY_DEFAULTS``; a user JSON document is
deep-merged over them and frozen into dataclasses. Unknown keys are errors.
"""

import copy
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from django.conf import settings

from .exceptions import ConfigError


@dataclass(frozen=True)
class TreeConfig:
    c0: float
    gamma: float
    epsilon: float
    expansion_visits: int
    max_depth: int
    prune_margin: float
    prune_min_siblings: int
    convergence_window: int
    convergence_tol: float


@dataclass(frozen=True)
class PopulationConfig:
    k: int
    beta: float
    m: int
    init_variants: int
    init_mutations: int
    init_retries: int


@dataclass(frozen=True)
class ScheduleConfig:
    enabled: bool
    pm_variants: tuple
    pwc_variants: tuple


@dataclass(frozen=True)
class GeneratorConfig:
    backend: str
    script: str
    generation_model: str
    reflection_model: str
    temperature: float
    base_url: str
    api_key_env: str
    timeout: float
    max_in_flight: int
    max_retries: int
    backoff: float

    def api_key(self):
        return os.environ.get(self.api_key_env, '')


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    fs: float
    segment_duration: float
    n_train: int
    n_test: int
    injections_per_segment: int
    d_max: float
    amplitude: float
    psd_level: float
    f_corner: float
    f_floor: float
    f_lower: float
    f_upper: float
    chirp_mass_range: tuple
    min_separation: float
    edge_margin: float
    gps_start: float


@dataclass(frozen=True)
class LimitsConfig:
    t_max: float
    e_max: int


@dataclass(frozen=True)
class ExecutorConfig:
    mode: str
    argv: tuple
    seed_candidate: str


@dataclass(frozen=True)
class RunConfig:
    budget: int
    search_seed: int
    data_seed: int
    tree: TreeConfig
    population: PopulationConfig
    schedule: ScheduleConfig
    generator: GeneratorConfig
    dataset: DatasetConfig
    limits: LimitsConfig
    executor: ExecutorConfig
    far_range: tuple
    workers: int
    diversity_window: int
    output_dir: str
    prompt_override_dir: str

    def to_document(self):
        """The merged JSON document this config was built from."""
        doc = asdict(self)
        doc['seeds'] = {'search': doc.pop('search_seed'), 'data': doc.pop('data_seed')}
        return _listify(doc)


def _listify(value):
    if isinstance(value, dict):
        return {k: _listify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_listify(v) for v in value]
    return value


def default_document():
    return copy.deepcopy(settings.DISCOVERY_DEFAULTS)


def merge(base, override, path=''):
    """Recursive merge of `override` into a copy of `base`; unknown keys raise ConfigError."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}' must be an object")
            merged[key] = merge(base[key], value, where)
        else:
            merged[key] = value
    return merged


def _section(cls, doc, name, tuples=()):
    values = dict(doc[name])
    for key in tuples:
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    return cls(**values)


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def validate(config):
    _require(isinstance(config.budget, int) and config.budget >= 0, "budget must be a non-negative integer")
    tree = config.tree
    _require(tree.c0 >= 0, "tree.c0 must be non-negative")
    _require(0 <= tree.gamma <= 1, "tree.gamma must lie in [0, 1]")
    _require(tree.epsilon > 0, "tree.epsilon must be positive")
    _require(tree.expansion_visits >= 1, "tree.expansion_visits must be at least 1")
    _require(1 <= tree.max_depth, "tree.max_depth must be at least 1")
    _require(tree.convergence_window >= 1, "tree.convergence_window must be at least 1")
    population = config.population
    _require(population.k >= 1, "population.k must be at least 1")
    _require(population.beta >= 0, "population.beta must be non-negative")
    _require(population.m >= 1, "population.m must be at least 1")
    _require(population.init_retries >= 0, "population.init_retries must be non-negative")
    generator = config.generator
    _require(generator.backend in ('mock', 'live'), "generator.backend must be 'mock' or 'live'")
    _require(generator.timeout > 0, "generator.timeout must be positive")
    _require(generator.max_in_flight >= 1, "generator.max_in_flight must be at least 1")
    _require(generator.max_retries >= 0, "generator.max_retries must be non-negative")
    _require(config.limits.t_max > 0, "limits.t_max must be positive")
    _require(config.limits.e_max >= 1, "limits.e_max must be at least 1")
    _require(config.executor.mode in ('dsl', 'external'), "executor.mode must be 'dsl' or 'external'")
    _require(config.executor.mode == 'dsl' or config.executor.argv,
             "executor.argv is required in external mode")
    _require(len(config.far_range) == 2 and 0 < config.far_range[0] < config.far_range[1],
             "far_range must be [lo, hi] with 0 < lo < hi")
    dataset = config.dataset
    _require(dataset.fs > 0 and dataset.segment_duration > 0, "dataset.fs and segment_duration must be positive")
    _require(dataset.n_train >= 1, "dataset.n_train must be at least 1")
    _require(dataset.d_max > 0, "dataset.d_max must be positive")
    _require(0 < dataset.f_lower < dataset.f_upper <= dataset.fs / 2,
             "dataset band must satisfy 0 < f_lower < f_upper <= fs/2")
    _require(config.workers >= 1, "workers must be at least 1")
    _require(config.diversity_window >= 1, "diversity_window must be at least 1")
    return config


def build_config(document):
    doc = merge(default_document(), document)
    try:
        config = RunConfig(
            budget=doc['budget'],
            search_seed=int(doc['seeds']['search']),
            data_seed=int(doc['seeds']['data']),
            tree=_section(TreeConfig, doc, 'tree'),
            population=_section(PopulationConfig, doc, 'population'),
            schedule=_section(ScheduleConfig, doc, 'schedule', ('pm_variants', 'pwc_variants')),
            generator=_section(GeneratorConfig, doc, 'generator'),
            dataset=_section(DatasetConfig, doc, 'dataset', ('chirp_mass_range',)),
            limits=_section(LimitsConfig, doc, 'limits'),
            executor=_section(ExecutorConfig, doc, 'executor', ('argv',)),
            far_range=tuple(doc['far_range']),
            workers=doc['workers'],
            diversity_window=doc['diversity_window'],
            output_dir=doc['output_dir'],
            prompt_override_dir=doc['prompt_override_dir'],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    return validate(config)


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file at `path`, then `overrides` (a dict)."""
    document = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            document = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if overrides:
        document = merge(merge(default_document(), document), overrides)
    return build_config(document)
