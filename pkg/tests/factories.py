"""Small benchmarks, configs and generator scripts shared by the test modules."""

import copy
import json
from pathlib import Path

import numpy as np

from discovery import datagen, dsp
from discovery.config import load_config
from discovery.pipelines import DetectionCatalog
from discovery.tree import SearchState

FS = 2048.0

# Two 32-s training segments and one test segment with two loud injections each.
DESK_DOCUMENT = {
    'budget': 50,
    'far_range': [1e4, 1e8],
    'dataset': {
        'fs': FS,
        'segment_duration': 32.0,
        'n_train': 2,
        'n_test': 1,
        'injections_per_segment': 2,
        'amplitude': 1e5,
        'd_max': 2500.0,
        'min_separation': 8.0,
        'edge_margin': 4.0,
    },
    'tree': {'convergence_window': 1000},
}

SEED_TEXT = "whiten_welch(default)\nmetric_meanpower(default)\ntrigger_basic(default)\n"
BLIND_SEED_TEXT = "whiten_welch(default)\nmetric_meanpower(default)\ntrigger_basic(deltat=1e-06)\n"
TWEAK_TEXT = "whiten_welch(default)\nmetric_meanpower(default)\ntrigger_basic(deltat=10)\n"


def reply(idea, text):
    return "{" + idea + "}\n```pipeline\n" + text + "```\n"


TWEAK_REPLY = reply('Widen the timing tolerance of the peak trigger.', TWEAK_TEXT)
VARIANT_REPLIES = [
    reply('Welch whitening with a shorter segment.',
          "whiten_welch(nperseg=2048)\nmetric_meanpower(default)\ntrigger_basic(default)\n"),
    reply('Finer spectrogram resolution.',
          "whiten_welch(default)\nmetric_meanpower(nperseg=128)\ntrigger_basic(default)\n"),
    reply('Median detrending ahead of whitening.',
          "detrend_median(kernel=51)\nwhiten_welch(default)\nmetric_meanpower(default)\ntrigger_basic(default)\n"),
]
JUNK_REPLY = "I would try a better whitening filter."


def desk_config(output_dir=None, **overrides):
    document = copy.deepcopy(DESK_DOCUMENT)
    if output_dir is not None:
        document['output_dir'] = str(output_dir)
    return load_config(overrides=_deep_update(document, overrides))


def _deep_update(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = value
    return out


_BENCHMARKS = {}


def desk_benchmark(seed=0):
    """Cached small benchmark; segments are frozen dataclasses so sharing is safe."""
    if seed not in _BENCHMARKS:
        _BENCHMARKS[seed] = datagen.build_benchmark(desk_config().dataset, seed)
    return _BENCHMARKS[seed]


def write_config(path, document=None, **overrides):
    document = _deep_update(document or DESK_DOCUMENT, overrides)
    Path(path).write_text(json.dumps(document, indent=2))
    return Path(path)


def write_script(path, script):
    Path(path).write_text(json.dumps(script, indent=2))
    return str(path)


def noise_pair(duration=32.0, fs=FS, seed=0, t0=0.0):
    return datagen.generate_noise(duration, fs, datagen.PsdModel(), seed, t0=t0)


def white_series(n, fs=256.0, seed=0, sigma=1.0):
    rng = np.random.default_rng(seed)
    return dsp.SampledSeries(sigma * rng.standard_normal(n), 0.0, 1.0 / fs)


def catalog(times, stats, variances=1.0):
    times = np.asarray(times, dtype=np.float64)
    variances = np.broadcast_to(np.asarray(variances, dtype=np.float64), times.shape)
    return DetectionCatalog(times, np.asarray(stats, dtype=np.float64), variances)


def flat_tree(fitnesses, budget=100, **settings):
    """Root plus one evaluated child per fitness value."""
    state = SearchState(budget, **settings)
    state.add_root()
    children = []
    for fitness in fitnesses:
        node_id = state.add_node(0, 'init')
        state.backpropagate(node_id, fitness)
        children.append(node_id)
    return state, children
