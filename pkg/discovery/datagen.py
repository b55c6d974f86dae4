"""
Synthetic two-detector benchmark data.

Noise is Gaussian, colored by an analytic PSD; injections are Newtonian
chirps added identically to both channels. Every output is fully determined
by the seed and the dataset configuration.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import dsp
from .exceptions import ParameterError

logger = logging.getLogger(__name__)

CHANNELS = ('H1', 'L1')
INJECTION_COLUMNS = ['t_coal', 'distance', 'chirp_mass', 'snr_opt']

# G * M_sun / c^3 in seconds
SOLAR_MASS_SECONDS = 4.925491025543576e-06
REFERENCE_FREQUENCY = 100.0


@dataclass(frozen=True)
class PsdModel:
    """Flat one-sided PSD with a 1/f^2 rise below `f_corner`, held constant below `f_floor`."""

    level: float = 1.0
    f_corner: float = 30.0
    f_floor: float = 10.0

    def __call__(self, freqs):
        f = np.maximum(np.asarray(freqs, dtype=np.float64), self.f_floor)
        return self.level * (1.0 + (self.f_corner / f) ** 2)


@dataclass(frozen=True)
class InjectionRecord:
    t_coal: float
    distance: float
    chirp_mass: float
    snr_opt: float = float('nan')


@dataclass(frozen=True)
class StrainDataset:
    h1: dsp.SampledSeries
    l1: dsp.SampledSeries
    injections: tuple = ()
    d_max: float = 0.0
    seed: object = None

    @property
    def duration(self):
        return self.h1.duration

    def injections_frame(self):
        rows = [[i.t_coal, i.distance, i.chirp_mass, i.snr_opt] for i in self.injections]
        return pd.DataFrame(rows, columns=INJECTION_COLUMNS)


@dataclass(frozen=True)
class Segment:
    name: str
    split: str
    foreground: StrainDataset
    background: StrainDataset

    @property
    def duration(self):
        return self.background.duration


@dataclass
class Benchmark:
    fs: float
    d_max: float
    seed: int
    segments: list = field(default_factory=list)

    def split(self, name):
        return [s for s in self.segments if s.split == name]

    def truth(self, name):
        records = [i for s in self.split(name) for i in s.foreground.injections]
        return sorted(records, key=lambda r: r.t_coal)

    def background_duration(self, name):
        return float(sum(s.duration for s in self.split(name)))


def _seed_sequence(seed):
    if isinstance(seed, (list, tuple)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


def generate_noise(duration, fs, psd_model, seed, t0=0.0):
    """Independent colored Gaussian noise for H1 and L1."""
    n = int(round(duration * fs))
    if n < 2:
        raise ParameterError(f"duration {duration} s at {fs} Hz gives fewer than 2 samples")
    dt = 1.0 / fs
    freqs = np.fft.rfftfreq(n, d=dt)
    # unit-variance white noise has one-sided PSD 2/fs
    colour = np.sqrt(psd_model(freqs) * fs / 2.0)
    channels = []
    for child in _seed_sequence(seed).spawn(len(CHANNELS)):
        white = np.random.default_rng(child).standard_normal(n)
        channels.append(dsp.SampledSeries(np.fft.irfft(np.fft.rfft(white) * colour, n=n), t0, dt))
    return tuple(channels)


def generate_injections(n, d_max, duration, seed, *, t0=0.0, min_separation=30.0,
                        edge_margin=20.0, chirp_mass_range=(5.0, 20.0)):
    """Uniform-in-volume distances, separated coalescence times, uniform chirp masses."""
    n = int(n)
    if n < 0:
        raise ParameterError("injection count must be non-negative")
    if n == 0:
        return []
    if not d_max > 0:
        raise ParameterError("d_max must be positive")
    span = duration - 2 * edge_margin - (n - 1) * min_separation
    if span < 0:
        raise ParameterError(
            f"{n} injections separated by {min_separation} s do not fit in {duration} s "
            f"with {edge_margin} s margins"
        )
    rng = np.random.default_rng(_seed_sequence(seed))
    distances = d_max * (1.0 - rng.uniform(size=n)) ** (1.0 / 3.0)
    offsets = np.sort(rng.uniform(0.0, span, size=n))
    times = t0 + edge_margin + offsets + np.arange(n) * min_separation
    masses = rng.uniform(chirp_mass_range[0], chirp_mass_range[1], size=n)
    return [
        InjectionRecord(float(t), float(d), float(m))
        for t, d, m in zip(times, distances, masses)
    ]


def _time_to_coalescence(frequency, chirp_time):
    return (5.0 / 256.0) * (np.pi * frequency) ** (-8.0 / 3.0) * chirp_time ** (-5.0 / 3.0)


def chirp_waveform(series, injection, *, amplitude, f_lower, f_upper):
    """Sample indices and values of a tapered Newtonian chirp on the axis of `series`."""
    chirp_time = SOLAR_MASS_SECONDS * injection.chirp_mass
    tau_start = _time_to_coalescence(f_lower, chirp_time)
    tau_end = _time_to_coalescence(f_upper, chirp_time)
    first = int(np.ceil((injection.t_coal - tau_start - series.t0) / series.dt))
    last = int(np.floor((injection.t_coal - tau_end - series.t0) / series.dt))
    first, last = max(first, 0), min(last, len(series) - 1)
    if last < first:
        return np.array([], dtype=np.intp), np.array([])

    index = np.arange(first, last + 1)
    tau = np.maximum(injection.t_coal - (series.t0 + index * series.dt), tau_end)
    frequency = (1.0 / np.pi) * (5.0 / (256.0 * tau)) ** 0.375 * chirp_time ** -0.625
    phase = -2.0 * (tau / (5.0 * chirp_time)) ** 0.625
    values = (amplitude / injection.distance) * (frequency / REFERENCE_FREQUENCY) ** (2.0 / 3.0) * np.cos(phase)

    taper = np.ones(index.size)
    ramp_in = max(1, index.size // 10)
    ramp_out = min(8, index.size)
    taper[:ramp_in] = dsp.tukey_window(2 * ramp_in, 1.0)[:ramp_in]
    taper[-ramp_out:] *= dsp.tukey_window(2 * ramp_out, 1.0)[ramp_out:]
    return index, values * taper


def optimal_snr(values, dt, psd_model):
    """Network SNR of a waveform present identically in both detectors."""
    if values.size < 2:
        return 0.0
    spectrum = np.fft.rfft(values) * dt
    freqs = np.fft.rfftfreq(values.size, d=dt)
    df = 1.0 / (values.size * dt)
    single = 4.0 * np.sum(np.abs(spectrum[1:]) ** 2 / psd_model(freqs[1:])) * df
    return float(np.sqrt(len(CHANNELS) * single))


def render_dataset(noise, injections, *, psd_model, amplitude=35000.0, f_lower=20.0,
                   f_upper=512.0, d_max=0.0, seed=None):
    """Noise plus the summed injection waveforms; records snr_opt per injection."""
    h1, l1 = noise
    injections = sorted(injections, key=lambda r: r.t_coal)
    signal_samples = np.zeros(len(h1))
    recorded = []
    for injection in injections:
        index, values = chirp_waveform(h1, injection, amplitude=amplitude, f_lower=f_lower, f_upper=f_upper)
        signal_samples[index] += values
        snr = optimal_snr(values, h1.dt, psd_model)
        recorded.append(InjectionRecord(injection.t_coal, injection.distance, injection.chirp_mass, snr))
    return StrainDataset(
        h1=h1.with_samples(h1.samples + signal_samples),
        l1=l1.with_samples(l1.samples + signal_samples),
        injections=tuple(recorded),
        d_max=d_max,
        seed=seed,
    )


def build_benchmark(config, seed):
    """Train and test segments: foreground = noise + injections, background = the same noise."""
    psd_model = PsdModel(config.psd_level, config.f_corner, config.f_floor)
    benchmark = Benchmark(fs=config.fs, d_max=config.d_max, seed=int(seed))
    splits = ['train'] * config.n_train + ['test'] * config.n_test
    for index, split in enumerate(splits):
        t0 = config.gps_start + index * config.segment_duration
        noise = generate_noise(config.segment_duration, config.fs, psd_model, (seed, index, 0), t0=t0)
        injections = generate_injections(
            config.injections_per_segment, config.d_max, config.segment_duration, (seed, index, 1),
            t0=t0, min_separation=config.min_separation, edge_margin=config.edge_margin,
            chirp_mass_range=tuple(config.chirp_mass_range),
        )
        common = dict(psd_model=psd_model, amplitude=config.amplitude, f_lower=config.f_lower,
                      f_upper=config.f_upper, d_max=config.d_max, seed=(seed, index))
        segment = Segment(
            name=f"{split}-{index:03d}",
            split=split,
            foreground=render_dataset(noise, injections, **common),
            background=render_dataset(noise, [], **common),
        )
        logger.info("Generated segment %s with %d injections", segment.name, len(injections))
        benchmark.segments.append(segment)
    return benchmark


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def write_series(directory, channel, series, seed=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    series.samples.astype('<f8').tofile(directory / f"{channel}.f64")
    sidecar = {'t0': series.t0, 'dt': series.dt, 'n': len(series), 'seed': seed, 'channel': channel}
    (directory / f"{channel}.json").write_text(json.dumps(sidecar, indent=2))


def read_series(directory, channel):
    directory = Path(directory)
    sidecar = json.loads((directory / f"{channel}.json").read_text())
    samples = np.fromfile(directory / f"{channel}.f64", dtype='<f8')
    if samples.size != sidecar['n']:
        raise ParameterError(f"{channel} strain file holds {samples.size} samples, sidecar says {sidecar['n']}")
    return dsp.SampledSeries(samples, sidecar['t0'], sidecar['dt'])


def write_injections(path, injections):
    rows = [[i.t_coal, i.distance, i.chirp_mass, i.snr_opt] for i in injections]
    pd.DataFrame(rows, columns=INJECTION_COLUMNS).to_csv(path, index=False, float_format='%.17g')


def read_injections(path):
    frame = pd.read_csv(path)
    missing = set(INJECTION_COLUMNS) - set(frame.columns)
    if missing:
        raise ParameterError(f"injection file {path} lacks columns: {', '.join(sorted(missing))}")
    return [
        InjectionRecord(float(r.t_coal), float(r.distance), float(r.chirp_mass), float(r.snr_opt))
        for r in frame.itertuples(index=False)
    ]


def _seed_label(seed):
    return list(seed) if isinstance(seed, tuple) else seed


def save_benchmark(benchmark, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {'fs': benchmark.fs, 'd_max': benchmark.d_max, 'seed': benchmark.seed, 'segments': []}
    for segment in benchmark.segments:
        base = directory / segment.name
        for part, dataset in (('foreground', segment.foreground), ('background', segment.background)):
            for channel, series in zip(CHANNELS, (dataset.h1, dataset.l1)):
                write_series(base / part, channel, series, seed=_seed_label(dataset.seed))
        write_injections(base / 'injections.csv', segment.foreground.injections)
        manifest['segments'].append({
            'name': segment.name,
            'split': segment.split,
            't0': segment.background.h1.t0,
            'duration': segment.duration,
        })
    (directory / 'manifest.json').write_text(json.dumps(manifest, indent=2))
    return directory


def load_benchmark(directory):
    """Read a benchmark written by save_benchmark. Raises FileNotFoundError for missing files."""
    directory = Path(directory)
    manifest_path = directory / 'manifest.json'
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    benchmark = Benchmark(fs=manifest['fs'], d_max=manifest['d_max'], seed=manifest['seed'])
    for entry in manifest['segments']:
        base = directory / entry['name']
        truth_path = base / 'injections.csv'
        if not truth_path.exists():
            raise FileNotFoundError(f"missing truth file {truth_path}")
        injections = tuple(read_injections(truth_path))
        foreground = StrainDataset(
            read_series(base / 'foreground', 'H1'), read_series(base / 'foreground', 'L1'),
            injections=injections, d_max=manifest['d_max'],
        )
        background = StrainDataset(
            read_series(base / 'background', 'H1'), read_series(base / 'background', 'L1'),
            d_max=manifest['d_max'],
        )
        benchmark.segments.append(Segment(entry['name'], entry['split'], foreground, background))
    return benchmark


def resolve_benchmark(config, seed):
    """The benchmark at config.path when it has a manifest, else one generated in memory."""
    if config.path and (Path(config.path) / 'manifest.json').exists():
        logger.info("Loading benchmark from %s", config.path)
        return load_benchmark(config.path)
    return build_benchmark(config, seed)
