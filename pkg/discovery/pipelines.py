"""
Detection pipelines.

A pipeline maps two equally sampled strain channels to a DetectionCatalog
through registered stages: an optional detrend stage, one whitening stage,
one metric stage and one trigger stage. The seed and elite reference
pipelines are the default parameterisations of those stages, so running
them here and running their pipeline text through discovery.dsl share a
single code path.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import dsp
from .exceptions import ParameterError

logger = logging.getLogger(__name__)

EPS = np.finfo(float).tiny

ROLES = ('detrend', 'whiten', 'metric', 'trigger')


@dataclass(frozen=True)
class DetectionCatalog:
    times: np.ndarray
    stats: np.ndarray
    vars: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).ravel()
        stats = np.asarray(self.stats, dtype=np.float64).ravel()
        variances = np.asarray(self.vars, dtype=np.float64).ravel()
        if not times.size == stats.size == variances.size:
            raise ParameterError("catalog columns must have equal length")
        if np.any(~(variances > 0)):
            raise ParameterError("catalog timing tolerances must be positive")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'stats', stats)
        object.__setattr__(self, 'vars', variances)

    def __len__(self):
        return self.times.size

    @classmethod
    def empty(cls):
        return cls(np.array([]), np.array([]), np.array([]))

    @classmethod
    def concatenate(cls, catalogs):
        catalogs = list(catalogs)
        if not catalogs:
            return cls.empty()
        return cls(
            np.concatenate([c.times for c in catalogs]),
            np.concatenate([c.stats for c in catalogs]),
            np.concatenate([c.vars for c in catalogs]),
        )

    def sorted(self):
        order = np.argsort(self.times, kind='stable')
        return DetectionCatalog(self.times[order], self.stats[order], self.vars[order])

    def to_frame(self):
        return pd.DataFrame({'time': self.times, 'stat': self.stats, 'var': self.vars})

    @classmethod
    def from_frame(cls, frame):
        missing = {'time', 'stat', 'var'} - set(frame.columns)
        if missing:
            raise ParameterError(f"catalog is missing columns: {', '.join(sorted(missing))}")
        return cls(frame['time'].to_numpy(), frame['stat'].to_numpy(), frame['var'].to_numpy())

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    @classmethod
    def read_csv(cls, path):
        return cls.from_frame(pd.read_csv(path))


@dataclass(frozen=True)
class MetricSeries:
    values: np.ndarray
    times: np.ndarray


# ---------------------------------------------------------------------------
# Stage registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # int, float or choice
    default: object
    low: float = None
    high: float = None
    choices: tuple = ()
    odd: bool = False

    def coerce(self, value):
        """Return the validated value, or raise ParameterError naming the constraint."""
        if self.kind == 'choice':
            value = str(value)
            if value not in self.choices:
                raise ParameterError(
                    f"parameter '{self.name}' must be one of {', '.join(self.choices)} (got {value!r})"
                )
            return value
        if isinstance(value, str) or isinstance(value, bool):
            raise ParameterError(f"parameter '{self.name}' must be numeric (got {value!r})")
        value = float(value)
        if not np.isfinite(value):
            raise ParameterError(f"parameter '{self.name}' must be finite")
        if self.kind == 'int':
            if value != int(value):
                raise ParameterError(f"parameter '{self.name}' must be an integer (got {value:g})")
            value = int(value)
        if self.low is not None and value < self.low or self.high is not None and value > self.high:
            raise ParameterError(
                f"parameter '{self.name}' must lie in [{self.low:g}, {self.high:g}] (got {value:g})"
            )
        if self.odd and value % 2 == 0:
            raise ParameterError(f"parameter '{self.name}' must be odd (got {value})")
        return value

    def describe(self):
        if self.kind == 'choice':
            return f"{self.name} one of {'|'.join(self.choices)} (default {self.default})"
        bound = f"[{self.low:g}, {self.high:g}]"
        extra = ', odd' if self.odd else ''
        return f"{self.name} {self.kind} {bound}{extra} (default {self.default:g})"


@dataclass(frozen=True)
class StageSpec:
    name: str
    role: str
    func: object
    params: tuple
    summary: str
    check: object = None

    def resolve(self, given):
        """Fill defaults and validate a parameter map."""
        known = {p.name: p for p in self.params}
        unknown = sorted(set(given) - set(known))
        if unknown:
            raise ParameterError(f"stage '{self.name}' has no parameter '{unknown[0]}'")
        resolved = {}
        for param in self.params:
            resolved[param.name] = param.coerce(given[param.name]) if param.name in given else param.default
        if self.check is not None:
            problem = self.check(resolved)
            if problem:
                raise ParameterError(f"stage '{self.name}': {problem}")
        return resolved

    def describe(self):
        if not self.params:
            return f"{self.name}() [{self.role}] {self.summary}"
        params = '; '.join(p.describe() for p in self.params)
        return f"{self.name}(...) [{self.role}] {self.summary}: {params}"


STAGES = {}


def register_stage(name, role, params=(), summary='', check=None):
    def decorator(func):
        if role not in ROLES:
            raise ValueError(f"unknown stage role {role!r}")
        STAGES[name] = StageSpec(name, role, func, tuple(params), summary, check)
        return func
    return decorator


def stage_catalog():
    """One line per registered stage, in role order; bound into DSL prompts."""
    lines = []
    for role in ROLES:
        for spec in STAGES.values():
            if spec.role == role:
                lines.append(f"    * {spec.describe()}")
    return '\n'.join(lines)


def run_stages(stages, h1, l1):
    """Execute (name, params) pairs in order on two channels."""
    if len(h1) != len(l1) or h1.t0 != l1.t0 or h1.dt != l1.dt:
        raise ParameterError("H1 and L1 must share one time axis")
    metric = None
    catalog = None
    for name, given in stages:
        spec = STAGES[name]
        params = spec.resolve(given)
        if spec.role in ('detrend', 'whiten'):
            h1, l1 = spec.func(h1, l1, **params)
        elif spec.role == 'metric':
            metric = spec.func(h1, l1, **params)
        else:
            catalog = spec.func(metric, **params)
        logger.debug("stage %s finished", name)
    return catalog


# ---------------------------------------------------------------------------
# Conditioning stages
# ---------------------------------------------------------------------------

@register_stage(
    'detrend_none', 'detrend', summary="leave the strain untouched",
)
def detrend_none(h1, l1):
    return h1, l1


@register_stage(
    'detrend_median', 'detrend',
    params=[Param('kernel', 'int', 101, 1, 4095, odd=True)],
    summary="subtract a running median (zero-padded edges)",
)
def detrend_median(h1, l1, *, kernel):
    return (
        h1.with_samples(h1.samples - dsp.median_filter(h1.samples, kernel)),
        l1.with_samples(l1.samples - dsp.median_filter(l1.samples, kernel)),
    )


@register_stage(
    'whiten_welch', 'whiten',
    params=[
        Param('nperseg', 'int', 4096, 16, 65536),
        Param('overlap', 'float', 0.5, 0.0, 0.95),
        Param('smoothing_kernel', 'int', 32, 1, 1024),
        Param('window', 'choice', 'hann', choices=('hann', 'hamming', 'blackman')),
    ],
    summary="divide by the square root of a moving-average smoothed Welch PSD",
)
def whiten_welch(h1, l1, *, nperseg, overlap, smoothing_kernel, window):
    noverlap = int(nperseg * overlap)

    def whiten(series):
        psd = dsp.welch_psd(series, nperseg, noverlap, window=window)
        return dsp.whiten_fft(series, psd, smoothing_kernel)

    return whiten(h1), whiten(l1)


def _check_adaptive(params):
    if params['min_window'] > params['max_window']:
        return "min_window must not exceed max_window"
    if params['alpha_min'] > params['alpha_max']:
        return "alpha_min must not exceed alpha_max"
    if params['savgol_polyorder'] >= params['savgol_window']:
        return "savgol_polyorder must be less than savgol_window"
    return None


@register_stage(
    'whiten_adaptive', 'whiten',
    params=[
        Param('window_fraction', 'float', 0.05, 0.001, 1.0),
        Param('min_window', 'float', 5.0, 0.05, 600.0),
        Param('max_window', 'float', 30.0, 0.05, 600.0),
        Param('tukey_alpha', 'float', 0.25, 0.0, 1.0),
        Param('overlap', 'float', 0.75, 0.0, 0.95),
        Param('alpha_base', 'float', 0.8, 0.0, 1.0),
        Param('alpha_slope', 'float', 0.05, 0.0, 1.0),
        Param('alpha_min', 'float', 0.75, 0.0, 1.0),
        Param('alpha_max', 'float', 0.85, 0.0, 1.0),
        Param('savgol_window', 'int', 11, 3, 101, odd=True),
        Param('savgol_polyorder', 'int', 2, 1, 6),
        Param('sigmoid_gain', 'float', 2.0, 0.0, 10.0),
        Param('gain_rate', 'float', 0.5, 0.0, 10.0),
        Param('gain_clip', 'float', 8.0, 0.1, 100.0),
        Param('gain_floor', 'float', 0.5, 0.0, 10.0),
    ],
    summary="stationarity-adaptive PSD smoothing with a gradient-scaled regularised gain",
    check=_check_adaptive,
)
def whiten_adaptive(h1, l1, **params):
    return _adaptive_whitening(h1, **params), _adaptive_whitening(l1, **params)


def _adaptive_whitening(series, *, window_fraction, min_window, max_window, tukey_alpha,
                        overlap, alpha_base, alpha_slope, alpha_min, alpha_max,
                        savgol_window, savgol_polyorder, sigmoid_gain, gain_rate, gain_clip,
                        gain_floor):
    fs = series.fs
    n = len(series)
    centered = series.samples - np.mean(series.samples)

    win_seconds = np.clip(n / fs * window_fraction, min_window, max_window)
    nperseg = max(10, min(int(win_seconds * fs), n))
    noverlap = int(nperseg * overlap)
    if noverlap >= nperseg:
        noverlap = nperseg - 1
    estimate = dsp.welch_psd(
        series, nperseg, noverlap, window=dsp.tukey_window(nperseg, tukey_alpha), detrend='constant'
    )
    freqs, psd = estimate.freqs, estimate.psd

    # stationarity of neighbouring bins drives the smoothing coefficient
    diff_arr = np.abs(np.diff(psd)) / (psd[:-1] + EPS)
    if diff_arr.size >= 3:
        smooth_diff = np.convolve(diff_arr, np.ones(3) / 3, mode='same')
    else:
        smooth_diff = diff_arr
    smoothed = np.copy(psd)
    if smooth_diff.size:
        idx = np.minimum(np.arange(psd.size - 1), smooth_diff.size - 1)
        alphas = np.clip(alpha_base - alpha_slope * smooth_diff[idx], alpha_min, alpha_max)
        for i in range(1, psd.size):
            a = alphas[i - 1]
            smoothed[i] = a * smoothed[i - 1] + (1 - a) * psd[i]

    baseline = np.median(smoothed)
    raw_gain = smoothed / (baseline + EPS) - 1.0

    win_len = savgol_window if smoothed.size >= savgol_window else (smoothed.size // 2) * 2 + 1
    polyorder = savgol_polyorder if win_len > savgol_polyorder else max(win_len - 1, 0)
    delta = np.mean(np.diff(freqs))
    grad = dsp.savgol_filter(smoothed, win_len, polyorder, deriv=1, delta=delta)

    scaling = 1.0 + sigmoid_gain / (1.0 + np.exp(-np.abs(grad) / (baseline + EPS)))
    with np.errstate(over='ignore'):
        gain = 1.0 - np.exp(-gain_rate * scaling * raw_gain)
    gain = np.clip(gain, -gain_clip, gain_clip)

    bins = np.fft.rfftfreq(n, d=series.dt)
    interp_gain = np.interp(bins, freqs, gain, left=gain[0], right=gain[-1])
    interp_psd = np.interp(bins, freqs, smoothed, left=smoothed[0], right=smoothed[-1])
    # the gain crosses zero at the median bin; an unfloored |gain| turns that bin into a line
    magnitude = np.maximum(np.abs(interp_gain), gain_floor)
    denom = np.maximum(np.sqrt(interp_psd) * (magnitude + EPS), EPS)
    with np.errstate(over='ignore', invalid='ignore'):
        spectrum = np.fft.rfft(centered) / denom
    spectrum[~np.isfinite(spectrum)] = 0.0
    return series.with_samples(np.fft.irfft(spectrum, n=n))


# ---------------------------------------------------------------------------
# Metric stages
# ---------------------------------------------------------------------------

@register_stage(
    'metric_meanpower', 'metric',
    params=[
        Param('nperseg', 'int', 256, 16, 8192),
        Param('overlap', 'float', 0.5, 0.0, 0.95),
    ],
    summary="frequency-averaged mean power of the two magnitude spectrograms",
)
def metric_meanpower(h1, l1, *, nperseg, overlap):
    noverlap = int(nperseg * overlap)
    _, t_h1, sxx_h1 = dsp.magnitude_spectrogram(h1, nperseg, noverlap)
    _, _, sxx_l1 = dsp.magnitude_spectrogram(l1, nperseg, noverlap)
    values = np.mean((sxx_h1 ** 2 + sxx_l1 ** 2) / 2, axis=0)
    times = h1.times
    mid = times[0] + (times[-1] - times[0]) / 2
    return MetricSeries(values, mid + (t_h1 - t_h1[-1] / 2))


def _check_coherent(params):
    if params['lambda_min'] > params['lambda_max']:
        return "lambda_min must not exceed lambda_max"
    return None


@register_stage(
    'metric_coherent', 'metric',
    params=[
        Param('nperseg', 'int', 256, 16, 8192),
        Param('overlap', 'float', 0.5, 0.0, 0.95),
        Param('lambda_min', 'float', 1e-4, 0.0, 1.0),
        Param('lambda_max', 'float', 1e-2, 0.0, 1.0),
        Param('curvature_linear', 'float', 0.1, 0.0, 10.0),
        Param('curvature_tanh', 'float', 5.0, 0.0, 100.0),
    ],
    summary="PSD-regularised inter-detector phase coherence with curvature boosts",
    check=_check_coherent,
)
def metric_coherent(h1, l1, *, nperseg, overlap, lambda_min, lambda_max,
                    curvature_linear, curvature_tanh):
    noverlap = int(nperseg * overlap)
    spec1 = dsp.complex_spectrogram(h1, nperseg, noverlap)
    spec2 = dsp.complex_spectrogram(l1, nperseg, noverlap)
    common = min(spec1.times.size, spec2.times.size)
    t_spec = spec1.times[:common]
    sxx1 = spec1.values[:, :common]
    sxx2 = spec2.values[:, :common]

    coherence = np.abs(np.cos(np.angle(sxx1) - np.angle(sxx2)))
    psd1 = np.median(np.abs(sxx1) ** 2, axis=1)
    psd2 = np.median(np.abs(sxx2) ** 2, axis=1)

    lambda_f = 0.5 * (np.median(psd1) / (psd1 + EPS) + np.median(psd2) / (psd2 + EPS))
    lambda_f = np.clip(lambda_f, lambda_min, lambda_max)
    weighted = coherence / (psd1[:, None] + psd2[:, None] + lambda_f[:, None] + EPS)

    d2 = np.gradient(np.gradient(coherence, axis=0), axis=0)
    curvature = np.mean(np.abs(d2), axis=0)
    boost = (1.0 + curvature_linear * curvature) * (1.0 + np.tanh(curvature_tanh * curvature))

    # (F, 1) ratio averaged over frequency: one scalar for the whole segment
    novel_weight = np.mean(
        (np.median(psd1) + np.median(psd2)) / (psd1[:, None] + psd2[:, None] + EPS), axis=0
    )
    values = np.sum(weighted * boost, axis=0) * novel_weight
    times = t_spec + h1.t0 + (nperseg / 2) / h1.fs
    return MetricSeries(values, times)


# ---------------------------------------------------------------------------
# Trigger stages
# ---------------------------------------------------------------------------

@register_stage(
    'trigger_basic', 'trigger',
    params=[
        Param('height_factor', 'float', 1.0, 0.0, 100.0),
        Param('distance', 'int', 2, 1, 1000),
        Param('prominence_factor', 'float', 0.3, 0.0, 100.0),
        Param('deltat', 'float', 10.0, 1e-6, 100.0),
    ],
    summary="peaks above a median-scaled height with fixed timing tolerance",
)
def trigger_basic(metric, *, height_factor, distance, prominence_factor, deltat):
    background = np.median(metric.values)
    peaks = dsp.find_peaks(
        metric.values,
        height=background * height_factor,
        distance=distance,
        prominence=background * prominence_factor,
    )
    return DetectionCatalog(
        metric.times[peaks], metric.values[peaks], np.full(peaks.size, deltat)
    )


@register_stage(
    'trigger_multires', 'trigger',
    params=[
        Param('threshold_k', 'float', 1.5, 0.0, 20.0),
        Param('prominence_k', 'float', 0.8, 0.0, 20.0),
        Param('distance', 'int', 2, 1, 1000),
        Param('curvature_veto', 'choice', 'on', choices=('on', 'off')),
        Param('veto_k', 'float', 0.1, 0.0, 10.0),
        Param('uncertainty_window', 'int', 5, 1, 100),
        Param('uncertainty_floor', 'float', 0.01, 1e-6, 100.0),
        Param('max_width', 'int', 8, 1, 64),
    ],
    summary="robust MAD threshold, curvature veto and Ricker-CWT peak validation",
)
def trigger_multires(metric, *, threshold_k, prominence_k, distance, curvature_veto, veto_k,
                     uncertainty_window, uncertainty_floor, max_width):
    values = metric.values
    bg_level = np.median(values)
    mad = np.median(np.abs(values - bg_level))
    robust_std = 1.4826 * mad
    peaks = dsp.find_peaks(
        values,
        height=bg_level + threshold_k * robust_std,
        distance=distance,
        prominence=prominence_k * robust_std,
    )
    if peaks.size == 0:
        return DetectionCatalog.empty()

    offsets = np.arange(-uncertainty_window, uncertainty_window + 1)
    sigma = uncertainty_window / 2.5
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= np.sum(kernel)
    local_mean = np.convolve(values, kernel, mode='same')
    local_sq = np.convolve(values ** 2, kernel, mode='same')
    uncertainties = np.maximum(np.sqrt(np.maximum(local_sq - local_mean ** 2, 0.0)), uncertainty_floor)

    n = values.size
    if n > 2:
        second_deriv = np.pad(np.diff(values, n=2), (1, 1), mode='edge')
    else:
        second_deriv = np.zeros_like(values)

    widths = np.arange(1, max_width + 1)
    kept = []
    for peak in peaks:
        if curvature_veto == 'on' and second_deriv[peak] > -veto_k * robust_std:
            continue
        segment = values[max(0, peak - uncertainty_window):min(n, peak + uncertainty_window + 1)]
        if segment.size < 3:
            continue
        try:
            coefficients = dsp.ricker_cwt(segment, widths)
        except (ValueError, FloatingPointError):
            continue
        if np.max(np.abs(coefficients)) >= mad * np.sqrt(2 * np.log(segment.size + EPS)):
            kept.append(peak)

    if not kept:
        return DetectionCatalog.empty()
    kept = np.asarray(kept, dtype=np.intp)
    return DetectionCatalog(metric.times[kept], values[kept], uncertainties[kept])


# ---------------------------------------------------------------------------
# Reference pipelines
# ---------------------------------------------------------------------------

SEED_STAGES = (
    ('whiten_welch', {}),
    ('metric_meanpower', {}),
    ('trigger_basic', {}),
)

ELITE_STAGES = (
    ('detrend_median', {}),
    ('whiten_adaptive', {}),
    ('metric_coherent', {}),
    ('trigger_multires', {}),
)


def seed_pipeline(h1, l1):
    """Welch whitening, mean spectrogram power, median-relative peaks."""
    return run_stages(SEED_STAGES, h1, l1)


def elite_pipeline(h1, l1):
    """Median detrend, adaptive whitening, coherent metric, multi-resolution triggers."""
    return run_stages(ELITE_STAGES, h1, l1)
