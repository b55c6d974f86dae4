"""
Signal-processing primitives shared by the reference pipelines and the
pipeline stage registry.

Everything runs in float64. Edge handling follows scipy: zero padding for the
median filter, polynomial fit ('interp') for Savitzky-Golay, zero-padded
'same' convolution for the Ricker transform.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .exceptions import ParameterError

# Floor applied to every PSD before it is used as a divisor.
PSD_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class SampledSeries:
    samples: np.ndarray
    t0: float
    dt: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 2:
            raise ParameterError("a sampled series needs at least 2 samples")
        if not self.dt > 0:
            raise ParameterError(f"sample spacing must be positive (got {self.dt})")
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 't0', float(self.t0))
        object.__setattr__(self, 'dt', float(self.dt))

    def __len__(self):
        return self.samples.size

    @property
    def fs(self):
        return 1.0 / self.dt

    @property
    def duration(self):
        return self.samples.size * self.dt

    @property
    def times(self):
        return self.t0 + np.arange(self.samples.size) * self.dt

    def with_samples(self, samples):
        """Same time axis, new values."""
        return SampledSeries(samples, self.t0, self.dt)


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray
    psd: np.ndarray
    nperseg: int
    noverlap: int


@dataclass(frozen=True)
class ComplexSpectrogram:
    freqs: np.ndarray
    times: np.ndarray
    values: np.ndarray

    @property
    def magnitude(self):
        return np.abs(self.values)


def _resolve_window(window, nperseg):
    if isinstance(window, str):
        return window
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (nperseg,):
        raise ParameterError(f"window length {window.size} does not match nperseg {nperseg}")
    return window


def welch_psd(x, nperseg, noverlap=None, window='hann', detrend='constant'):
    """One-sided Welch PSD of the mean-removed series, floored at PSD_FLOOR."""
    nperseg = int(nperseg)
    if noverlap is None:
        noverlap = nperseg // 2
    noverlap = int(noverlap)
    if nperseg < 1 or nperseg > len(x):
        raise ParameterError(f"nperseg={nperseg} exceeds series length {len(x)}")
    if not 0 <= noverlap < nperseg:
        raise ParameterError(f"noverlap={noverlap} must lie in [0, nperseg)")

    centered = x.samples - np.mean(x.samples)
    freqs, psd = signal.welch(
        centered,
        fs=x.fs,
        window=_resolve_window(window, nperseg),
        nperseg=nperseg,
        noverlap=noverlap,
        detrend=detrend,
    )
    psd = np.maximum(psd, PSD_FLOOR)
    return PsdEstimate(freqs=freqs, psd=psd, nperseg=nperseg, noverlap=noverlap)


def whiten_fft(x, psd, smoothing_kernel=32):
    """Divide the spectrum of the mean-removed series by sqrt of the smoothed PSD."""
    smoothing_kernel = int(smoothing_kernel)
    if smoothing_kernel < 1:
        raise ParameterError("smoothing kernel must be at least 1")
    nyquist = 0.5 * x.fs
    if psd.freqs[0] > 0 or psd.freqs[-1] < nyquist * (1 - 1e-9):
        raise ParameterError("PSD does not cover [0, Nyquist] of the series")

    n = len(x)
    centered = x.samples - np.mean(x.samples)
    smoothed = np.convolve(psd.psd, np.ones(smoothing_kernel) / smoothing_kernel, mode='same')
    smoothed = np.maximum(smoothed, PSD_FLOOR)
    bins = np.fft.rfftfreq(n, d=x.dt)
    white = np.fft.rfft(centered) / np.sqrt(np.interp(bins, psd.freqs, smoothed))
    return x.with_samples(np.fft.irfft(white, n=n))


def complex_spectrogram(x, nperseg=256, noverlap=128, window=('tukey', 0.25)):
    """Complex STFT without detrending; times are window centres relative to t0."""
    nperseg = int(nperseg)
    noverlap = int(noverlap)
    if nperseg < 2 or nperseg > len(x):
        raise ParameterError(f"nperseg={nperseg} exceeds series length {len(x)}")
    if not 0 <= noverlap < nperseg:
        raise ParameterError(f"noverlap={noverlap} must lie in [0, nperseg)")

    freqs, times, values = signal.spectrogram(
        x.samples,
        fs=x.fs,
        window=window,
        nperseg=nperseg,
        noverlap=noverlap,
        detrend=False,
        mode='complex',
    )
    return ComplexSpectrogram(freqs=freqs, times=times, values=values)


def magnitude_spectrogram(x, nperseg=256, noverlap=128, window=('tukey', 0.25)):
    """Magnitude-mode spectrogram, as (freqs, times, |STFT|)."""
    spec = complex_spectrogram(x, nperseg, noverlap, window)
    return spec.freqs, spec.times, spec.magnitude


def median_filter(values, kernel):
    kernel = int(kernel)
    if kernel < 1 or kernel % 2 == 0:
        raise ParameterError(f"median kernel must be odd and >= 1 (got {kernel})")
    values = np.asarray(values, dtype=np.float64)
    # same output as scipy.signal.medfilt (zero padded), without its O(n*k) sort
    return ndimage.median_filter(values, size=kernel, mode='constant', cval=0.0)


def savgol_filter(values, window, polyorder, deriv=0, delta=1.0):
    window = int(window)
    polyorder = int(polyorder)
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"Savitzky-Golay window must be odd (got {window})")
    if polyorder >= window:
        raise ParameterError(f"polyorder {polyorder} must be less than window {window}")
    if deriv > polyorder:
        raise ParameterError(f"deriv {deriv} exceeds polyorder {polyorder}")
    values = np.asarray(values, dtype=np.float64)
    if values.size < window:
        raise ParameterError(f"series of length {values.size} is shorter than window {window}")
    return signal.savgol_filter(values, window, polyorder, deriv=deriv, delta=delta, mode='interp')


def _select_by_distance(peaks, values, distance):
    """Keep the higher of any two peaks closer than `distance`; ties keep the earlier."""
    if peaks.size < 2 or distance <= 1:
        return peaks
    # highest first, earliest first among equals
    order = np.lexsort((peaks, -values[peaks]))
    keep = np.ones(peaks.size, dtype=bool)
    removed = np.zeros(peaks.size, dtype=bool)
    for j in order:
        if removed[j]:
            continue
        k = j - 1
        while k >= 0 and peaks[j] - peaks[k] < distance:
            removed[k] = True
            k -= 1
        k = j + 1
        while k < peaks.size and peaks[k] - peaks[j] < distance:
            removed[k] = True
            k += 1
    keep &= ~removed
    return peaks[keep]


def find_peaks(values, height=None, distance=1, prominence=None):
    """Local maxima filtered by height, then distance, then prominence.

    Plateaus are reported once, at their middle sample (rounded down).
    """
    distance = int(np.ceil(distance))
    if distance < 1:
        raise ParameterError("peak distance must be at least 1")
    values = np.asarray(values, dtype=np.float64)
    if values.size < 3:
        return np.array([], dtype=np.intp)

    peaks, _ = signal.find_peaks(values, height=height)
    peaks = _select_by_distance(peaks, values, distance)
    if prominence is not None and peaks.size:
        prominences = signal.peak_prominences(values, peaks)[0]
        peaks = peaks[prominences >= prominence]
    return peaks.astype(np.intp)


def ricker(points, a):
    """Ricker (Mexican hat) wavelet sampled at integer offsets around the centre."""
    amplitude = 2.0 / (np.sqrt(3.0 * a) * np.pi ** 0.25)
    offsets = np.arange(0, points) - (points - 1.0) / 2.0
    ratio = offsets ** 2 / a ** 2
    return amplitude * (1.0 - ratio) * np.exp(-offsets ** 2 / (2.0 * a ** 2))


def ricker_cwt(values, widths):
    """Continuous wavelet transform with the Ricker wavelet, one row per width."""
    values = np.asarray(values, dtype=np.float64)
    widths = np.asarray(widths, dtype=np.float64)
    if np.any(widths <= 0):
        raise ParameterError("wavelet widths must be positive")
    out = np.empty((widths.size, values.size), dtype=np.float64)
    for row, width in enumerate(widths):
        points = int(min(10 * width, values.size))
        wavelet = ricker(points, width)[::-1]
        out[row] = np.convolve(values, wavelet, mode='same')
    return out


def tukey_window(n, alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"Tukey alpha must lie in [0, 1] (got {alpha})")
    return signal.windows.tukey(int(n), alpha)
