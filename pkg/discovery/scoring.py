"""
Fitness of a detection pipeline: trigger/injection matching, false-alarm
rate from background data, sensitive distance from foreground data, and the
area under sensitive distance versus log10 false-alarm rate.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import ParameterError

SECONDS_PER_MONTH = 30 * 24 * 3600.0
MAX_TIMING_TOLERANCE = 0.2
FAR_RANGE = (4.0, 1000.0)


@dataclass
class EvalResult:
    thresholds: np.ndarray = field(default_factory=lambda: np.array([]))
    far: np.ndarray = field(default_factory=lambda: np.array([]))
    d_sens: np.ndarray = field(default_factory=lambda: np.array([]))
    auc: float = 0.0
    wall_time: float = 0.0
    error_trials: int = 0
    degenerate: bool = False

    def to_report(self):
        return {
            'auc': float(self.auc),
            'far': [float(v) for v in self.far],
            'd_sens': [float(v) for v in self.d_sens],
            'thresholds': [float(v) for v in self.thresholds],
            'wall_time': float(self.wall_time),
            'error_trials': int(self.error_trials),
            'degenerate': bool(self.degenerate),
        }

    @classmethod
    def from_report(cls, report):
        return cls(
            thresholds=np.asarray(report['thresholds'], dtype=np.float64),
            far=np.asarray(report['far'], dtype=np.float64),
            d_sens=np.asarray(report['d_sens'], dtype=np.float64),
            auc=float(report['auc']),
            wall_time=float(report.get('wall_time', 0.0)),
            error_trials=int(report.get('error_trials', 0)),
            degenerate=bool(report.get('degenerate', False)),
        )


def _truth_times(truth):
    return np.array([getattr(r, 't_coal', r) for r in truth], dtype=np.float64)


def assign_triggers(catalog, truth):
    """Index of the injection each trigger matches, or -1.

    A trigger matches the injection nearest in time (ties go to the earlier
    injection) when it lies within min(var, 0.2 s) of its coalescence time.
    """
    times = _truth_times(truth)
    assigned = np.full(len(catalog), -1, dtype=np.intp)
    if times.size == 0 or len(catalog) == 0:
        return assigned

    order = np.argsort(times, kind='stable')
    ordered = times[order]
    pos = np.searchsorted(ordered, catalog.times)
    left = np.clip(pos - 1, 0, ordered.size - 1)
    right = np.clip(pos, 0, ordered.size - 1)
    d_left = np.abs(catalog.times - ordered[left])
    d_right = np.abs(ordered[right] - catalog.times)
    nearest = np.where(d_right < d_left, right, left)
    tolerance = np.minimum(catalog.vars, MAX_TIMING_TOLERANCE)
    hit = np.abs(catalog.times - ordered[nearest]) <= tolerance
    assigned[hit] = order[nearest[hit]]
    return assigned


def match_events(catalog, truth):
    """Highest matched trigger stat per injection (NaN when nothing matched)."""
    catalog = catalog.sorted()
    assigned = assign_triggers(catalog, truth)
    best = np.full(len(truth), -np.inf)
    hit = assigned >= 0
    np.maximum.at(best, assigned[hit], catalog.stats[hit])
    best[np.isneginf(best)] = np.nan
    return best


def far_curve(background_catalog, background_duration, thresholds):
    """Background triggers with stat >= threshold, in events per 30-day month."""
    if not background_duration > 0:
        raise ParameterError(f"background duration must be positive (got {background_duration})")
    stats = np.sort(background_catalog.stats)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    counts = stats.size - np.searchsorted(stats, thresholds, side='left')
    return counts * (SECONDS_PER_MONTH / background_duration)


def sensitivity_curve(matched_stats, d_max, thresholds):
    """Sensitive distance d_max * p^(1/3), p the fraction of injections found at each threshold."""
    matched_stats = np.asarray(matched_stats, dtype=np.float64)
    if matched_stats.size == 0:
        raise ParameterError("sensitivity needs at least one injection")
    found = np.sort(np.where(np.isnan(matched_stats), -np.inf, matched_stats))
    thresholds = np.asarray(thresholds, dtype=np.float64)
    detected = found.size - np.searchsorted(found, thresholds, side='left')
    return d_max * np.cbrt(detected / found.size)


def auc_fitness(background_catalog, foreground_catalog, truth, background_duration, d_max,
                far_range=FAR_RANGE):
    """Sweep thresholds over the background stats and integrate d_sens over log10 FAR."""
    thresholds = np.unique(background_catalog.stats)[::-1]
    far = far_curve(background_catalog, background_duration, thresholds)
    matched = match_events(foreground_catalog, truth)
    d_sens = sensitivity_curve(matched, d_max, thresholds)
    result = EvalResult(thresholds=thresholds, far=far, d_sens=d_sens)
    if thresholds.size == 0:
        result.degenerate = True
        return result

    log_far = np.log10(far)
    lo = max(np.log10(far_range[0]), log_far[0])
    hi = min(np.log10(far_range[1]), log_far[-1])
    if not hi > lo:
        result.degenerate = True
        return result
    inner = log_far[(log_far > lo) & (log_far < hi)]
    xs = np.concatenate([[lo], inner, [hi]])
    result.auc = float(trapezoid(np.interp(xs, log_far, d_sens), xs))
    return result
