"""Diameter time series and light-reflex summary metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

MAX_INTERP_GAP = 3
BASELINE_WINDOW = 1.0  # s before the stimulus
POST_WINDOW_MIN = 2.0  # s after the stimulus
LATENCY_FRACTION = 0.1
RECOVERY_FRACTION = 0.63

SERIES_FIELDS = ("t_seconds", "diameter", "unit", "valid", "interpolated")


class CoverageError(ValueError):
    """Series does not span the windows a metric needs."""


@dataclass(frozen=True)
class Sample:
    t: float
    diameter: Optional[float]
    valid: bool
    interpolated: bool = False


@dataclass(frozen=True)
class DiameterSeries:
    samples: tuple[Sample, ...]
    unit: str = "px"
    px_per_mm: Optional[float] = None

    def __len__(self):
        return len(self.samples)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=np.float64)

    def diameters(self) -> np.ndarray:
        """Diameters with NaN for invalid samples."""
        return np.array([s.diameter if s.valid else np.nan for s in self.samples], dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(SERIES_FIELDS)
        for s in self.samples:
            wr.writerow([
                f"{s.t:.6f}",
                f"{s.diameter:.4f}" if s.valid else "",
                self.unit,
                int(s.valid),
                int(s.interpolated),
            ])
        return buf.getvalue()


def _diameter_of(m) -> Optional[float]:
    if m is None:
        return None
    if isinstance(m, (int, float, np.floating, np.integer)):
        return float(m)
    return float(m.diameter)


def build_series(measurements: Sequence[tuple[float, object]], px_per_mm: Optional[float] = None) -> DiameterSeries:
    """Turn per-frame results into a series.

    ``measurements`` holds ``(t, PupilMeasurement | float | None)`` pairs.  Runs
    of at most three missing frames between two valid ones are filled by
    linear interpolation and flagged; longer or unbounded runs stay invalid.
    With ``px_per_mm`` the diameters are reported in millimetres.
    """
    times = [float(t) for t, _ in measurements]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("measurement times must be strictly increasing")
    if px_per_mm is not None and px_per_mm <= 0:
        raise ValueError("px_per_mm must be positive")
    scale = 1.0 / px_per_mm if px_per_mm else 1.0
    vals = [_diameter_of(m) for _, m in measurements]
    vals = [None if v is None or not v > 0 else v * scale for v in vals]

    samples = [Sample(t, v, v is not None) for t, v in zip(times, vals)]
    n = len(samples)
    i = 0
    while i < n:
        if samples[i].valid:
            i += 1
            continue
        j = i
        while j < n and not samples[j].valid:
            j += 1
        # invalid run is [i, j)
        if i > 0 and j < n and j - i <= MAX_INTERP_GAP:
            left, right = samples[i - 1], samples[j]
            for k in range(i, j):
                w = (times[k] - left.t) / (right.t - left.t)
                d = left.diameter + w * (right.diameter - left.diameter)
                samples[k] = Sample(times[k], d, True, True)
        i = j
    return DiameterSeries(tuple(samples), "mm" if px_per_mm else "px", px_per_mm)


@dataclass(frozen=True)
class ReflexMetrics:
    baseline: float
    min_diameter: float
    amplitude: float
    latency: Optional[float]
    max_constriction_velocity: float
    recovery_63pct: Optional[float]

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in (
            "baseline", "min_diameter", "amplitude", "latency",
            "max_constriction_velocity", "recovery_63pct",
        )}


def reflex_metrics(series: DiameterSeries, stimulus_time: float) -> ReflexMetrics:
    """Summarise the response to a light stimulus at ``stimulus_time``.

    baseline: median of valid samples in the second before the stimulus.
    latency: first downward crossing of baseline - 10% of the amplitude,
    linearly interpolated between samples.  recovery_63pct: time from the
    minimum until 63% of the amplitude is regained (None if it never is).
    """
    t = series.times()
    d = series.diameters()
    ok = ~np.isnan(d)
    eps = 1e-9
    s = float(stimulus_time)
    if len(t) == 0 or t[0] > s - BASELINE_WINDOW + eps:
        raise CoverageError(f"need {BASELINE_WINDOW:g} s of data before the stimulus at {s:g} s")
    if t[-1] < s + POST_WINDOW_MIN - eps:
        raise CoverageError(f"need {POST_WINDOW_MIN:g} s of data after the stimulus at {s:g} s")
    pre = ok & (t >= s - BASELINE_WINDOW - eps) & (t < s)
    post = ok & (t >= s)
    if not pre.any() or not post.any():
        raise CoverageError("no valid samples in the baseline or response window")

    tv, dv = t[ok], d[ok]
    baseline = float(np.median(d[pre]))
    post_idx = np.flatnonzero(tv >= s)
    k_min = post_idx[np.argmin(dv[post_idx])]
    min_d = float(dv[k_min])
    amplitude = max(0.0, baseline - min_d)

    velocity = np.gradient(dv, tv) if len(tv) > 1 else np.zeros(1)
    vmax = float(max(0.0, (-velocity[post_idx]).max()))

    latency = None
    recovery = None
    if amplitude > 0:
        level = baseline - LATENCY_FRACTION * amplitude
        for k in post_idx:
            if dv[k] < level:
                if k > 0 and dv[k - 1] >= level:
                    t_cross = tv[k - 1] + (dv[k - 1] - level) / (dv[k - 1] - dv[k]) * (tv[k] - tv[k - 1])
                else:
                    t_cross = tv[k]
                latency = max(0.0, float(t_cross) - s)
                break
        target = min_d + RECOVERY_FRACTION * amplitude
        for k in range(k_min + 1, len(tv)):
            if dv[k] >= target:
                t_rec = tv[k - 1] + (target - dv[k - 1]) / (dv[k] - dv[k - 1]) * (tv[k] - tv[k - 1])
                recovery = float(t_rec - tv[k_min])
                break
    return ReflexMetrics(baseline, min_d, amplitude, latency, vmax, recovery)


def rmse(a: Iterable[float], b: Iterable[float]) -> float:
    x = np.asarray(list(a), dtype=np.float64)
    y = np.asarray(list(b), dtype=np.float64)
    return float(np.sqrt(np.mean((x - y) ** 2)))
