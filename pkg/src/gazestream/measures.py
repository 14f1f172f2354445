"""Incremental gaze measures: ambient/focal coefficient K, positional
statistics, and main-sequence fits.

K is computed per fixation from the subject's own running statistics:
the z-score of the fixation duration minus the z-score of the following
saccade amplitude. Positive K marks focal attention (long fixations, short
saccades), negative K ambient attention. Statistics are updated with the
current pair before scoring it, so the very first pairs score against a
sample that includes them and |K| stays bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .core import Fixation, Saccade


class RunningStats:
    """Welford accumulator for mean and standard deviation.

    ``mode`` selects the divisor: "sample" (n-1, default) or "population"
    (n). The batch oracle in the tests must use the same convention.
    """

    def __init__(self, mode: str = "sample"):
        if mode not in ("sample", "population"):
            raise ValueError(f"unknown std mode {mode!r}")
        self.mode = mode
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.min: Optional[float] = None
        self.max: Optional[float] = None

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)
        self.min = x if self.min is None else min(self.min, x)
        self.max = x if self.max is None else max(self.max, x)

    @property
    def variance(self) -> float:
        if self.mode == "sample":
            return self.m2 / (self.n - 1) if self.n >= 2 else 0.0
        return self.m2 / self.n if self.n >= 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


@dataclass(frozen=True)
class KSample:
    """Coefficient K for one fixation, known once its saccade completes."""

    fixation_id: int
    t: float  # ms, end of the following saccade
    k: float
    d_i: float  # fixation duration, ms
    a_next: float  # following saccade amplitude, degrees
    pupil_at_fixation: Optional[float] = None


def coefficient_k(
    fixation: Fixation,
    next_saccade: Saccade,
    stats_d: RunningStats,
    stats_a: RunningStats,
) -> Optional[KSample]:
    """Score one fixation/saccade pair against already-updated stats.

    Returns None while either statistic has fewer than two observations or
    zero spread; a degenerate stream (constant durations and amplitudes)
    therefore never yields a K value, and never a NaN.
    """
    if stats_d.n < 2 or stats_a.n < 2:
        return None
    std_d, std_a = stats_d.std, stats_a.std
    if std_d == 0.0 or std_a == 0.0:
        return None
    k = (fixation.duration - stats_d.mean) / std_d - (next_saccade.amplitude - stats_a.mean) / std_a
    return KSample(
        fixation_id=fixation.id,
        t=next_saccade.t_end,
        k=k,
        d_i=fixation.duration,
        a_next=next_saccade.amplitude,
        pupil_at_fixation=fixation.mean_pupil,
    )


class KTracker:
    """Per-subject K stream: update running stats, then score (in that order)."""

    def __init__(self, std_mode: str = "sample"):
        self.stats_d = RunningStats(std_mode)
        self.stats_a = RunningStats(std_mode)

    def observe(self, fixation: Fixation, next_saccade: Saccade) -> Optional[KSample]:
        self.stats_d.push(fixation.duration)
        self.stats_a.push(next_saccade.amplitude)
        return coefficient_k(fixation, next_saccade, self.stats_d, self.stats_a)


@dataclass(frozen=True)
class FieldStats:
    """Snapshot of one accumulated quantity; all None while empty."""

    mean: Optional[float] = None
    std: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None


@dataclass(frozen=True)
class EyeStats:
    current: Optional[float] = None
    mean: Optional[float] = None


@dataclass(frozen=True)
class PositionalStats:
    """Immutable snapshot of the classic positional gaze measures."""

    fixation_count: int = 0
    saccade_count: int = 0
    fixation_duration: FieldStats = field(default_factory=FieldStats)
    saccade_amplitude: FieldStats = field(default_factory=FieldStats)
    pupil_left: EyeStats = field(default_factory=EyeStats)
    pupil_right: EyeStats = field(default_factory=EyeStats)


def _snapshot(stats: RunningStats) -> FieldStats:
    if stats.n == 0:
        return FieldStats()
    return FieldStats(mean=stats.mean, std=stats.std, min=stats.min, max=stats.max)


class PositionalTracker:
    """Accumulates positional statistics from events and raw samples."""

    def __init__(self, std_mode: str = "sample"):
        self._durations = RunningStats(std_mode)
        self._amplitudes = RunningStats(std_mode)
        self._pupil = {"left": RunningStats(std_mode), "right": RunningStats(std_mode)}
        self._pupil_current: dict[str, Optional[float]] = {"left": None, "right": None}
        self._fixations = 0
        self._saccades = 0

    def observe_sample(self, sample) -> None:
        """Track per-eye pupil current/mean; invalid samples are skipped."""
        if not sample.valid:
            return
        for eye, value in (("left", sample.pupil_left), ("right", sample.pupil_right)):
            if value is not None and math.isfinite(value) and value > 0:
                self._pupil_current[eye] = value
                self._pupil[eye].push(value)

    def observe(self, event) -> PositionalStats:
        """Fold one completed Fixation or Saccade and return a snapshot."""
        if isinstance(event, Fixation):
            self._fixations += 1
            self._durations.push(event.duration)
        elif isinstance(event, Saccade):
            self._saccades += 1
            self._amplitudes.push(event.amplitude)
        else:
            raise TypeError(f"expected Fixation or Saccade, got {type(event).__name__}")
        return self.snapshot()

    def snapshot(self) -> PositionalStats:
        def eye(name: str) -> EyeStats:
            stats = self._pupil[name]
            return EyeStats(
                current=self._pupil_current[name],
                mean=stats.mean if stats.n else None,
            )

        return PositionalStats(
            fixation_count=self._fixations,
            saccade_count=self._saccades,
            fixation_duration=_snapshot(self._durations),
            saccade_amplitude=_snapshot(self._amplitudes),
            pupil_left=eye("left"),
            pupil_right=eye("right"),
        )


@dataclass(frozen=True)
class MainSequenceFit:
    """Least-squares main-sequence fits over the saccades seen so far.

    velocity: V = c * A**alpha, fitted in log-log space.
    duration: D = d0 + m * A, ordinary least squares.
    Outliers are saccades whose log-space velocity residual exceeds three
    residual standard deviations (ignoring sub-precision residuals).
    """

    n_saccades: int
    velocity_c: float
    velocity_alpha: float
    velocity_residual_std: float
    duration_d0: float
    duration_m: float
    duration_residual_std: float
    outlier_ids: tuple[int, ...]


class _LsqAccumulator:
    """Incremental sums for simple least squares y = a + b*x."""

    def __init__(self):
        self.n = 0
        self.sx = self.sy = self.sxx = self.syy = self.sxy = 0.0

    def push(self, x: float, y: float) -> None:
        self.n += 1
        self.sx += x
        self.sy += y
        self.sxx += x * x
        self.syy += y * y
        self.sxy += x * y

    def solve(self) -> Optional[tuple[float, float, float]]:
        """(intercept, slope, residual_std) or None when degenerate."""
        n = self.n
        sxx_c = self.sxx - self.sx * self.sx / n
        if sxx_c <= 0.0:
            return None
        sxy_c = self.sxy - self.sx * self.sy / n
        syy_c = self.syy - self.sy * self.sy / n
        slope = sxy_c / sxx_c
        intercept = (self.sy - slope * self.sx) / n
        rss = max(syy_c - slope * sxy_c, 0.0)
        residual_std = math.sqrt(rss / (n - 2)) if n > 2 else 0.0
        return intercept, slope, residual_std


# Residuals below this are floating-point noise, never outliers.
_RESIDUAL_FLOOR = 1e-9

MIN_FIT_SACCADES = 8


class MainSequenceTracker:
    """Refits both main-sequence relationships on every new saccade."""

    def __init__(self):
        self._vel = _LsqAccumulator()
        self._dur = _LsqAccumulator()
        # (id, ln A, ln V) retained for outlier flagging.
        self._points: list[tuple[int, float, float]] = []

    def push(self, saccade: Saccade) -> None:
        if saccade.amplitude <= 0 or saccade.peak_velocity <= 0:
            return  # log-log fit undefined; excluded from both fits
        ln_a = math.log(saccade.amplitude)
        ln_v = math.log(saccade.peak_velocity)
        self._vel.push(ln_a, ln_v)
        self._dur.push(saccade.amplitude, saccade.duration)
        self._points.append((saccade.id, ln_a, ln_v))

    def fit(self) -> Optional[MainSequenceFit]:
        """Current fits, or None with fewer than MIN_FIT_SACCADES usable saccades."""
        if self._vel.n < MIN_FIT_SACCADES:
            return None
        vel = self._vel.solve()
        dur = self._dur.solve()
        if vel is None or dur is None:
            return None
        ln_c, alpha, vel_resid = vel
        d0, m, dur_resid = dur
        outliers = []
        if vel_resid > _RESIDUAL_FLOOR:
            cutoff = 3.0 * vel_resid
            for sid, ln_a, ln_v in self._points:
                if abs(ln_v - (ln_c + alpha * ln_a)) > cutoff:
                    outliers.append(sid)
        return MainSequenceFit(
            n_saccades=self._vel.n,
            velocity_c=math.exp(ln_c),
            velocity_alpha=alpha,
            velocity_residual_std=vel_resid,
            duration_d0=d0,
            duration_m=m,
            duration_residual_std=dur_resid,
            outlier_ids=tuple(outliers),
        )
