"""Pupil-signal processing: blink repair, Savitzky-Golay filtering, the
RIPA cognitive-load index, and percentage change of pupil diameter.

RIPA here is a bounded [0, 1) index of pupillary activity: the absolute
smoothed derivative of the pupil signal, normalized against the subject's
own running-median activity level and squashed through x/(1+x). A value of
0.5 therefore means "activity at this subject's typical level"; the 0.5-1.0
band marks above-typical activity (higher load), 0.0-0.5 below.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import GazeSample, combine_eyes
from .errors import ConfigError


def sg_coefficients(window: int, order: int, deriv: int = 0) -> np.ndarray:
    """Savitzky-Golay convolution weights for the window center.

    Weights are returned in sample order (oldest first) for use as a dot
    product against the window. Smoothing weights (deriv=0) sum to 1;
    differentiating weights (deriv=1) are per unit sample step and sum to 0.
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"sg window must be odd and positive, got {window}")
    if order < 0 or order >= window:
        raise ConfigError(f"sg order must satisfy 0 <= order < window, got {order}")
    if deriv < 0 or deriv > order:
        raise ConfigError(f"sg deriv must satisfy 0 <= deriv <= order, got {deriv}")
    half = window // 2
    pos = np.arange(-half, half + 1, dtype=float)
    vander = np.vander(pos, order + 1, increasing=True)  # vander[i, k] = pos[i]**k
    # Row `deriv` of the pseudo-inverse evaluates the fitted polynomial's
    # deriv-th coefficient; scale by deriv! to get the derivative at center.
    weights = np.linalg.pinv(vander)[deriv] * math.factorial(deriv)
    # Pin the exact sum constraint (1 for smoothing, 0 for derivatives) so a
    # constant signal maps to exactly itself / exactly zero.
    if deriv == 0:
        weights /= weights.sum()
    else:
        weights -= weights.sum() / window
    return weights


@dataclass(frozen=True)
class SgFilter:
    """A fixed Savitzky-Golay filter (weights precomputed)."""

    window: int
    order: int
    deriv: int
    weights: np.ndarray

    @classmethod
    def design(cls, window: int, order: int, deriv: int = 0) -> "SgFilter":
        return cls(window, order, deriv, sg_coefficients(window, order, deriv))

    def apply(self, values) -> float:
        """Evaluate the filter on one full window (oldest sample first)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.window,):
            raise ValueError(f"expected window of {self.window} values")
        if self.deriv >= 1:
            # Derivative weights annihilate constants; shifting by a window
            # value makes that exact in floating point too.
            values = values - values[0]
        return float(np.dot(self.weights, values))


class P2Quantile:
    """P-square streaming quantile estimator (Jain & Chlamtac, 1985).

    Tracks one quantile in O(1) memory with five markers. Exact for the
    first five observations, an estimate afterwards.
    """

    def __init__(self, quantile: float = 0.5):
        if not 0.0 < quantile < 1.0:
            raise ValueError("quantile must be in (0, 1)")
        self.quantile = quantile
        self._initial: list[float] = []
        self._q: list[float] = []  # marker heights
        self._n: list[float] = []  # marker positions
        self._np: list[float] = []  # desired positions
        p = quantile
        self._dn = [0.0, p / 2.0, p, (1.0 + p) / 2.0, 1.0]
        self.count = 0

    def add(self, x: float) -> None:
        self.count += 1
        if len(self._initial) < 5:
            self._initial.append(x)
            self._initial.sort()
            if len(self._initial) == 5:
                p = self.quantile
                self._q = list(self._initial)
                self._n = [1.0, 2.0, 3.0, 4.0, 5.0]
                self._np = [1.0, 1.0 + 2.0 * p, 1.0 + 4.0 * p, 3.0 + 2.0 * p, 5.0]
            return

        q, n = self._q, self._n
        if x < q[0]:
            q[0] = x
            k = 0
        elif x >= q[4]:
            q[4] = x
            k = 3
        else:
            k = 0
            while x >= q[k + 1]:
                k += 1
        for i in range(k + 1, 5):
            n[i] += 1.0
        for i in range(5):
            self._np[i] += self._dn[i]

        for i in (1, 2, 3):
            d = self._np[i] - n[i]
            if (d >= 1.0 and n[i + 1] - n[i] > 1.0) or (d <= -1.0 and n[i - 1] - n[i] < -1.0):
                d = 1.0 if d > 0 else -1.0
                candidate = self._parabolic(i, d)
                if not (q[i - 1] < candidate < q[i + 1]):
                    candidate = self._linear(i, d)
                q[i] = candidate
                n[i] += d

    def _parabolic(self, i: int, d: float) -> float:
        q, n = self._q, self._n
        return q[i] + d / (n[i + 1] - n[i - 1]) * (
            (n[i] - n[i - 1] + d) * (q[i + 1] - q[i]) / (n[i + 1] - n[i])
            + (n[i + 1] - n[i] - d) * (q[i] - q[i - 1]) / (n[i] - n[i - 1])
        )

    def _linear(self, i: int, d: float) -> float:
        q, n = self._q, self._n
        j = i + int(d)
        return q[i] + d * (q[j] - q[i]) / (n[j] - n[i])

    def value(self) -> Optional[float]:
        """Current estimate, or None before any observation."""
        if self.count == 0:
            return None
        if len(self._initial) < 5:
            s = self._initial
            mid = (len(s) - 1) * self.quantile
            lo = int(math.floor(mid))
            hi = int(math.ceil(mid))
            return s[lo] + (s[hi] - s[lo]) * (mid - lo)
        return self._q[2]


@dataclass(frozen=True)
class PupilValue:
    """One repaired pupil reading (interpolated samples included)."""

    t: float
    value: float
    interpolated: bool = False


@dataclass(frozen=True)
class GapBreak:
    """Marks an unbridgeable hole in the pupil signal; filters must reset."""

    t: float


PupilEvent = Union[PupilValue, GapBreak]


class PupilPreprocessor:
    """Repairs the pupil stream before filtering.

    Per sample the usable-eye mean is taken (monocular fallback when only
    one eye is valid). Missing/zero runs spanning at most ``max_gap_ms``
    between good anchors are linearly interpolated once the run closes;
    longer runs produce a GapBreak instead and the interior is dropped.
    Outputs are therefore delayed until a run resolves.
    """

    def __init__(self, max_gap_ms: float = 200.0):
        if max_gap_ms <= 0:
            raise ConfigError("max_gap_ms must be positive")
        self.max_gap_ms = max_gap_ms
        self._last_good: Optional[tuple[float, float]] = None
        self._pending: list[float] = []  # timestamps of the open missing run
        self._broken = False  # current run already reported as a break

    def step(self, sample: GazeSample) -> list[PupilEvent]:
        value = combine_eyes(sample)
        if value is None:
            return self._on_missing(sample.t)
        return self._on_value(sample.t, value)

    def _on_missing(self, t: float) -> list[PupilEvent]:
        if self._broken or self._last_good is None:
            # Nothing to interpolate from; leading invalids are silently
            # dropped and an already-broken run stays broken.
            return []
        self._pending.append(t)
        if t - self._last_good[0] > self.max_gap_ms:
            self._pending.clear()
            self._last_good = None
            self._broken = True
            return [GapBreak(t=t)]
        return []

    def _on_value(self, t: float, value: float) -> list[PupilEvent]:
        events: list[PupilEvent] = []
        self._broken = False
        if self._pending:
            t0, v0 = self._last_good
            if t - t0 <= self.max_gap_ms:
                for tp in self._pending:
                    frac = (tp - t0) / (t - t0)
                    events.append(PupilValue(t=tp, value=v0 + (value - v0) * frac, interpolated=True))
            else:
                events.append(GapBreak(t=self._pending[0]))
            self._pending.clear()
        events.append(PupilValue(t=t, value=value))
        self._last_good = (t, value)
        return events


class RipaTracker:
    """Streaming RIPA over repaired pupil values.

    Keeps the last ``window`` values; once full, each new value yields
    m = |SG derivative of the window| / dt and the index (m/s)/(1 + m/s)
    where s is the running median of past m values (floored at epsilon).
    The running scale is updated after scoring, so a value is always judged
    against the history that preceded it. dt is the running median
    inter-sample interval - no fixed sampling rate is assumed.
    """

    def __init__(self, window: int = 11, order: int = 2, epsilon: float = 1e-6):
        if epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        self.filter = SgFilter.design(window, order, deriv=1)
        self.epsilon = epsilon
        self.scale = P2Quantile(0.5)
        self._dt = P2Quantile(0.5)
        self._buf: deque[float] = deque(maxlen=window)
        self._prev_t: Optional[float] = None

    def observe(self, t: float, value: float) -> Optional[float]:
        """Feed one repaired value; returns RIPA or None during warm-up."""
        if self._prev_t is not None:
            self._dt.add((t - self._prev_t) / 1000.0)
        self._prev_t = t
        self._buf.append(value)
        if len(self._buf) < self.filter.window:
            return None
        dt = max(self._dt.value() or 0.0, 1e-9)
        m = abs(self.filter.apply(list(self._buf))) / dt
        scale = max(self.scale.value() or 0.0, self.epsilon)
        ratio = m / scale
        ripa = ratio / (1.0 + ratio)
        self.scale.add(m)
        return ripa

    def gap_break(self) -> None:
        """Reset the filter window across an unbridgeable hole.

        The activity scale and rate estimate survive: they describe the
        subject, not the run.
        """
        self._buf.clear()
        self._prev_t = None


class PcpdTracker:
    """Percentage change of pupil diameter against a session baseline.

    The baseline is the mean repaired pupil over the first ``baseline_ms``
    of the stream (anchored at the very first sample, valid or not). Until
    the window has elapsed with at least one value, every reading maps to
    None; if the window closes empty, PCPD stays unavailable for the whole
    session.
    """

    def __init__(self, baseline_ms: float = 1000.0):
        if baseline_ms <= 0:
            raise ConfigError("baseline_ms must be positive")
        self.baseline_ms = baseline_ms
        self.baseline: Optional[float] = None
        self._anchor: Optional[float] = None
        self._window_sum = 0.0
        self._window_n = 0
        self._closed = False

    def note_stream_start(self, t: float) -> None:
        """Anchor the baseline window; first call wins."""
        if self._anchor is None:
            self._anchor = t

    def observe(self, t: float, value: float) -> Optional[float]:
        if self._anchor is None:
            self._anchor = t
        if not self._closed and t <= self._anchor + self.baseline_ms:
            self._window_sum += value
            self._window_n += 1
            return None
        if not self._closed:
            self._closed = True
            if self._window_n > 0:
                self.baseline = self._window_sum / self._window_n
        if self.baseline is None:
            return None
        return 100.0 * (value - self.baseline) / self.baseline


def pcpd(pupil: float, baseline: float) -> float:
    """Percentage change of one pupil reading against a fixed baseline."""
    return 100.0 * (pupil - baseline) / baseline
