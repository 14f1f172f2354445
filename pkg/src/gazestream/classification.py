"""Streaming velocity-threshold (I-VT) fixation/saccade classifier.

Samples are labeled one at a time by the angular velocity from their
predecessor: below the threshold extends a fixation, at or above it a
saccade. An event is emitted the moment no future sample can revise it:

* a fixation candidate that closes is first checked against the previous
  retained fixation - if the visual angle between their centroids is under
  ``min_saccade_amplitude`` the two merge into one fixation (with the
  in-between samples pooled);
* otherwise a candidate shorter than ``min_fixation_duration`` is discarded
  and its samples are absorbed by the surrounding saccade;
* a retained candidate confirms the previous fixation and the saccade
  between them, which are then emitted back to back.

A saccade is therefore only ever emitted bounded by two retained fixations;
saccade samples before the first or after the last fixation of a region are
dropped. Runs of invalid samples spanning at most ``max_gap_interpolation``
between valid anchors are bridged by linear interpolation; longer runs
emit GapStarted/GapEnded and reset the region (the open fixation, if
retained, is flushed first, exactly as at end of stream).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from .core import Fixation, GazeSample, Geometry, Saccade, angular_velocity, combine_eyes, px_to_deg
from .errors import ConfigError, MalformedStreamError


@dataclass(frozen=True)
class IvtConfig:
    """I-VT parameters; defaults are the conventional desk-tracking values."""

    velocity_threshold: float = 30.0  # deg/s
    min_fixation_duration: float = 60.0  # ms
    max_gap_interpolation: float = 75.0  # ms
    min_saccade_amplitude: float = 0.5  # deg; bounding fixations merge below this

    def __post_init__(self):
        for name in (
            "velocity_threshold",
            "min_fixation_duration",
            "max_gap_interpolation",
            "min_saccade_amplitude",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"ivt field {name!r} must be strictly positive")


@dataclass(frozen=True)
class FixationCompleted:
    fixation: Fixation


@dataclass(frozen=True)
class SaccadeCompleted:
    saccade: Saccade


@dataclass(frozen=True)
class GapStarted:
    t: float


@dataclass(frozen=True)
class GapEnded:
    t: float


Event = Union[FixationCompleted, SaccadeCompleted, GapStarted, GapEnded]

_FIX = "fix"
_SACC = "sacc"

# A classified sample paired with the velocity into it (None for the first
# sample of a region, which has no predecessor).
_Pair = tuple[GazeSample, Optional[float]]


def _centroid(pairs: list[_Pair]) -> tuple[float, float]:
    n = len(pairs)
    return (
        sum(s.x for s, _ in pairs) / n,
        sum(s.y for s, _ in pairs) / n,
    )


class IvtClassifier:
    """Stateful streaming classifier; call step() per sample, finish() at end."""

    def __init__(self, cfg: IvtConfig, geom: Geometry):
        self.cfg = cfg
        self.geom = geom
        self._last_t: Optional[float] = None
        self._last_valid: Optional[GazeSample] = None
        self._invalid_buf: list[GazeSample] = []
        self._in_gap = False
        # Region state
        self._phase: Optional[str] = None
        self._seed: list[_Pair] = []  # region-first samples awaiting a phase
        self._open_fix: list[_Pair] = []
        self._sacc: list[_Pair] = []  # saccade material since the pending fixation
        self._pending: Optional[list[_Pair]] = None  # retained fixation awaiting confirmation
        self._fix_id = 0
        self._sacc_id = 0

    # -- sample intake -------------------------------------------------

    def step(self, sample: GazeSample) -> list[Event]:
        events: list[Event] = []
        if self._last_t is not None and sample.t <= self._last_t:
            raise MalformedStreamError(
                f"sample at t={sample.t} after t={self._last_t}; stream must be strictly increasing"
            )
        self._last_t = sample.t

        if not sample.valid:
            self._on_invalid(sample, events)
            return events

        if self._in_gap:
            events.append(GapEnded(t=sample.t))
            self._in_gap = False
            self._ingest_valid(sample, events)
            return events

        if self._invalid_buf:
            anchor = self._last_valid
            if sample.t - anchor.t <= self.cfg.max_gap_interpolation:
                for missing in self._invalid_buf:
                    self._ingest_valid(self._interpolate(missing, anchor, sample), events)
                self._invalid_buf.clear()
            else:
                first_t = self._invalid_buf[0].t
                self._invalid_buf.clear()
                self._finalize_region(events)
                events.append(GapStarted(t=first_t))
                events.append(GapEnded(t=sample.t))
                self._ingest_valid(sample, events)
                return events

        self._ingest_valid(sample, events)
        return events

    def finish(self) -> list[Event]:
        """Flush the stream: emits the final retained fixation (and the
        saccade bounding it) but drops trailing partial saccades."""
        events: list[Event] = []
        self._finalize_region(events)
        self._invalid_buf.clear()
        return events

    def _on_invalid(self, sample: GazeSample, events: list[Event]) -> None:
        if self._in_gap:
            return
        if self._last_valid is None:
            # Nothing to bridge from: the gap is established immediately.
            self._finalize_region(events)
            events.append(GapStarted(t=sample.t))
            self._in_gap = True
            return
        self._invalid_buf.append(sample)
        if sample.t - self._last_valid.t > self.cfg.max_gap_interpolation:
            first_t = self._invalid_buf[0].t
            self._invalid_buf.clear()
            self._finalize_region(events)
            events.append(GapStarted(t=first_t))
            self._in_gap = True

    @staticmethod
    def _interpolate(missing: GazeSample, a: GazeSample, b: GazeSample) -> GazeSample:
        frac = (missing.t - a.t) / (b.t - a.t)
        return replace(
            missing,
            x=a.x + (b.x - a.x) * frac,
            y=a.y + (b.y - a.y) * frac,
            pupil_left=None,
            pupil_right=None,
            valid=True,
        )

    # -- classification ------------------------------------------------

    def _ingest_valid(self, sample: GazeSample, events: list[Event]) -> None:
        if self._last_valid is None:
            self._last_valid = sample
            self._seed = [(sample, None)]
            return
        v = angular_velocity(self._last_valid, sample, self.geom)
        self._last_valid = sample
        label = _SACC if v >= self.cfg.velocity_threshold else _FIX

        if self._phase is None:
            # The first velocity of a region labels the seed sample too.
            buf = self._seed + [(sample, v)]
            self._seed = []
            self._phase = label
            if label == _FIX:
                self._open_fix = buf
            else:
                self._sacc = buf
            return

        if label == self._phase:
            (self._open_fix if label == _FIX else self._sacc).append((sample, v))
            return

        if self._phase == _FIX:
            candidate = self._open_fix
            self._open_fix = []
            self._resolve_candidate(candidate, events)
            self._sacc.append((sample, v))
            self._phase = _SACC
        else:
            self._open_fix = [(sample, v)]
            self._phase = _FIX

    def _resolve_candidate(self, candidate: list[_Pair], events: list[Event]) -> None:
        """Merge / discard / retain a closed fixation candidate."""
        if self._pending is not None:
            gap_amp = px_to_deg(_centroid(self._pending), _centroid(candidate), self.geom)
            if gap_amp < self.cfg.min_saccade_amplitude:
                self._pending = self._pending + self._sacc + candidate
                self._sacc = []
                return
        duration = candidate[-1][0].t - candidate[0][0].t
        if duration < self.cfg.min_fixation_duration:
            self._sacc.extend(candidate)
            return
        if self._pending is not None:
            fixation = self._make_fixation(self._pending)
            events.append(FixationCompleted(fixation))
            events.append(SaccadeCompleted(self._make_saccade(self._pending, self._sacc, candidate)))
        self._pending = candidate
        self._sacc = []

    def _finalize_region(self, events: list[Event]) -> None:
        if self._phase == _FIX and self._open_fix:
            candidate = self._open_fix
            self._open_fix = []
            self._resolve_candidate(candidate, events)
        if self._pending is not None:
            events.append(FixationCompleted(self._make_fixation(self._pending)))
        self._phase = None
        self._seed = []
        self._open_fix = []
        self._sacc = []
        self._pending = None
        self._last_valid = None

    # -- event construction ---------------------------------------------

    def _make_fixation(self, pairs: list[_Pair]) -> Fixation:
        samples = [s for s, _ in pairs]
        cx, cy = _centroid(pairs)
        pupils = [p for p in (combine_eyes(s) for s in samples) if p is not None]
        fixation = Fixation(
            id=self._fix_id,
            t_start=samples[0].t,
            t_end=samples[-1].t,
            duration=samples[-1].t - samples[0].t,
            centroid_x=cx,
            centroid_y=cy,
            mean_pupil=sum(pupils) / len(pupils) if pupils else None,
        )
        self._fix_id += 1
        return fixation

    def _make_saccade(
        self, prev_fix: list[_Pair], sacc: list[_Pair], next_fix: list[_Pair]
    ) -> Saccade:
        velocities = [v for _, v in sacc if v is not None]
        t_start = prev_fix[-1][0].t
        t_end = next_fix[0][0].t
        saccade = Saccade(
            id=self._sacc_id,
            t_start=t_start,
            t_end=t_end,
            duration=t_end - t_start,
            amplitude=px_to_deg(_centroid(prev_fix), _centroid(next_fix), self.geom),
            peak_velocity=max(velocities),
            mean_velocity=sum(velocities) / len(velocities),
        )
        self._sacc_id += 1
        return saccade
