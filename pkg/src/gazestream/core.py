"""Shared domain types and screen geometry.

Everything downstream (classification, measures, transitions) works in
degrees of visual angle, so the pixel-to-degree conversion lives here and
is the single source of truth for pixel pitch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .errors import ConfigError, MalformedStreamError


@dataclass(frozen=True)
class Geometry:
    """Screen and viewing geometry.

    Gaze angles are computed from on-screen chord length assuming the gaze
    axis is orthogonal to the screen center; no per-point eccentricity
    correction is applied (standard approximation at desk scale).
    """

    screen_width_px: int
    screen_height_px: int
    screen_width_mm: float
    screen_height_mm: float
    viewing_distance_mm: float

    def __post_init__(self):
        for name in (
            "screen_width_px",
            "screen_height_px",
            "screen_width_mm",
            "screen_height_mm",
            "viewing_distance_mm",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"geometry field {name!r} must be strictly positive")

    def pixel_pitch(self) -> tuple[float, float]:
        """(mm per pixel horizontally, mm per pixel vertically)."""
        return (
            self.screen_width_mm / self.screen_width_px,
            self.screen_height_mm / self.screen_height_px,
        )


@dataclass(frozen=True)
class GazeSample:
    """One timestamped raw sample from the eye tracker.

    Timestamps are milliseconds as float64; coordinates are screen pixels.
    Pupil diameters are per eye and optional (None when the tracker did not
    report that eye). ``clamped`` marks samples whose coordinates were
    pulled back inside the screen rectangle.
    """

    t: float
    x: float
    y: float
    pupil_left: Optional[float] = None
    pupil_right: Optional[float] = None
    valid: bool = True
    clamped: bool = False


@dataclass(frozen=True)
class Fixation:
    """A completed fixation with metrics derived from its member samples."""

    id: int
    t_start: float
    t_end: float
    duration: float  # ms, == t_end - t_start
    centroid_x: float
    centroid_y: float
    mean_pupil: Optional[float] = None


@dataclass(frozen=True)
class Saccade:
    """A completed saccade between two retained fixations.

    Amplitude is the visual angle between the bounding fixation centroids
    (displacement, not integrated path length).
    """

    id: int
    t_start: float
    t_end: float
    duration: float  # ms
    amplitude: float  # degrees
    peak_velocity: float  # deg/s
    mean_velocity: float  # deg/s


def px_to_deg(p1: tuple[float, float], p2: tuple[float, float], geom: Geometry) -> float:
    """Visual angle in degrees subtended by the on-screen segment p1-p2.

    Uses 2*atan2(chord_mm/2, viewing_distance). Symmetric in its point
    arguments and zero for coincident points.
    """
    pitch_x, pitch_y = geom.pixel_pitch()
    dx_mm = (p2[0] - p1[0]) * pitch_x
    dy_mm = (p2[1] - p1[1]) * pitch_y
    chord_mm = math.hypot(dx_mm, dy_mm)
    return math.degrees(2.0 * math.atan2(chord_mm / 2.0, geom.viewing_distance_mm))


def angular_velocity(s_prev: GazeSample, s_curr: GazeSample, geom: Geometry) -> float:
    """Angular gaze velocity in deg/s between two consecutive samples."""
    dt_s = (s_curr.t - s_prev.t) / 1000.0
    if dt_s <= 0:
        raise MalformedStreamError(
            f"non-increasing timestamps: {s_prev.t} -> {s_curr.t}"
        )
    return px_to_deg((s_prev.x, s_prev.y), (s_curr.x, s_curr.y), geom) / dt_s


def combine_eyes(sample: GazeSample) -> Optional[float]:
    """Best available pupil diameter for a sample.

    Mean of both eyes when both are usable, the single usable eye otherwise,
    None when neither is. A reading is usable when it is present, finite and
    strictly positive; zero means the tracker lost the pupil.
    """
    if not sample.valid:
        return None
    vals = [
        v
        for v in (sample.pupil_left, sample.pupil_right)
        if v is not None and math.isfinite(v) and v > 0
    ]
    if not vals:
        return None
    return sum(vals) / len(vals)


def clamp_to_screen(sample: GazeSample, geom: Geometry) -> GazeSample:
    """Clamp an out-of-bounds but valid sample to the screen rectangle.

    Invalid samples pass through untouched; clamped samples are flagged so
    downstream consumers can tell, but stay in the stream to preserve
    velocity continuity.
    """
    if not sample.valid:
        return sample
    x = min(max(sample.x, 0.0), float(geom.screen_width_px))
    y = min(max(sample.y, 0.0), float(geom.screen_height_px))
    if x == sample.x and y == sample.y:
        return sample
    return replace(sample, x=x, y=y, clamped=True)
