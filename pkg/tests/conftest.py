"""Shared fixtures and synthetic stream builders."""

from __future__ import annotations

import math

import numpy as np
import pytest

from gazestream.core import GazeSample, Geometry

# Desk-scale reference geometry used throughout the suite: a 24" 1920x1080
# panel (531x299 mm) viewed from 650 mm.
GEOM = Geometry(
    screen_width_px=1920,
    screen_height_px=1080,
    screen_width_mm=531.0,
    screen_height_mm=299.0,
    viewing_distance_mm=650.0,
)


@pytest.fixture
def geom() -> Geometry:
    return GEOM


def deg_to_px(deg: float, geom: Geometry = GEOM) -> float:
    """Horizontal pixel distance subtending the given visual angle."""
    chord_mm = 2.0 * geom.viewing_distance_mm * math.tan(math.radians(deg) / 2.0)
    return chord_mm * geom.screen_width_px / geom.screen_width_mm


def constant_stream(n, x=960.0, y=540.0, dt_ms=10.0, t0=0.0, pupil=None):
    return [
        GazeSample(t=t0 + i * dt_ms, x=x, y=y, pupil_left=pupil, pupil_right=pupil)
        for i in range(n)
    ]


def planted_cluster_stream(
    rng: np.random.Generator,
    n_clusters: int,
    geom: Geometry = GEOM,
    rate_hz: float = 60.0,
    cluster_ms=(120.0, 400.0),
    transition_samples=(1, 4),
    noise_px: float = 0.0,
    invalid_run: tuple[int, int] | None = None,
    with_pupil: bool = True,
):
    """Fixation clusters at well-separated points joined by fast sweeps.

    Cluster spacing is at least ~200 px (several degrees), so neither the
    minimum-amplitude merge nor borderline velocities come into play unless
    noise is made hostile on purpose. Optionally plants one invalid run of
    the given sample count at a random interior position. Pupil diameters
    follow a slow random walk around 4 mm unless disabled.
    """
    dt = 1000.0 / rate_hz
    margin = 150.0
    points = []
    while len(points) < n_clusters:
        candidate = (
            rng.uniform(margin, geom.screen_width_px - margin),
            rng.uniform(margin, geom.screen_height_px - margin),
        )
        if not points or math.dist(points[-1], candidate) > 200.0:
            points.append(candidate)

    pupil = 4.0

    def next_pupil():
        nonlocal pupil
        if not with_pupil:
            return None
        pupil = min(6.0, max(2.0, pupil + rng.normal(0.0, 0.01)))
        return pupil

    samples = []
    t = 0.0
    for ci, (cx, cy) in enumerate(points):
        n_fix = max(3, int(round(rng.uniform(*cluster_ms) / dt)))
        for _ in range(n_fix):
            p = next_pupil()
            samples.append(
                GazeSample(
                    t=t,
                    x=cx + (rng.normal(0.0, noise_px) if noise_px else 0.0),
                    y=cy + (rng.normal(0.0, noise_px) if noise_px else 0.0),
                    pupil_left=p,
                    pupil_right=p,
                )
            )
            t += dt
        if ci + 1 < len(points):
            nx, ny = points[ci + 1]
            n_tr = int(rng.integers(transition_samples[0], transition_samples[1] + 1))
            for k in range(1, n_tr + 1):
                frac = k / (n_tr + 1)
                p = next_pupil()
                samples.append(
                    GazeSample(
                        t=t,
                        x=cx + (nx - cx) * frac,
                        y=cy + (ny - cy) * frac,
                        pupil_left=p,
                        pupil_right=p,
                    )
                )
                t += dt

    if invalid_run is not None:
        run_len = int(rng.integers(invalid_run[0], invalid_run[1] + 1))
        start = int(rng.integers(1, max(2, len(samples) - run_len - 1)))
        for i in range(start, start + run_len):
            s = samples[i]
            samples[i] = GazeSample(t=s.t, x=math.nan, y=math.nan, valid=False)
    return samples
