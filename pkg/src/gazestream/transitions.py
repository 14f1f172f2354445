"""AOI hit-testing, the gaze-transition matrix, and its entropies.

AOI 0 is the implicit "outside" region, a real row/column of the matrix,
so every fixation lands somewhere and transition counts are conserved.
The stationary distribution pi is the empirical fixation proportion per
AOI (not the eigenvector of the transition matrix), which stays defined
for non-ergodic scanpaths and updates incrementally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import Geometry
from .errors import ConfigError

OUTSIDE_ID = 0
OUTSIDE_LABEL = "outside"


@dataclass(frozen=True)
class Aoi:
    """One labeled screen rectangle; rect = (x, y, w, h) in pixels."""

    id: int
    label: str
    rect: tuple[float, float, float, float]

    def contains(self, x: float, y: float) -> bool:
        # Closed on left/top edges, open on right/bottom, so tiled AOIs
        # never double-claim a point.
        rx, ry, rw, rh = self.rect
        return rx <= x < rx + rw and ry <= y < ry + rh


class AoiSet:
    """Ordered AOI list; declaration order is the first-match order."""

    def __init__(self, aois: Sequence[Aoi]):
        ids = [a.id for a in aois]
        if len(set(ids)) != len(ids):
            raise ConfigError("AOI ids must be unique")
        for a in aois:
            if a.id < 1:
                raise ConfigError(f"AOI id must be >= 1, got {a.id} ({a.label!r})")
            if a.rect[2] <= 0 or a.rect[3] <= 0:
                raise ConfigError(f"AOI {a.label!r} has non-positive width/height")
        self.aois = tuple(aois)

    def __len__(self) -> int:
        return len(self.aois)

    def __iter__(self):
        return iter(self.aois)

    @property
    def labels(self) -> list[str]:
        """Labels indexed by AOI id, with "outside" at index 0."""
        out = [OUTSIDE_LABEL] * (self.max_id + 1)
        for a in self.aois:
            out[a.id] = a.label
        return out

    @property
    def max_id(self) -> int:
        return max((a.id for a in self.aois), default=0)

    def validate_within(self, geom: Geometry) -> None:
        for a in self.aois:
            x, y, w, h = a.rect
            if x < 0 or y < 0 or x + w > geom.screen_width_px or y + h > geom.screen_height_px:
                raise ConfigError(f"AOI {a.label!r} extends beyond the screen bounds")

    @classmethod
    def grid(cls, geom: Geometry, rows: int, cols: int) -> "AoiSet":
        """Preset: an evenly tiled rows x cols grid labeled r{i}c{j}."""
        if rows < 1 or cols < 1:
            raise ConfigError("grid needs at least one row and one column")
        cell_w = geom.screen_width_px / cols
        cell_h = geom.screen_height_px / rows
        aois = []
        for r in range(rows):
            for c in range(cols):
                aois.append(
                    Aoi(
                        id=r * cols + c + 1,
                        label=f"r{r}c{c}",
                        rect=(c * cell_w, r * cell_h, cell_w, cell_h),
                    )
                )
        return cls(aois)


def aoi_hit(point: tuple[float, float], aois: AoiSet) -> int:
    """Id of the first declared AOI containing the point, 0 if none."""
    x, y = point
    for a in aois:
        if a.contains(x, y):
            return a.id
    return OUTSIDE_ID


def stationary_entropy(pi: Sequence[float]) -> Optional[float]:
    """Shannon entropy (bits) of the AOI fixation distribution.

    None until any fixation has been seen (all-zero pi).
    """
    total = sum(pi)
    if total <= 0:
        return None
    return -sum(p * math.log2(p) for p in pi if p > 0)


def transition_entropy(pi: Sequence[float], probs: Sequence[Sequence[float]]) -> Optional[float]:
    """Expected row entropy (bits) weighted by pi.

    Rows that never transitioned anywhere (all-zero) are skipped; None
    until at least one transition exists.
    """
    any_row = False
    h = 0.0
    for p_i, row in zip(pi, probs):
        if not any(row):
            continue
        any_row = True
        h += p_i * -sum(p * math.log2(p) for p in row if p > 0)
    return h if any_row else None


@dataclass(frozen=True)
class TransitionSnapshot:
    """Immutable matrix state published after each fixation."""

    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]
    probs: tuple[tuple[float, ...], ...]
    pi: tuple[float, ...]
    h_stationary: Optional[float]
    h_transition: Optional[float]
    total_fixations: int
    total_transitions: int
    unvisited_sources: tuple[int, ...]  # AOI ids with no outgoing transitions


class TransitionTracker:
    """Incrementally maintained AOI transition matrix.

    Self-transitions count by default; pass include_self=False to drop
    them (the entropy literature often does). Gap breaks sever the chain:
    the next fixation starts a fresh pair.
    """

    def __init__(self, aois: AoiSet, include_self: bool = True):
        self.aois = aois
        self.include_self = include_self
        self._labels = tuple(aois.labels)
        n = aois.max_id + 1
        self._n = n
        self._counts = [[0] * n for _ in range(n)]
        self._visits = [0] * n
        self._total_fixations = 0
        self._total_transitions = 0
        self._prev: Optional[int] = None

    def observe_fixation(self, aoi_id: int) -> TransitionSnapshot:
        if not 0 <= aoi_id < self._n:
            raise ValueError(f"AOI id {aoi_id} out of range")
        self._visits[aoi_id] += 1
        self._total_fixations += 1
        if self._prev is not None and (self.include_self or self._prev != aoi_id):
            self._counts[self._prev][aoi_id] += 1
            self._total_transitions += 1
        self._prev = aoi_id
        return self.snapshot()

    def gap_break(self) -> None:
        self._prev = None

    def snapshot(self) -> TransitionSnapshot:
        counts = tuple(tuple(row) for row in self._counts)
        probs = []
        unvisited = []
        for i, row in enumerate(self._counts):
            total = sum(row)
            if total == 0:
                unvisited.append(i)
                probs.append(tuple(0.0 for _ in row))
            else:
                probs.append(tuple(c / total for c in row))
        pi = tuple(
            v / self._total_fixations if self._total_fixations else 0.0 for v in self._visits
        )
        return TransitionSnapshot(
            labels=self._labels,
            counts=counts,
            probs=tuple(probs),
            pi=pi,
            h_stationary=stationary_entropy(pi),
            h_transition=transition_entropy(pi, probs),
            total_fixations=self._total_fixations,
            total_transitions=self._total_transitions,
            unvisited_sources=tuple(unvisited),
        )
