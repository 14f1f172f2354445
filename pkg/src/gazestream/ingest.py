"""File ingestion and timed re-streaming.

Recorded trials are parsed through declarative column maps (no per-dataset
parsers), then replayed against the wall clock to simulate a live tracker.
Replay speed is a positive multiplier or MAX_SPEED (as fast as the sink
accepts).
"""

from __future__ import annotations

import csv
import math
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .core import GazeSample
from .errors import ConfigError, EmptyStreamError, IngestionError, SinkClosed

MAX_SPEED = math.inf

_TIME_TO_MS = {"s": 1000.0, "ms": 1.0, "us": 0.001}

ColumnRef = Union[str, int]


@dataclass(frozen=True)
class ColumnMap:
    """Declarative binding from a delimited text file to gaze samples.

    t, x and y are mandatory; pupil bindings are optional (RIPA is simply
    unavailable without them). Column references are header names or
    zero-based indices. ``validity_rule`` is a tiny predicate over the
    bound validity column: "non-empty", "column == VALUE" or
    "column != VALUE" (numeric comparison when both sides parse as
    numbers). Without a validity column, a row is valid when its
    coordinates parse to finite numbers.
    """

    format_name: str = "custom"
    delimiter: str = ","
    t: Optional[ColumnRef] = None
    x: Optional[ColumnRef] = None
    y: Optional[ColumnRef] = None
    pupil_left: Optional[ColumnRef] = None
    pupil_right: Optional[ColumnRef] = None
    validity: Optional[ColumnRef] = None
    time_unit: str = "ms"
    pupil_unit: str = "mm"
    validity_rule: str = "non-empty"
    has_header: Optional[bool] = None  # None: inferred (any name binding => header)

    def validate(self) -> None:
        for name in ("t", "x", "y"):
            if getattr(self, name) is None:
                raise ConfigError(f"column map {self.format_name!r} is missing the {name!r} binding")
        if self.time_unit not in _TIME_TO_MS:
            raise ConfigError(f"unknown time_unit {self.time_unit!r} (expected s, ms or us)")
        if self.pupil_unit not in ("mm", "arbitrary"):
            raise ConfigError(f"unknown pupil_unit {self.pupil_unit!r} (expected mm or arbitrary)")
        _compile_validity_rule(self.validity_rule)

    def needs_header(self) -> bool:
        if self.has_header is not None:
            return self.has_header
        return any(
            isinstance(ref, str)
            for ref in (self.t, self.x, self.y, self.pupil_left, self.pupil_right, self.validity)
            if ref is not None
        )


# Presets for the two dataset families this engine was built around. The
# recording layouts are not standardized, so the actual column bindings
# must be completed by the user against their local copies; validate()
# reports exactly what is missing.
PRESETS: dict[str, dict] = {
    "driving-sim": {
        "format_name": "driving-sim",
        "delimiter": ",",
        "time_unit": "s",
        "pupil_unit": "mm",
    },
    "visual-scanning": {
        "format_name": "visual-scanning",
        "delimiter": "\t",
        "time_unit": "ms",
        "pupil_unit": "arbitrary",
    },
}

_RULE_RE = re.compile(r"^column\s*(==|!=)\s*(.+)$")


def _compile_validity_rule(rule: str) -> Callable[[str], bool]:
    rule = rule.strip()
    if rule == "non-empty":
        return lambda cell: cell.strip() != ""
    m = _RULE_RE.match(rule)
    if not m:
        raise ConfigError(
            f"unsupported validity_rule {rule!r} (expected \"non-empty\", \"column == X\" or \"column != X\")"
        )
    op, rhs = m.group(1), m.group(2).strip()

    def check(cell: str) -> bool:
        cell = cell.strip()
        try:
            equal = float(cell) == float(rhs)
        except ValueError:
            equal = cell == rhs
        return equal if op == "==" else not equal

    return check


def _float_or_none(cell: str) -> Optional[float]:
    try:
        value = float(cell)
    except (ValueError, TypeError):
        return None
    return value if math.isfinite(value) else None


def parse(
    path: Union[str, Path], cmap: ColumnMap, bad_row_budget: float = 0.01
) -> list[GazeSample]:
    """Parse one recorded trial into a time-ordered sample list.

    Rows whose coordinates fail to parse (or whose validity rule fails) are
    kept with valid=False. Rows that cannot be placed in time at all -
    unparseable timestamp, missing cells, decreasing timestamp - are
    skipped, but more than ``bad_row_budget`` of them aborts ingestion.
    Duplicate timestamps collapse to the last occurrence.
    """
    cmap.validate()
    path = Path(path)
    rule = _compile_validity_rule(cmap.validity_rule)
    time_factor = _TIME_TO_MS[cmap.time_unit]

    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IngestionError(f"{path}: cannot read input ({exc})")
    with fh:
        reader = csv.reader(fh, delimiter=cmap.delimiter)
        rows = iter(reader)
        row_no = 0

        indices: dict[str, Optional[int]] = {}
        bindings = {
            "t": cmap.t,
            "x": cmap.x,
            "y": cmap.y,
            "pupil_left": cmap.pupil_left,
            "pupil_right": cmap.pupil_right,
            "validity": cmap.validity,
        }
        if cmap.needs_header():
            try:
                header = next(rows)
                row_no += 1
            except StopIteration:
                raise EmptyStreamError(f"{path}: file is empty")
            positions = {name.strip(): i for i, name in enumerate(header)}
            for field_name, ref in bindings.items():
                if ref is None:
                    indices[field_name] = None
                elif isinstance(ref, int):
                    indices[field_name] = ref
                elif ref in positions:
                    indices[field_name] = positions[ref]
                else:
                    raise ConfigError(
                        f"{path}: bound column {field_name!r} ({ref!r}) not found in header"
                    )
        else:
            for field_name, ref in bindings.items():
                if ref is not None and not isinstance(ref, int):
                    raise ConfigError(
                        f"column map {cmap.format_name!r} binds {field_name!r} by name "
                        f"but has_header is false"
                    )
                indices[field_name] = ref

        samples: list[GazeSample] = []
        bad_rows: list[int] = []
        data_rows = 0
        last_t: Optional[float] = None

        def cell(row: Sequence[str], key: str) -> Optional[str]:
            idx = indices[key]
            if idx is None:
                return None
            if idx >= len(row):
                raise IndexError
            return row[idx]

        for row in rows:
            row_no += 1
            if not row or all(c.strip() == "" for c in row):
                continue
            data_rows += 1
            try:
                t_raw = _float_or_none(cell(row, "t"))
            except IndexError:
                t_raw = None
            if t_raw is None:
                bad_rows.append(row_no)
                continue
            t_ms = t_raw * time_factor
            if last_t is not None and t_ms < last_t:
                bad_rows.append(row_no)  # decreasing stamps are rejected
                continue

            try:
                x = _float_or_none(cell(row, "x"))
                y = _float_or_none(cell(row, "y"))
                p_l = _float_or_none(cell(row, "pupil_left"))
                p_r = _float_or_none(cell(row, "pupil_right"))
                validity_cell = cell(row, "validity")
            except IndexError:
                bad_rows.append(row_no)
                continue

            valid = x is not None and y is not None
            if valid and validity_cell is not None:
                valid = rule(validity_cell)

            sample = GazeSample(
                t=t_ms,
                x=x if x is not None else math.nan,
                y=y if y is not None else math.nan,
                pupil_left=p_l,
                pupil_right=p_r,
                valid=valid,
            )
            if last_t is not None and t_ms == last_t:
                samples[-1] = sample  # duplicate stamp: last occurrence wins
            else:
                samples.append(sample)
                last_t = t_ms

        if data_rows and len(bad_rows) / data_rows > bad_row_budget:
            raise IngestionError(
                f"{path}: {len(bad_rows)} of {data_rows} rows unparseable "
                f"(budget {bad_row_budget:.1%}); first bad row {bad_rows[0]}",
                row=bad_rows[0],
            )
        if not samples:
            raise EmptyStreamError(f"{path}: no samples parsed")
        return samples


class ReplayClock:
    """Maps stream time to wall time: wall = epoch_wall + (t - epoch_stream)/speed."""

    def __init__(self, speed: float = 1.0):
        if not (speed > 0):
            raise ConfigError(f"replay speed must be positive (or MAX_SPEED), got {speed}")
        self.speed = speed
        self.epoch_wall = 0.0
        self.epoch_stream = 0.0

    def anchor(self, stream_ms: float, wall: Optional[float] = None) -> None:
        """Pin a stream position to a wall-clock instant (default: now)."""
        self.epoch_wall = time.monotonic() if wall is None else wall
        self.epoch_stream = stream_ms

    def target_wall(self, t_ms: float) -> float:
        return self.epoch_wall + (t_ms - self.epoch_stream) / (1000.0 * self.speed)

    def stream_position(self, wall: Optional[float] = None) -> float:
        """Stream time corresponding to a wall instant (finite speed only)."""
        if math.isinf(self.speed):
            return self.epoch_stream
        now = time.monotonic() if wall is None else wall
        return self.epoch_stream + (now - self.epoch_wall) * 1000.0 * self.speed

    def rebase(self, speed: float, stream_ms: Optional[float] = None, wall: Optional[float] = None) -> None:
        """Change speed without disturbing already-emitted samples."""
        if not (speed > 0):
            raise ConfigError(f"replay speed must be positive (or MAX_SPEED), got {speed}")
        now = time.monotonic() if wall is None else wall
        pos = self.stream_position(now) if stream_ms is None else stream_ms
        self.epoch_wall = now
        self.epoch_stream = pos
        self.speed = speed

    def shift_epoch(self, delta_wall_s: float) -> None:
        """Push all future targets later, e.g. by the duration of a pause."""
        self.epoch_wall += delta_wall_s


@dataclass
class ReplayReport:
    """Outcome of one replay run. Drift is lateness past the target time;
    samples are never emitted early."""

    emitted: int = 0
    max_drift_ms: float = 0.0
    mean_drift_ms: float = 0.0
    aborted: bool = False


# Pre-wake margin for paced emission: timer wakeups on a busy host can be
# late by several milliseconds, so the final stretch is spun instead.
_SPIN_MARGIN_S = 0.005


def _sleep_until(target_wall: float) -> None:
    """Sleep to a monotonic deadline, spinning the last few milliseconds to
    dodge timer-wakeup latency, which otherwise dominates drift."""
    while True:
        remaining = target_wall - time.monotonic()
        if remaining <= 0:
            return
        if remaining > _SPIN_MARGIN_S:
            time.sleep(remaining - _SPIN_MARGIN_S)


def replay(
    samples: Sequence[GazeSample],
    clock: ReplayClock,
    sink: Callable[[GazeSample], None],
) -> ReplayReport:
    """Deliver samples to the sink at their target wall times, in order.

    At MAX_SPEED no pacing happens at all and drift is reported as 0. The
    sink may raise SinkClosed to abort; the partial report is returned.
    """
    report = ReplayReport()
    if not samples:
        return report
    fast = math.isinf(clock.speed)
    if not fast:
        clock.anchor(samples[0].t)
    drift_sum = 0.0
    for sample in samples:
        if not fast:
            target = clock.target_wall(sample.t)
            _sleep_until(target)
            late_ms = max(0.0, (time.monotonic() - target) * 1000.0)
            drift_sum += late_ms
            report.max_drift_ms = max(report.max_drift_ms, late_ms)
        try:
            sink(sample)
        except SinkClosed:
            report.aborted = True
            break
        report.emitted += 1
    if not fast and report.emitted:
        report.mean_drift_ms = drift_sum / report.emitted
    return report
