"""Session configuration: one declarative JSON document that embeds (or
references by path) the column map, geometry, AOI set, classifier and
pupillometry parameters.

The whole document is validated up front; a session is never started from
a partially valid config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from ..core import Geometry
from ..classification import IvtConfig
from ..errors import ConfigError
from ..ingest import MAX_SPEED, PRESETS, ColumnMap
from ..pupillometry import PcpdTracker, PupilPreprocessor, SgFilter
from ..transitions import Aoi, AoiSet
from .envelope import STREAMS

DEFAULT_PORT = 8765


@dataclass(frozen=True)
class PupilConfig:
    sg_window: int = 11
    sg_order: int = 2
    gap_ms: float = 200.0
    baseline_ms: float = 1000.0
    epsilon: float = 1e-6

    def validate(self) -> None:
        SgFilter.design(self.sg_window, self.sg_order, deriv=1)
        PupilPreprocessor(self.gap_ms)
        PcpdTracker(self.baseline_ms)
        if self.epsilon <= 0:
            raise ConfigError("pupil.epsilon must be positive")


@dataclass(frozen=True)
class SessionConfig:
    session_id: str
    input_path: Path
    column_map: ColumnMap
    geometry: Geometry
    aois: AoiSet
    ivt: IvtConfig
    pupil: PupilConfig
    replay_speed: float
    port: int
    streams: frozenset
    queue_capacity: int
    exclude_self_transitions: bool
    bad_row_budget: float
    std_mode: str


def _take(doc: dict, section: str, allowed: set[str]) -> dict:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    return doc


def _build_column_map(doc: Any, base_dir: Path) -> ColumnMap:
    if isinstance(doc, str):
        ref = base_dir / doc
        try:
            doc = json.loads(ref.read_text())
        except FileNotFoundError:
            raise ConfigError(f"column map file not found: {ref}")
    if not isinstance(doc, dict):
        raise ConfigError("column_map must be an object or a file path")
    doc = dict(doc)
    merged: dict = {}
    preset = doc.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown column map preset {preset!r} (have {sorted(PRESETS)})")
        merged.update(PRESETS[preset])
    merged.update(doc)
    allowed = {
        "format_name", "delimiter", "t", "x", "y",
        "pupil_left", "pupil_right", "validity",
        "time_unit", "pupil_unit", "validity_rule", "has_header",
    }
    _take(merged, "column_map", allowed)
    cmap = ColumnMap(**merged)
    cmap.validate()
    return cmap


def _build_aois(doc: Any, base_dir: Path, geom: Geometry) -> AoiSet:
    if doc is None:
        return AoiSet([])
    if isinstance(doc, str):
        ref = base_dir / doc
        try:
            doc = json.loads(ref.read_text())
        except FileNotFoundError:
            raise ConfigError(f"AOI file not found: {ref}")
    if isinstance(doc, dict) and "grid" in doc:
        grid = _take(dict(doc["grid"]), "aois.grid", {"rows", "cols"})
        return AoiSet.grid(geom, int(grid.get("rows", 1)), int(grid.get("cols", 1)))
    entries = doc["aois"] if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise ConfigError("aois must be a list, an object with \"aois\" or \"grid\", or a file path")
    aois = []
    for i, entry in enumerate(entries):
        _take(dict(entry), "aoi", {"id", "label", "rect"})
        try:
            rect = tuple(float(v) for v in entry["rect"])
            label = str(entry["label"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"AOI #{i} needs a label and a rect [x, y, w, h]")
        if len(rect) != 4:
            raise ConfigError(f"AOI {label!r}: rect must be [x, y, w, h]")
        aois.append(Aoi(id=int(entry.get("id", i + 1)), label=label, rect=rect))
    return AoiSet(aois)


def _speed(value: Any) -> float:
    if isinstance(value, str):
        if value.lower() == "max":
            return MAX_SPEED
        raise ConfigError(f"replay.speed must be a positive number or \"max\", got {value!r}")
    speed = float(value)
    if not (speed > 0) or (math.isinf(speed) and speed < 0):
        raise ConfigError(f"replay.speed must be positive, got {value!r}")
    return speed


def _streams(value: Any) -> frozenset:
    if value is None:
        return frozenset(STREAMS)
    names = set(value)
    if "*" in names:
        return frozenset(STREAMS)
    unknown = names - set(STREAMS)
    if unknown:
        raise ConfigError(f"unknown streams: {sorted(unknown)} (have {list(STREAMS)})")
    return frozenset(names)


def apply_overrides(doc: dict, overrides: Optional[dict]) -> dict:
    """Overlay dotted-key overrides (e.g. {"ivt.velocity_threshold": 25})."""
    if not overrides:
        return doc
    for key, value in overrides.items():
        if value is None:
            continue
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = value
    return doc


def build_session_config(doc: dict, base_dir: Path) -> SessionConfig:
    allowed = {
        "session_id", "input", "column_map", "geometry", "aois", "ivt", "pupil",
        "replay", "port", "streams", "queue_capacity", "exclude_self_transitions",
        "bad_row_budget", "std_mode",
    }
    _take(doc, "session config", allowed)
    for required in ("input", "column_map", "geometry"):
        if required not in doc:
            raise ConfigError(f"session config is missing {required!r}")

    geometry = Geometry(**_take(dict(doc["geometry"]), "geometry", {
        "screen_width_px", "screen_height_px", "screen_width_mm",
        "screen_height_mm", "viewing_distance_mm",
    }))
    column_map = _build_column_map(doc["column_map"], base_dir)
    aois = _build_aois(doc.get("aois"), base_dir, geometry)
    aois.validate_within(geometry)
    ivt = IvtConfig(**_take(dict(doc.get("ivt", {})), "ivt", {
        "velocity_threshold", "min_fixation_duration",
        "max_gap_interpolation", "min_saccade_amplitude",
    }))
    pupil = PupilConfig(**_take(dict(doc.get("pupil", {})), "pupil", {
        "sg_window", "sg_order", "gap_ms", "baseline_ms", "epsilon",
    }))
    pupil.validate()

    replay_doc = _take(dict(doc.get("replay", {})), "replay", {"speed"})
    speed = _speed(replay_doc.get("speed", 1.0))

    std_mode = doc.get("std_mode", "sample")
    if std_mode not in ("sample", "population"):
        raise ConfigError(f"std_mode must be \"sample\" or \"population\", got {std_mode!r}")

    bad_row_budget = float(doc.get("bad_row_budget", 0.01))
    if not 0.0 <= bad_row_budget <= 1.0:
        raise ConfigError("bad_row_budget must be within [0, 1]")

    queue_capacity = int(doc.get("queue_capacity", 1024))
    if queue_capacity < 1:
        raise ConfigError("queue_capacity must be at least 1")

    return SessionConfig(
        session_id=str(doc.get("session_id", "session")),
        input_path=(base_dir / doc["input"]).resolve(),
        column_map=column_map,
        geometry=geometry,
        aois=aois,
        ivt=ivt,
        pupil=pupil,
        replay_speed=speed,
        port=int(doc.get("port", DEFAULT_PORT)),
        streams=_streams(doc.get("streams")),
        queue_capacity=queue_capacity,
        exclude_self_transitions=bool(doc.get("exclude_self_transitions", False)),
        bad_row_budget=bad_row_budget,
        std_mode=std_mode,
    )


def load_session_config(path: Union[str, Path], overrides: Optional[dict] = None) -> SessionConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    apply_overrides(doc, overrides)
    return build_session_config(doc, path.parent.resolve())
