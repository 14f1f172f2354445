"""The wire message every measure travels in.

One envelope per JSON object, UTF-8, one object per websocket message or
JSONL line. Non-finite floats are scrubbed to null so any strict JSON
consumer can read the stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

PROTOCOL_VERSION = 1

STREAMS = (
    "samples",
    "fixations",
    "saccades",
    "kcoef",
    "ripa",
    "positional",
    "transitions",
    "mainseq",
    "control",
)


def _scrub(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _scrub(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_scrub(v) for v in obj]
    return obj


@dataclass(frozen=True)
class MeasureEnvelope:
    v: int
    session: str
    stream: str
    seq: int
    epoch: int
    t_ms: float
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "v": self.v,
                "session": self.session,
                "stream": self.stream,
                "seq": self.seq,
                "epoch": self.epoch,
                "t_ms": _scrub(self.t_ms),
                "payload": _scrub(self.payload),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "MeasureEnvelope":
        obj = json.loads(line)
        return cls(
            v=obj["v"],
            session=obj["session"],
            stream=obj["stream"],
            seq=obj["seq"],
            epoch=obj["epoch"],
            t_ms=obj["t_ms"],
            payload=obj["payload"],
        )


class EnvelopeStamper:
    """Assigns per-stream sequence numbers within the current epoch.

    A reset bumps the epoch and restarts every stream's counter at 0.
    """

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.epoch = 0
        self._seq: dict[str, int] = {}

    def stamp(self, stream: str, t_ms: float, payload: dict) -> MeasureEnvelope:
        if stream not in STREAMS:
            raise ValueError(f"unknown stream {stream!r}")
        seq = self._seq.get(stream, 0)
        self._seq[stream] = seq + 1
        return MeasureEnvelope(
            v=PROTOCOL_VERSION,
            session=self.session_id,
            stream=stream,
            seq=seq,
            epoch=self.epoch,
            t_ms=t_ms,
            payload=payload,
        )

    def new_epoch(self) -> int:
        self.epoch += 1
        self._seq.clear()
        return self.epoch
