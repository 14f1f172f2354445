"""Live session orchestration and the websocket publish/subscribe layer.

One asyncio task replays samples through the analytics pipeline in stream
order; envelopes fan out to subscribers over bounded queues. Publishing
never blocks: a subscriber whose queue overflows is disconnected instead
of stalling the pipeline. Control commands (pause/resume/set_speed/reset/
status) are serialized onto the session's command queue, so measure state
is never mutated concurrently.

Wire protocol (websocket, one JSON object per message):
  client -> server:  {"subscribe": ["ripa", "kcoef"]}   ("*" for all)
                     {"control": {"cmd": "pause"}}
                     {"control": {"cmd": "set_speed", "speed": 2}}
  server -> client:  {"subscribed": [...]} / {"error": ...} replies,
                     then MeasureEnvelope objects for subscribed streams.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
import math
import time
from collections import defaultdict
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Union

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from ..errors import ConfigError
from ..ingest import ReplayClock, parse
from .config import SessionConfig
from .envelope import STREAMS, EnvelopeStamper, MeasureEnvelope
from .pipeline import AnalyticsPipeline

log = logging.getLogger("gazestream.server")


def _wire_speed(speed: float):
    """Replay speed as it appears on the wire: MAX_SPEED becomes "max"."""
    return "max" if math.isinf(speed) else speed


def prepare_samples(cfg: SessionConfig):
    """Parse the configured input; raises before any session state exists."""
    return parse(cfg.input_path, cfg.column_map, bad_row_budget=cfg.bad_row_budget)


class Subscriber:
    _ids = itertools.count()

    def __init__(self, capacity: int):
        self.id = next(self._ids)
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=capacity)
        self.streams: Optional[set[str]] = None  # None until the first subscribe
        self.dead = False

    def wants(self, stream: str) -> bool:
        return not self.dead and self.streams is not None and stream in self.streams

    def set_streams(self, names) -> set[str]:
        if not isinstance(names, list):
            raise ValueError("subscribe expects a list of stream names")
        requested = set(names)
        if "*" in requested:
            resolved = set(STREAMS)
        else:
            unknown = requested - set(STREAMS)
            if unknown:
                raise ValueError(f"unknown streams: {sorted(unknown)}")
            resolved = requested
        self.streams = resolved
        return resolved


class Hub:
    """Non-blocking fan-out with per-subscriber bounded queues."""

    def __init__(self):
        self._subs: list[Subscriber] = []

    def register(self, capacity: int) -> Subscriber:
        sub = Subscriber(capacity)
        self._subs.append(sub)
        return sub

    def unregister(self, sub: Subscriber) -> None:
        if sub in self._subs:
            self._subs.remove(sub)

    def publish(self, env: MeasureEnvelope) -> None:
        # Serialize once, up front: a serialization failure is a bug that
        # must surface in the pipeline task, never a silent per-subscriber
        # drop - and it spares re-encoding per subscriber.
        wire = env.to_json()
        for sub in self._subs:
            if not sub.wants(env.stream):
                continue
            try:
                sub.queue.put_nowait((env, wire))
            except asyncio.QueueFull:
                # Slow consumer: cut it loose rather than stall the pipeline.
                sub.dead = True
                log.warning("subscriber %d dropped: queue overflow", sub.id)


class Session:
    """One replayed recording plus all of its measure state."""

    def __init__(self, cfg: SessionConfig, samples, hub: Hub, autostart: bool = False):
        if not samples:
            raise ConfigError("session has no samples")
        self.cfg = cfg
        self.samples = samples
        self.hub = hub
        self.stamper = EnvelopeStamper(cfg.session_id)
        self.pipeline = AnalyticsPipeline(cfg)
        self.clock = ReplayClock(cfg.replay_speed)
        self.cmd_q: asyncio.Queue = asyncio.Queue()
        self.state = "running" if autostart else "paused"
        self._idx = 0
        self._pos_ms = samples[0].t
        self._started = False
        self._paused_at: Optional[float] = None
        self._pause_pos: Optional[float] = None

    # -- plumbing --------------------------------------------------------

    def submit(self, cmd) -> None:
        self.cmd_q.put_nowait(cmd if isinstance(cmd, dict) else {"cmd": cmd})

    def _emit(self, stream: str, t_ms: float, payload: dict) -> None:
        if stream not in self.cfg.streams:
            return
        self.hub.publish(self.stamper.stamp(stream, t_ms, payload))

    def _emit_records(self, records) -> None:
        for stream, t_ms, payload in records:
            self._emit(stream, t_ms, payload)

    def _control(self, payload: dict) -> None:
        self._emit("control", self._pos_ms, payload)

    # -- main loop ---------------------------------------------------------

    async def run(self) -> None:
        while True:
            while True:
                try:
                    self._handle(self.cmd_q.get_nowait())
                except asyncio.QueueEmpty:
                    break
            if self.state in ("paused", "done"):
                self._handle(await self.cmd_q.get())
                continue

            if self._idx >= len(self.samples):
                self._emit_records(self.pipeline.finish())
                self._control({"event": "finished"})
                self.state = "done"
                continue

            sample = self.samples[self._idx]
            if not self._started:
                self.clock.anchor(sample.t)
                self._started = True
                self._control({"event": "started"})
            if not math.isinf(self.clock.speed):
                if await self._wait_for_slot(sample.t):
                    continue  # a command changed state; re-evaluate
            elif self._idx % 32 == 0:
                await asyncio.sleep(0)
            self._emit_records(self.pipeline.feed(sample))
            self._pos_ms = sample.t
            self._idx += 1

    async def _wait_for_slot(self, t_ms: float) -> bool:
        """Sleep until the sample's target wall time, staying responsive to
        commands. Returns True if a command interrupted pacing - any command
        may have moved the stream position (reset), the clock (set_speed) or
        the state (pause), so the caller must re-evaluate from scratch."""
        delay = self.clock.target_wall(t_ms) - time.monotonic()
        if delay <= 0:
            return False
        try:
            cmd = await asyncio.wait_for(self.cmd_q.get(), timeout=delay)
        except asyncio.TimeoutError:
            return False
        self._handle(cmd)
        return True

    # -- control commands --------------------------------------------------

    def _handle(self, cmd: dict) -> None:
        name = cmd.get("cmd") if isinstance(cmd, dict) else None
        if name == "pause":
            self._do_pause()
        elif name == "resume":
            self._do_resume()
        elif name == "set_speed":
            self._do_set_speed(cmd.get("speed"))
        elif name == "reset":
            self._do_reset()
        elif name == "status":
            self._control(
                {
                    "cmd": "status",
                    "ok": True,
                    "state": self.state,
                    "index": self._idx,
                    "total": len(self.samples),
                    "t_ms": self._pos_ms,
                    "speed": _wire_speed(self.clock.speed),
                    "epoch": self.stamper.epoch,
                }
            )
        else:
            self._control({"cmd": name, "ok": False, "error": f"unknown command {name!r}"})

    def _do_pause(self) -> None:
        if self.state == "running":
            self.state = "paused"
            self._paused_at = time.monotonic()
            self._pause_pos = (
                self.clock.stream_position(self._paused_at)
                if not math.isinf(self.clock.speed) and self._started
                else self._next_pos()
            )
        self._control({"cmd": "pause", "ok": True, "state": self.state})

    def _do_resume(self) -> None:
        if self.state == "paused":
            self.state = "running"
            if self._started and self._paused_at is not None:
                self.clock.shift_epoch(time.monotonic() - self._paused_at)
            self._paused_at = None
            self._pause_pos = None
        self._control({"cmd": "resume", "ok": True, "state": self.state})

    def _do_set_speed(self, speed) -> None:
        try:
            if isinstance(speed, str) and speed.lower() == "max":
                speed = math.inf
            speed = float(speed)
            if not speed > 0:
                raise ValueError
        except (TypeError, ValueError):
            self._control({"cmd": "set_speed", "ok": False, "error": f"invalid speed {speed!r}"})
            return
        if not self._started:
            self.clock = ReplayClock(speed)
        elif self.state == "paused":
            self.clock.rebase(speed, stream_ms=self._pause_pos, wall=self._paused_at)
        elif math.isinf(self.clock.speed):
            self.clock.rebase(speed, stream_ms=self._next_pos())
        else:
            self.clock.rebase(speed)
        self._control({"cmd": "set_speed", "ok": True, "speed": _wire_speed(speed)})

    def _do_reset(self) -> None:
        self.pipeline = AnalyticsPipeline(self.cfg)
        epoch = self.stamper.new_epoch()
        self._idx = 0
        self._pos_ms = self.samples[0].t
        self._started = False
        self._paused_at = None
        self._pause_pos = None
        if self.state == "done":
            self.state = "paused"
        self._control({"cmd": "reset", "ok": True, "epoch": epoch, "state": self.state})

    def _next_pos(self) -> float:
        if self._idx < len(self.samples):
            return self.samples[self._idx].t
        return self._pos_ms


def _log_session_crash(task: asyncio.Task) -> None:
    if task.cancelled():
        return
    exc = task.exception()
    if exc is not None:
        log.error("session task died: %r", exc)


class GazeServer:
    """Websocket front end for one session."""

    def __init__(
        self,
        cfg: SessionConfig,
        autostart: bool = False,
        host: str = "127.0.0.1",
        port: Optional[int] = None,
        sock=None,
    ):
        self.cfg = cfg
        self.autostart = autostart
        self.host = host
        self.port = cfg.port if port is None else port
        self.sock = sock  # pre-bound listening socket overrides host/port
        self.hub = Hub()
        self.session: Optional[Session] = None
        self._server = None
        self._session_task: Optional[asyncio.Task] = None

    async def start(self) -> "GazeServer":
        samples = prepare_samples(self.cfg)
        self.session = Session(self.cfg, samples, self.hub, autostart=self.autostart)
        if self.sock is not None:
            self._server = await serve(self._handler, sock=self.sock)
        else:
            self._server = await serve(self._handler, self.host, self.port)
        self.port = next(
            sock.getsockname()[1] for sock in self._server.sockets
        )
        self._session_task = asyncio.create_task(self.session.run())
        self._session_task.add_done_callback(_log_session_crash)
        log.info("session %s on ws://%s:%d", self.cfg.session_id, self.host, self.port)
        return self

    async def wait(self) -> None:
        """Block until the session task ends (it normally runs until the
        server is stopped, staying alive for resets after the stream ends)."""
        if self._session_task is not None:
            await self._session_task

    async def stop(self) -> None:
        if self._session_task is not None:
            self._session_task.cancel()
            try:
                await self._session_task
            except asyncio.CancelledError:
                pass
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def __aenter__(self) -> "GazeServer":
        return await self.start()

    async def __aexit__(self, *exc) -> None:
        await self.stop()

    async def _handler(self, ws) -> None:
        sub = self.hub.register(self.cfg.queue_capacity)
        pump = asyncio.create_task(self._pump(sub, ws))
        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send(json.dumps({"error": "invalid json"}))
                    continue
                if not isinstance(msg, dict):
                    await ws.send(json.dumps({"error": "expected a json object"}))
                elif "subscribe" in msg:
                    try:
                        resolved = sub.set_streams(msg["subscribe"])
                    except ValueError as exc:
                        await ws.send(json.dumps({"error": str(exc)}))
                    else:
                        await ws.send(json.dumps({"subscribed": sorted(resolved)}))
                elif "control" in msg:
                    self.session.submit(msg["control"])
                else:
                    await ws.send(json.dumps({"error": "expected subscribe or control"}))
        except ConnectionClosed:
            pass
        finally:
            pump.cancel()
            try:
                await pump
            except asyncio.CancelledError:
                pass
            self.hub.unregister(sub)

    @staticmethod
    async def _pump(sub: Subscriber, ws) -> None:
        try:
            while True:
                _, wire = await sub.queue.get()
                if sub.dead:
                    await ws.close(code=1013, reason="subscriber too slow")
                    return
                await ws.send(wire)
        except ConnectionClosed:
            pass


def run_batch(
    cfg: SessionConfig,
    out_dir: Union[str, Path],
    session_id: Optional[str] = None,
) -> dict:
    """Headless run: the exact envelopes a MAX-speed live session would
    publish, written as one JSONL file per enabled stream, plus a summary.

    Deterministic for a fixed input, config and session id.
    """
    sid = session_id or cfg.session_id
    samples = prepare_samples(cfg)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out_dir} ({exc})")

    stamper = EnvelopeStamper(sid)
    pipeline = AnalyticsPipeline(cfg)
    counts: dict[str, int] = defaultdict(int)
    files = {
        stream: (out_dir / f"{stream}.jsonl").open("w")
        for stream in STREAMS
        if stream in cfg.streams
    }

    def emit(stream: str, t_ms: float, payload: dict) -> None:
        if stream not in cfg.streams:
            return
        env = stamper.stamp(stream, t_ms, payload)
        files[stream].write(env.to_json() + "\n")
        counts[stream] += 1

    try:
        emit("control", samples[0].t, {"event": "started"})
        for sample in samples:
            for record in pipeline.feed(sample):
                emit(*record)
        for record in pipeline.finish():
            emit(*record)
        emit("control", samples[-1].t, {"event": "finished"})
    finally:
        for fh in files.values():
            fh.close()

    transitions = pipeline.transitions.snapshot()
    fit = pipeline.mainseq.fit()
    summary = {
        "session": sid,
        "samples": len(samples),
        "envelopes": dict(sorted(counts.items())),
        "positional": asdict(pipeline.positional.snapshot()),
        "entropies": {
            "h_stationary": transitions.h_stationary,
            "h_transition": transitions.h_transition,
        },
        "mainseq": asdict(fit) if fit is not None else None,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
