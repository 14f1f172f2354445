"""Command-line entry points.

  gazestream serve    --config session.json [--port N]     start paused
  gazestream replay   --config session.json [--port N]     start streaming
  gazestream batch    --config session.json --out DIR      headless run
  gazestream validate --config session.json                check everything

Environment: GAZESTREAM_PORT and GAZESTREAM_LOG_LEVEL override the config;
explicit flags override both.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys

from ..errors import GazeStreamError
from .config import load_session_config
from .runtime import GazeServer, prepare_samples, run_batch



def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="session config JSON")
    p.add_argument("--session-id", help="override the session id")
    p.add_argument("--speed", help="replay speed multiplier or 'max'")
    p.add_argument("--ivt-threshold", type=float, help="I-VT velocity threshold, deg/s")
    p.add_argument("--min-fixation-ms", type=float, help="minimum fixation duration, ms")
    p.add_argument("--max-gap-ms", type=float, help="max classifier gap interpolation, ms")
    p.add_argument("--sg-window", type=int, help="Savitzky-Golay window (odd)")
    p.add_argument("--sg-order", type=int, help="Savitzky-Golay polynomial order")
    p.add_argument("--baseline-ms", type=float, help="pupil baseline window, ms")
    p.add_argument("--gap-ms", type=float, help="max pupil gap interpolation, ms")
    p.add_argument(
        "--exclude-self",
        action="store_true",
        default=None,
        help="exclude self-transitions from the transition matrix",
    )
    p.add_argument("--log-level", help="logging level (default WARNING)")


def _overrides(args: argparse.Namespace, env: dict) -> dict:
    speed = args.speed
    if speed is not None and speed.lower() != "max":
        speed = float(speed)
    port = getattr(args, "port", None)
    if port is None and "GAZESTREAM_PORT" in env:
        port = int(env["GAZESTREAM_PORT"])
    return {
        "session_id": args.session_id,
        "port": port,
        "replay.speed": speed,
        "ivt.velocity_threshold": args.ivt_threshold,
        "ivt.min_fixation_duration": args.min_fixation_ms,
        "ivt.max_gap_interpolation": args.max_gap_ms,
        "pupil.sg_window": args.sg_window,
        "pupil.sg_order": args.sg_order,
        "pupil.baseline_ms": args.baseline_ms,
        "pupil.gap_ms": args.gap_ms,
        "exclude_self_transitions": args.exclude_self,
    }


async def _serve(cfg, autostart: bool) -> None:
    server = GazeServer(cfg, autostart=autostart)
    await server.start()
    print(f"session {cfg.session_id!r} on ws://{server.host}:{server.port}", flush=True)
    try:
        await server.wait()
    finally:
        await server.stop()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gazestream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (
        ("serve", "serve the session over websocket, starting paused"),
        ("replay", "serve the session and start streaming immediately"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        p.add_argument("--port", type=int, help="websocket port")

    p = sub.add_parser("batch", help="headless run writing JSONL files")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("validate", help="validate the config and input file")
    _add_common(p)

    args = parser.parse_args(argv)
    level = args.log_level or os.environ.get("GAZESTREAM_LOG_LEVEL", "WARNING")
    logging.basicConfig(level=getattr(logging, level.upper(), logging.WARNING))

    try:
        cfg = load_session_config(args.config, _overrides(args, os.environ))
        if args.command in ("serve", "replay"):
            asyncio.run(_serve(cfg, autostart=args.command == "replay"))
        elif args.command == "batch":
            summary = run_batch(cfg, args.out, session_id=args.session_id)
            print(json.dumps(summary, indent=2))
        elif args.command == "validate":
            samples = prepare_samples(cfg)
            valid = sum(1 for s in samples if s.valid)
            span = (samples[-1].t - samples[0].t) / 1000.0
            print(f"config ok: session {cfg.session_id!r}")
            print(f"input: {cfg.input_path} ({len(samples)} samples, {valid} valid, {span:.2f} s)")
            print(f"streams: {', '.join(sorted(cfg.streams))}")
            print(f"aois: {len(cfg.aois)}  replay speed: {cfg.replay_speed}")
    except GazeStreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
