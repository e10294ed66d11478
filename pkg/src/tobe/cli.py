"""Command-line entry point.

    tobe synth <spec.yml> (--out FILE | --stream)
    tobe run <session.yml> [--bridge PORT] [--replay-clock] [--log FILE]
    tobe streams list
    tobe streams dump <name>
    tobe record <stream> <file> [--duration S]
    tobe replay <file> [--speed S] [--stream]

Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
130 interrupted. Event logs and dumps go to standard output; everything
informational goes to standard error so the output stays scriptable.
"""

from __future__ import annotations

import argparse
import signal
import sys
import time
from dataclasses import replace

import numpy as np
import yaml

from .errors import ConfigurationError, ContractError, StreamClosedError, TobeError
from .mapper import timeline_from_dict
from .session import (
    SimulatedClock,
    WallClock,
    _check_keys,
    _load_generator,
    _materialize,
    load_session_file,
    run_session,
)
from .synth import record_csv, replay_csv
from .transport import Inlet, Outlet, resolve_streams
from .types import SampleChunk


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tobe",
        description="Real-time physiological signal toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic signal")
    p.add_argument("spec", help="YAML generator spec")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--out", metavar="FILE", help="write a CSV recording")
    mode.add_argument("--stream", action="store_true",
                      help="serve as a live stream in real time")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run a session")
    p.add_argument("session", help="YAML session config")
    p.add_argument("--bridge", type=int, metavar="PORT",
                   help="serve the dashboard WebSocket bridge on this port")
    p.add_argument("--replay-clock", action="store_true",
                   help="simulated clock: run as fast as possible")
    p.add_argument("--log", metavar="FILE",
                   help="write the NDJSON event log here instead of stdout")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("streams", help="inspect live streams")
    action = p.add_subparsers(dest="action", required=True)
    lst = action.add_parser("list", help="list discovered streams")
    lst.add_argument("--timeout", type=float, default=2.0)
    lst.set_defaults(func=cmd_streams_list)
    dump = action.add_parser("dump", help="print a stream as CSV rows")
    dump.add_argument("name")
    dump.add_argument("--timeout", type=float, default=2.0)
    dump.add_argument("--duration", type=float,
                      help="stop after this many seconds (default: run until "
                           "interrupted)")
    dump.set_defaults(func=cmd_streams_dump)

    p = sub.add_parser("record", help="record a live stream to CSV")
    p.add_argument("stream", help="stream name to record")
    p.add_argument("file", help="output CSV path")
    p.add_argument("--duration", type=float,
                   help="stop after this many seconds")
    p.add_argument("--timeout", type=float, default=2.0)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="replay a CSV recording")
    p.add_argument("file")
    p.add_argument("--speed", type=float, default=1.0,
                   help="real-time multiplier; 0 = as fast as possible")
    p.add_argument("--stream", action="store_true",
                   help="serve as a live stream instead of printing rows")
    p.set_defaults(func=cmd_replay)

    return parser


# -- synth -------------------------------------------------------------------


def _read_yaml(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: expected a mapping document")
    return doc


def _load_synth_spec(path):
    doc = _read_yaml(path)
    _check_keys(doc, "", frozenset({"generator", "duration_s"}),
                frozenset({"name"}))
    duration = float(doc["duration_s"])
    if duration <= 0:
        raise ConfigurationError("duration_s must be > 0")
    source = _load_generator(doc["generator"], "generator", seed_fallback=0)
    name = str(doc.get("name", source.kind))
    return name, duration, source


def _iter_chunks(ts, xs, chunk_s=0.25):
    lo = 0
    while lo < len(ts):
        hi = int(np.searchsorted(ts, ts[lo] + chunk_s, side="left"))
        hi = max(hi, lo + 1)
        yield SampleChunk(ts[lo:hi], xs[lo:hi])
        lo = hi


def _serve(meta, chunks, *, speed: float = 0.0, linger_s: float = 0.5) -> int:
    """Push chunks through an outlet, pacing by timestamp when speed > 0."""
    outlet = Outlet(meta)
    print(f"serving {meta.name!r} ({meta.modality.value}, "
          f"{meta.nominal_rate:g} Hz) on port {outlet.port}", file=sys.stderr)
    try:
        start = time.monotonic()
        t_first = None
        for chunk in chunks:
            if speed > 0:
                if t_first is None:
                    t_first = float(chunk.timestamps[0])
                due = (float(chunk.timestamps[-1]) - t_first) / speed
                delay = due - (time.monotonic() - start)
                if delay > 0:
                    time.sleep(delay)
            outlet.push_chunk(chunk)
        time.sleep(linger_s)  # let subscribers finish draining
    finally:
        outlet.close()
    return 0


def cmd_synth(args) -> int:
    name, duration, source = _load_synth_spec(args.spec)
    meta, ts, xs = _materialize(source, name, duration)
    meta = replace(meta, name=name, source_id=f"synth-{name}")
    if args.out:
        n = record_csv(args.out, meta, [SampleChunk(ts, xs)])
        print(f"wrote {n} samples ({duration:g} s of {source.kind}) "
              f"to {args.out}", file=sys.stderr)
        return 0
    return _serve(meta, _iter_chunks(ts, xs), speed=1.0)


# -- run ---------------------------------------------------------------------


class _Controller:
    """Applies bridge control messages between session steps."""

    def __init__(self, bridge, clock, stop):
        self._bridge = bridge
        self._clock = clock
        self._stop = stop
        self._paused = False

    def __call__(self, t, mappers) -> bool:
        while True:
            if self._bridge is not None:
                for req in self._bridge.poll_control():
                    self._apply(req, mappers)
            if self._stop["flag"]:
                return False
            if not self._paused:
                return True
            time.sleep(0.05)

    def _apply(self, req, mappers):
        msg = req.message
        mtype = msg.get("type")
        try:
            if mtype == "session_command":
                self._session_command(msg.get("action"))
            elif mtype == "bind_request":
                self._bind(msg, self._mapper(msg, mappers))
            elif mtype == "timeline_upload":
                self._mapper(msg, mappers).add_timeline(
                    timeline_from_dict(msg.get("timeline"), "timeline"))
            elif mtype == "calibration_command":
                self._mapper(msg, mappers).reset()
            else:
                raise ConfigurationError(f"unknown control type {mtype!r}")
        except (ConfigurationError, ContractError) as exc:
            self._bridge.send_ack(req, False, str(exc))
        else:
            self._bridge.send_ack(req, True)

    def _session_command(self, action):
        if action == "stop":
            self._stop["flag"] = True
        elif action == "pause":
            self._paused = True
            if hasattr(self._clock, "pause"):
                self._clock.pause()
        elif action in ("start", "resume"):
            self._paused = False
            if hasattr(self._clock, "resume"):
                self._clock.resume()
        else:
            raise ConfigurationError(f"unknown action {action!r}")

    def _bind(self, msg, mapper):
        anchor = msg.get("anchor_id")
        timeline = msg.get("timeline_id")
        mode = msg.get("mode")
        duration = msg.get("duration_s")
        if timeline is None or mode is None:
            # a metric dragged onto an anchor inherits the anchor's current
            # timeline and playback mode unless the request overrides them
            current = next((b for b in mapper.config.bindings
                            if b.anchor_id == anchor), None)
            if current is None:
                raise ConfigurationError(
                    f"anchor {anchor!r} has no existing binding; "
                    f"the request must name timeline_id and mode")
            timeline = timeline if timeline is not None else current.timeline_id
            mode = mode if mode is not None else current.mode
            if duration is None:
                duration = current.duration_s
        mapper.bind(msg.get("metric_id"), anchor, timeline, mode, duration)

    @staticmethod
    def _mapper(msg, mappers):
        user = msg.get("user_id")
        if user not in mappers:
            raise ConfigurationError(f"unknown user {user!r}")
        return mappers[user]


def cmd_run(args) -> int:
    config = load_session_file(args.session)
    clock = SimulatedClock() if args.replay_clock else WallClock()

    bridge = None
    if args.bridge is not None:
        from .bridge import BridgeServer

        bridge = BridgeServer(port=args.bridge).start()
        print(f"bridge listening on ws://127.0.0.1:{bridge.port}/ws",
              file=sys.stderr)

    stop = {"flag": False, "code": 0}

    def on_sigint(signum, frame):
        stop["flag"] = True
        stop["code"] = 130

    old_handler = None
    try:
        old_handler = signal.signal(signal.SIGINT, on_sigint)
    except ValueError:
        pass  # not the main thread; Ctrl-C handling stays with the caller

    sink = open(args.log, "w", encoding="utf-8") if args.log else sys.stdout
    controller = _Controller(bridge, clock, stop)
    try:
        for ev in run_session(config, clock, control=controller):
            sink.write(ev.to_json() + "\n")
            if bridge is not None:
                bridge.publish_event(ev)
        sink.flush()
    finally:
        if old_handler is not None:
            signal.signal(signal.SIGINT, old_handler)
        if sink is not sys.stdout:
            sink.close()
        if bridge is not None:
            bridge.close()
    return stop["code"]


# -- streams / record / replay ----------------------------------------------


def _print_rows(chunk: SampleChunk):
    xs = np.atleast_2d(chunk.samples.T).T
    for t, row in zip(chunk.timestamps, xs):
        vals = ",".join(f"{float(v):.6g}" for v in np.atleast_1d(row))
        print(f"{float(t)!r},{vals}")


def cmd_streams_list(args) -> int:
    found = resolve_streams(None, timeout=args.timeout)
    for s in sorted(found, key=lambda s: s.name):
        print(f"{s.name}\t{s.modality.value}\t{s.nominal_rate:g} Hz\t"
              f"{len(s.channel_labels)} ch\t{s.host}:{s.port}\t{s.source_id}")
    if not found:
        print("no streams found", file=sys.stderr)
    return 0


def cmd_streams_dump(args) -> int:
    found = resolve_streams(args.name, timeout=args.timeout)
    if not found:
        print(f"error: stream {args.name!r} not found", file=sys.stderr)
        return 1
    inlet = Inlet(found[0])
    start = time.monotonic()
    try:
        while args.duration is None or time.monotonic() - start < args.duration:
            try:
                chunk = inlet.pull_chunk(max_wait=0.25)
            except StreamClosedError:
                return 0
            if chunk is not None:
                _print_rows(chunk)
                sys.stdout.flush()
    finally:
        inlet.close()
    return 0


def cmd_record(args) -> int:
    found = resolve_streams(args.stream, timeout=args.timeout)
    if not found:
        print(f"error: stream {args.stream!r} not found", file=sys.stderr)
        return 1
    inlet = Inlet(found[0])
    chunks: list[SampleChunk] = []
    code = 0
    start = time.monotonic()
    try:
        while args.duration is None or time.monotonic() - start < args.duration:
            try:
                chunk = inlet.pull_chunk(max_wait=0.25)
            except StreamClosedError:
                break
            if chunk is not None:
                chunks.append(chunk)
    except KeyboardInterrupt:
        code = 130
    finally:
        inlet.close()
    n = record_csv(args.file, inlet.meta, chunks)
    print(f"wrote {n} samples to {args.file}", file=sys.stderr)
    return code


def cmd_replay(args) -> int:
    meta, chunks = replay_csv(args.file, speed=args.speed)
    if args.stream:
        return _serve(meta, chunks)  # replay_csv already paces
    for chunk in chunks:
        _print_rows(chunk)
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
