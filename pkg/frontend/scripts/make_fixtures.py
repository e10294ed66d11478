#!/usr/bin/env python3
"""Regenerate the fixtures that pin this dashboard to the core.

Two artifacts land in test/fixtures/:

* bridge_log.ndjson -- every bridge message a short two-user relaxation
  session produces, one JSON frame per line, exactly as the bridge would
  send them over the WebSocket. The view tests replay this log.
* default_avatar.json -- the core's stock avatar config, which the
  dashboard ships a transcription of.

Run from frontend/:  python3 scripts/make_fixtures.py
Needs the core installed (pip install -e .. --no-build-isolation).
"""

import json
import pathlib

from tobe.bridge import event_to_messages
from tobe.mapper import config_to_json, default_avatar_config
from tobe.session import SimulatedClock, load_session, run_session

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "test" / "fixtures"


def _frame(msg: dict) -> str:
    # byte-for-byte the serialization the bridge uses
    return json.dumps(msg, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def _session_doc() -> dict:
    def user(uid, bpm, seed):
        return {
            "user_id": uid,
            "sources": [
                {"generator": {"kind": "ecg", "bpm": bpm, "rsa_depth": 6.0,
                               "seed": seed}},
                {"generator": {"kind": "respiration", "period_s": 10.0,
                               "seed": seed + 50}},
            ],
            "metrics": ["HEART_RATE", "RESPIRATION", "CARDIAC_COHERENCE"],
        }

    # short but long enough that every widget gets data: coherence needs its
    # analysis window filled, and pair synchrony only exists during SYNC
    return {
        "protocol": {"phases": [
            {"phase": "GUIDED", "duration_s": 40.0},
            {"phase": "SOLO", "duration_s": 30.0},
            {"phase": "SYNC", "duration_s": 50.0},
        ]},
        "users": [user("ann", 66.0, 5), user("bob", 72.0, 6)],
    }


def write_bridge_log() -> None:
    lines = []
    for ev in run_session(load_session(_session_doc()), SimulatedClock()):
        lines.extend(_frame(m) for m in event_to_messages(ev))
    path = FIXTURES / "bridge_log.ndjson"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    kinds = {}
    for line in lines:
        k = json.loads(line)["type"]
        kinds[k] = kinds.get(k, 0) + 1
    print(f"{path.name}: {len(lines)} messages {kinds}")


def write_avatar_config() -> None:
    path = FIXTURES / "default_avatar.json"
    path.write_text(config_to_json(default_avatar_config()) + "\n",
                    encoding="utf-8")
    print(f"{path.name}: ok")


if __name__ == "__main__":
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_bridge_log()
    write_avatar_config()
