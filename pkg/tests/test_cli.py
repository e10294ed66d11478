"""Command-line surface: argument handling, exit codes, files and pipes.

Slower tests here stand up real outlets and speak to the CLI over the
loopback discovery port, so each one pins TOBE_DISCOVERY_PORT to its own
port (17120+) to stay isolated from the transport tests and each other.
"""

import asyncio
import json
import signal
import threading
import time

import numpy as np
import pytest
import yaml

from tobe.cli import main
from tobe.errors import StreamClosedError
from tobe.synth import read_recording, record_csv
from tobe.transport import Inlet, Outlet, resolve_streams
from tobe.types import Modality, SampleChunk, StreamMeta


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return str(path)


def ecg_spec_doc(name="ecg-demo", duration=4.0, **over):
    gen = {"kind": "ecg", "bpm": 72.0, "seed": 5}
    gen.update(over)
    doc = {"duration_s": duration, "generator": gen}
    if name is not None:
        doc["name"] = name
    return doc


def solo_doc(duration=12.0):
    return {
        "duration_s": duration,
        "users": [{
            "user_id": "solo",
            "sources": [{"generator": {"kind": "ecg", "bpm": 66.0,
                                       "seed": 9}}],
            "metrics": ["HEART_RATE"],
        }],
    }


def sine_meta(name, rate=250.0):
    return StreamMeta(name=name, modality=Modality.ECG,
                      channel_labels=("ECG",), nominal_rate=rate,
                      unit="uV", source_id=f"test-{name}")


def sine_chunks(duration, rate=250.0, chunk_s=0.25):
    ts = np.arange(int(round(duration * rate))) / rate
    xs = np.sin(2 * np.pi * 1.3 * ts).astype(np.float32)[:, None]
    step = int(round(chunk_s * rate))
    return [SampleChunk(ts[i:i + step], xs[i:i + step])
            for i in range(0, len(ts), step)]


class TestUsage:
    def test_no_arguments_is_a_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_synth_requires_an_output_mode(self, tmp_path):
        spec = write_yaml(tmp_path / "s.yml", ecg_spec_doc())
        with pytest.raises(SystemExit) as err:
            main(["synth", spec])
        assert err.value.code == 2

    def test_synth_rejects_both_output_modes(self, tmp_path):
        spec = write_yaml(tmp_path / "s.yml", ecg_spec_doc())
        with pytest.raises(SystemExit) as err:
            main(["synth", spec, "--out", str(tmp_path / "o.csv"),
                  "--stream"])
        assert err.value.code == 2


class TestSynth:
    def test_writes_recording(self, tmp_path, capsys):
        spec = write_yaml(tmp_path / "s.yml", ecg_spec_doc())
        out = tmp_path / "ecg.csv"
        assert main(["synth", spec, "--out", str(out)]) == 0
        meta, ts, xs = read_recording(out)
        assert meta.name == "ecg-demo"
        assert meta.modality is Modality.ECG
        assert meta.nominal_rate == 250.0
        assert len(ts) == 1000 and xs.shape == (1000, 1)
        assert "1000 samples" in capsys.readouterr().err

    def test_name_defaults_to_generator_kind(self, tmp_path):
        spec = write_yaml(tmp_path / "s.yml", ecg_spec_doc(name=None))
        out = tmp_path / "o.csv"
        assert main(["synth", spec, "--out", str(out)]) == 0
        meta, _, _ = read_recording(out)
        assert meta.name == "ecg"

    def test_out_of_range_bpm_is_cited(self, tmp_path, capsys):
        spec = write_yaml(tmp_path / "bad.yml", ecg_spec_doc(bpm=300))
        assert main(["synth", spec, "--out", str(tmp_path / "o.csv")]) == 2
        err = capsys.readouterr().err
        assert "bpm" in err and "300" in err

    def test_unknown_generator_parameter_is_named(self, tmp_path, capsys):
        spec = write_yaml(tmp_path / "bad.yml", ecg_spec_doc(warp=9))
        assert main(["synth", spec, "--out", str(tmp_path / "o.csv")]) == 2
        assert "warp" in capsys.readouterr().err

    def test_unknown_generator_kind(self, tmp_path, capsys):
        doc = {"duration_s": 2.0, "generator": {"kind": "theremin"}}
        spec = write_yaml(tmp_path / "bad.yml", doc)
        assert main(["synth", spec, "--out", str(tmp_path / "o.csv")]) == 2
        assert "theremin" in capsys.readouterr().err

    def test_missing_spec_file(self, tmp_path, capsys):
        rc = main(["synth", str(tmp_path / "nope.yml"),
                   "--out", str(tmp_path / "o.csv")])
        assert rc == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_invalid_yaml(self, tmp_path, capsys):
        path = tmp_path / "bad.yml"
        path.write_text("generator: [oops\n", encoding="utf-8")
        assert main(["synth", str(path), "--out", str(tmp_path / "o.csv")]) == 2
        assert "YAML" in capsys.readouterr().err

    def test_non_mapping_document(self, tmp_path, capsys):
        path = tmp_path / "bad.yml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        assert main(["synth", str(path), "--out", str(tmp_path / "o.csv")]) == 2
        assert "mapping" in capsys.readouterr().err

    def test_zero_duration(self, tmp_path, capsys):
        spec = write_yaml(tmp_path / "bad.yml", ecg_spec_doc(duration=0.0))
        assert main(["synth", spec, "--out", str(tmp_path / "o.csv")]) == 2
        assert "duration_s" in capsys.readouterr().err

    def test_unknown_top_level_key(self, tmp_path, capsys):
        doc = ecg_spec_doc()
        doc["flavor"] = "minty"
        spec = write_yaml(tmp_path / "bad.yml", doc)
        assert main(["synth", spec, "--out", str(tmp_path / "o.csv")]) == 2
        assert "flavor" in capsys.readouterr().err

    def test_stream_serves_in_real_time(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TOBE_DISCOVERY_PORT", "17120")
        spec = write_yaml(tmp_path / "s.yml",
                          ecg_spec_doc(name="ecg-live", duration=1.6))
        box = {}

        def serve():
            box["rc"] = main(["synth", spec, "--stream"])

        th = threading.Thread(target=serve)
        th.start()
        try:
            found = resolve_streams("ecg-live", timeout=1.3)
            assert found, "served stream was never discovered"
            inlet = Inlet(found[0])
            got = 0
            try:
                while True:
                    try:
                        chunk = inlet.pull_chunk(max_wait=0.5)
                    except StreamClosedError:
                        break
                    if chunk is not None:
                        got += len(chunk.timestamps)
            finally:
                inlet.close()
        finally:
            th.join(timeout=10.0)
        assert not th.is_alive()
        assert box["rc"] == 0
        assert got == 400  # 1.6 s at 250 Hz


class TestRun:
    def test_replay_clock_run_is_deterministic(self, tmp_path):
        sess = write_yaml(tmp_path / "s.yml", solo_doc(12.0))
        logs = []
        for name in ("a.ndjson", "b.ndjson"):
            log = tmp_path / name
            assert main(["run", sess, "--replay-clock",
                         "--log", str(log)]) == 0
            logs.append(log.read_bytes())
        assert logs[0] == logs[1]
        lines = [json.loads(x) for x in logs[0].decode().splitlines()]
        assert lines[0]["kind"] == "session_start"
        assert lines[-1]["kind"] == "session_end"
        kinds = {ev["kind"] for ev in lines}
        assert {"metric", "beat", "render"} <= kinds

    def test_event_log_goes_to_stdout_by_default(self, tmp_path, capsys):
        sess = write_yaml(tmp_path / "s.yml", solo_doc(6.0))
        assert main(["run", sess, "--replay-clock"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert json.loads(out[0])["kind"] == "session_start"
        assert json.loads(out[-1])["kind"] == "session_end"

    def test_missing_session_file(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.yml")]) == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_invalid_session_config(self, tmp_path, capsys):
        sess = write_yaml(tmp_path / "s.yml", {"duration_s": 10.0})
        assert main(["run", sess]) == 2
        assert "users" in capsys.readouterr().err

    def test_interrupt_flushes_log_and_exits_130(self, tmp_path):
        # wall-clock run interrupted shortly after the start: the log must
        # still be complete (ends in session_end) and the exit code is 130
        sess = write_yaml(tmp_path / "s.yml", solo_doc(30.0))
        log = tmp_path / "log.ndjson"
        timer = threading.Timer(0.6, signal.raise_signal, [signal.SIGINT])
        timer.start()
        try:
            rc = main(["run", sess, "--log", str(log)])
        finally:
            timer.cancel()
        assert rc == 130
        lines = [json.loads(x) for x in log.read_text().splitlines()]
        assert lines[0]["kind"] == "session_start"
        assert lines[-1]["kind"] == "session_end"
        assert lines[-1]["t"] < 30.0


class TestStreams:
    def test_list_with_nothing_up(self, monkeypatch, capsys):
        monkeypatch.setenv("TOBE_DISCOVERY_PORT", "17121")
        assert main(["streams", "list", "--timeout", "0.3"]) == 0
        captured = capsys.readouterr()
        assert captured.out == ""
        assert "no streams found" in captured.err

    def test_list_shows_stream_details(self, monkeypatch, capsys):
        monkeypatch.setenv("TOBE_DISCOVERY_PORT", "17122")
        outlet = Outlet(sine_meta("alpha-cap"))
        try:
            assert main(["streams", "list", "--timeout", "1.3"]) == 0
        finally:
            outlet.close()
        line = capsys.readouterr().out.splitlines()[0]
        fields = line.split("\t")
        assert fields[0] == "alpha-cap"
        assert fields[1] == "ECG"
        assert fields[2] == "250 Hz"
        assert fields[3] == "1 ch"
        assert fields[5] == "test-alpha-cap"

    def test_dump_unknown_stream(self, monkeypatch, capsys):
        monkeypatch.setenv("TOBE_DISCOVERY_PORT", "17123")
        assert main(["streams", "dump", "ghost", "--timeout", "0.3"]) == 1
        assert "not found" in capsys.readouterr().err

    def test_dump_prints_csv_rows(self, monkeypatch, capsys):
        monkeypatch.setenv("TOBE_DISCOVERY_PORT", "17124")
        outlet = Outlet(sine_meta("sine"))
        for chunk in sine_chunks(1.0):
            outlet.push_chunk(chunk)
        try:
            rc = main(["streams", "dump", "sine",
                       "--duration", "1.0", "--timeout", "1.3"])
        finally:
            outlet.close()
        assert rc == 0
        rows = capsys.readouterr().out.splitlines()
        assert len(rows) == 250  # 1 s of backlog at 250 Hz
        t0, v0 = rows[0].split(",")
        assert float(t0) == 0.0
        assert abs(float(v0) - np.sin(0.0)) < 1e-6
        t_last = float(rows[-1].split(",")[0])
        assert t_last == pytest.approx(249 / 250.0)


class TestRecordReplay:
    def test_record_then_flat_replay(self, monkeypatch, tmp_path, capsys):
        monkeypatch.setenv("TOBE_DISCOVERY_PORT", "17125")
        outlet = Outlet(sine_meta("cap"))
        for chunk in sine_chunks(1.5):
            outlet.push_chunk(chunk)
        path = tmp_path / "cap.csv"
        try:
            rc = main(["record", "cap", str(path),
                       "--duration", "1.0", "--timeout", "1.3"])
        finally:
            outlet.close()
        assert rc == 0
        meta, ts, xs = read_recording(path)
        assert meta.name == "cap"
        assert meta.nominal_rate == 250.0
        assert len(ts) == 375
        assert "375 samples" in capsys.readouterr().err

        assert main(["replay", str(path), "--speed", "0"]) == 0
        rows = capsys.readouterr().out.splitlines()
        assert len(rows) == 375
        assert all(len(r.split(",")) == 2 for r in rows)
        assert float(rows[0].split(",")[0]) == ts[0]

    def test_replay_missing_file(self, tmp_path, capsys):
        assert main(["replay", str(tmp_path / "nope.csv")]) == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_replay_rejects_foreign_file(self, tmp_path, capsys):
        path = tmp_path / "junk.csv"
        path.write_text("hello\n", encoding="utf-8")
        assert main(["replay", str(path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_replay_restream_round_trip(self, monkeypatch, tmp_path):
        monkeypatch.setenv("TOBE_DISCOVERY_PORT", "17126")
        path = tmp_path / "cap.csv"
        record_csv(path, sine_meta("cap"), sine_chunks(2.0))
        box = {}

        def serve():
            box["rc"] = main(["replay", str(path), "--stream"])

        th = threading.Thread(target=serve)
        th.start()
        try:
            found = resolve_streams("cap", timeout=1.3)
            assert found, "replayed stream was never discovered"
            inlet = Inlet(found[0])
            got = 0
            try:
                while True:
                    try:
                        chunk = inlet.pull_chunk(max_wait=0.5)
                    except StreamClosedError:
                        break
                    if chunk is not None:
                        got += len(chunk.timestamps)
            finally:
                inlet.close()
        finally:
            th.join(timeout=10.0)
        assert not th.is_alive()
        assert box["rc"] == 0
        assert got == 500  # the full 2 s recording at 250 Hz


class TestRunWithBridge:
    def test_bridge_streams_events_and_applies_control(self, tmp_path):
        import websockets

        sess = write_yaml(tmp_path / "s.yml", solo_doc(120.0))
        log = tmp_path / "log.ndjson"
        box = {}

        def runner():
            box["rc"] = main(["run", sess, "--replay-clock",
                              "--bridge", "18803", "--log", str(log)])

        th = threading.Thread(target=runner)
        th.start()

        async def drive():
            ws = None
            for _ in range(100):
                try:
                    ws = await websockets.connect("ws://127.0.0.1:18803/ws")
                    break
                except OSError:
                    await asyncio.sleep(0.05)
            assert ws is not None, "bridge never came up"
            acks, seen = {}, set()

            async def send(obj):
                await ws.send(json.dumps(obj))

            async def pump(until):
                deadline = time.monotonic() + 20.0
                while not until() and time.monotonic() < deadline:
                    msg = json.loads(
                        await asyncio.wait_for(ws.recv(), timeout=10.0))
                    if msg["type"] == "ack":
                        acks[msg["id"]] = msg
                    else:
                        seen.add(msg["type"])

            await send({"type": "timeline_upload", "id": "c1",
                        "user_id": "solo", "timeline": {
                            "id": "wobble", "sprite": "leaf", "keys": [
                                {"phase": 0.0, "sx": 1.0, "sy": 1.0,
                                 "rot": 0.0, "tx": 0.0, "ty": 0.0},
                                {"phase": 1.0, "sx": 1.3, "sy": 0.8,
                                 "rot": 0.0, "tx": 0.0, "ty": 4.0}]}})
            await send({"type": "bind_request", "id": "c2", "user_id": "solo",
                        "metric_id": "HEART_RATE", "anchor_id": "chest",
                        "timeline_id": "wobble", "mode": "CONTINUOUS"})
            await send({"type": "bind_request", "id": "c3", "user_id": "ghost",
                        "metric_id": "HEART_RATE", "anchor_id": "chest"})
            await send({"type": "calibration_command", "id": "c4",
                        "user_id": "solo"})
            await pump(lambda: len(acks) >= 4
                       and {"render", "metric"} <= seen)
            await send({"type": "session_command", "id": "c5",
                        "action": "stop"})
            await pump(lambda: "c5" in acks)
            try:
                while True:
                    msg = json.loads(
                        await asyncio.wait_for(ws.recv(), timeout=5.0))
                    if msg["type"] != "ack":
                        seen.add(msg["type"])
            except websockets.ConnectionClosed:
                pass
            return acks, seen

        try:
            acks, seen = asyncio.run(drive())
        finally:
            th.join(timeout=15.0)
        assert not th.is_alive()
        assert box["rc"] == 0

        assert acks["c1"]["ok"] is True
        assert acks["c2"]["ok"] is True
        assert acks["c3"]["ok"] is False and "ghost" in acks["c3"]["error"]
        assert acks["c4"]["ok"] is True
        assert acks["c5"]["ok"] is True
        assert {"render", "metric"} <= seen

        lines = [json.loads(x) for x in log.read_text().splitlines()]
        assert lines[-1]["kind"] == "session_end"
        assert lines[-1]["t"] < 120.0  # stopped well short of the config
