"""Bridge server: fan-out, /ws routing, control acks, slow-client policy."""

import asyncio
import json
import time

import pytest

from tobe.bridge import BridgeServer, event_to_messages
from tobe.session import SessionEvent


@pytest.fixture
def server():
    srv = BridgeServer(port=0).start()
    yield srv
    srv.close()


def url(server, path="/ws"):
    return f"ws://127.0.0.1:{server.port}{path}"


class TestEventTranslation:
    def test_metric(self):
        ev = SessionEvent(3.0, "metric", "ann", {
            "metric_id": "HEART_RATE", "raw": 71.0, "normalized": 0.42,
            "visibility_level": 2})
        assert event_to_messages(ev) == [{
            "type": "metric", "t": 3.0, "user_id": "ann",
            "metric_id": "HEART_RATE", "raw": 71.0, "normalized": 0.42}]

    def test_render(self):
        payload = {"avatar_id": "a", "items": []}
        ev = SessionEvent(1.0, "render", "bob", payload)
        assert event_to_messages(ev) == [{
            "type": "render", "t": 1.0, "user_id": "bob", "frame": payload}]

    def test_phase_becomes_protocol(self):
        ev = SessionEvent(300.0, "phase", None,
                          {"phase_id": "SOLO", "index": 1, "duration_s": 300.0})
        assert event_to_messages(ev) == [
            {"type": "protocol", "t": 300.0, "phase_id": "SOLO"}]

    def test_gauge(self):
        ev = SessionEvent(2.4, "gauge", None,
                          {"level": 0.48, "direction": "RISING"})
        assert event_to_messages(ev) == [
            {"type": "gauge", "t": 2.4, "level": 0.48}]

    def test_beat(self):
        ev = SessionEvent(1.7, "beat", "ann", {})
        assert event_to_messages(ev) == [
            {"type": "beat", "t": 1.7, "user_id": "ann"}]

    def test_internal_kinds_stay_internal(self):
        for kind in ("session_start", "session_end", "blink", "degraded"):
            assert event_to_messages(SessionEvent(0.0, kind, None, {})) == []


class TestFanout:
    def test_publish_reaches_client(self, server):
        import websockets

        async def scenario():
            async with websockets.connect(url(server)) as ws:
                server.publish({"type": "gauge", "t": 1.0, "level": 0.5})
                raw = await asyncio.wait_for(ws.recv(), timeout=2.0)
            return json.loads(raw)

        msg = asyncio.run(scenario())
        assert msg == {"type": "gauge", "t": 1.0, "level": 0.5}

    def test_publish_latency_under_200ms(self, server):
        import websockets

        async def scenario():
            async with websockets.connect(url(server)) as ws:
                t0 = time.monotonic()
                server.publish({"type": "gauge", "t": 0.0, "level": 0.0})
                await asyncio.wait_for(ws.recv(), timeout=2.0)
                return time.monotonic() - t0

        assert asyncio.run(scenario()) < 0.2

    def test_two_clients_both_receive(self, server):
        import websockets

        async def scenario():
            async with websockets.connect(url(server)) as a, \
                    websockets.connect(url(server)) as b:
                server.publish({"type": "beat", "t": 1.0, "user_id": "x"})
                got_a = json.loads(await asyncio.wait_for(a.recv(), 2.0))
                got_b = json.loads(await asyncio.wait_for(b.recv(), 2.0))
            return got_a, got_b

        got_a, got_b = asyncio.run(scenario())
        assert got_a == got_b == {"type": "beat", "t": 1.0, "user_id": "x"}

    def test_wrong_path_rejected(self, server):
        import websockets

        async def scenario():
            async with websockets.connect(url(server, "/nope")):
                pass

        with pytest.raises(websockets.InvalidStatus) as err:
            asyncio.run(scenario())
        assert err.value.response.status_code == 404


class TestControl:
    def test_control_message_polled_and_acked(self, server):
        import websockets

        async def scenario():
            async with websockets.connect(url(server)) as ws:
                await ws.send(json.dumps({
                    "type": "bind_request", "id": "req-1", "user_id": "ann",
                    "metric_id": "HEART_RATE", "anchor_id": "chest"}))
                reqs = []
                deadline = time.monotonic() + 2.0
                while not reqs and time.monotonic() < deadline:
                    reqs = server.poll_control()
                    await asyncio.sleep(0.01)
                assert len(reqs) == 1
                assert reqs[0].message["metric_id"] == "HEART_RATE"
                server.send_ack(reqs[0], True)
                return json.loads(await asyncio.wait_for(ws.recv(), 2.0))

        ack = asyncio.run(scenario())
        assert ack == {"type": "ack", "id": "req-1", "ok": True}

    def test_ack_error_carries_message(self, server):
        import websockets

        async def scenario():
            async with websockets.connect(url(server)) as ws:
                await ws.send(json.dumps({
                    "type": "session_command", "id": "req-2", "action": "warp"}))
                reqs = []
                while not reqs:
                    reqs = server.poll_control()
                    await asyncio.sleep(0.01)
                server.send_ack(reqs[0], False, "unknown action 'warp'")
                return json.loads(await asyncio.wait_for(ws.recv(), 2.0))

        ack = asyncio.run(scenario())
        assert ack["ok"] is False
        assert "warp" in ack["error"]

    def test_garbage_rejected_without_polling(self, server):
        import websockets

        async def scenario():
            out = []
            async with websockets.connect(url(server)) as ws:
                await ws.send("this is not json")
                out.append(json.loads(await asyncio.wait_for(ws.recv(), 2.0)))
                await ws.send(json.dumps({"type": "sabotage", "id": "z"}))
                out.append(json.loads(await asyncio.wait_for(ws.recv(), 2.0)))
            return out

        bad_json, bad_type = asyncio.run(scenario())
        assert bad_json["type"] == "ack" and bad_json["ok"] is False
        assert bad_json["id"] is None
        assert bad_type["ok"] is False and bad_type["id"] == "z"
        assert server.poll_control() == []  # neither reached the queue


class TestSlowClient:
    def test_slow_client_dropped_fast_client_unaffected(self):
        import os
        import socket
        import threading

        import websockets

        server = BridgeServer(port=0, queue_limit=32).start()
        # Payloads must be incompressible: permessage-deflate shrinks a
        # constant blob to ~80 bytes on the wire and no amount of flooding
        # would ever exert back-pressure.  The slow client also connects
        # with a tiny receive buffer so the kernel holds little on its
        # behalf, and then simply stops reading.
        total = 2000

        def flood():
            for i in range(total):
                server.publish({"type": "render", "t": float(i), "user_id":
                                "u", "frame": os.urandom(1500).hex()})
                time.sleep(0.0003)

        def choked_socket():
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            s.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 4096)
            s.connect(("127.0.0.1", server.port))
            return s

        async def scenario():
            async with websockets.connect(url(server),
                                          sock=choked_socket()) as slow, \
                    websockets.connect(url(server)) as fast:

                flooder = threading.Thread(target=flood)
                flooder.start()
                fast_ts = []
                while len(fast_ts) < total:
                    raw = await asyncio.wait_for(fast.recv(), timeout=10.0)
                    fast_ts.append(json.loads(raw)["t"])
                flooder.join(timeout=10.0)
                assert not flooder.is_alive()
                assert fast_ts == [float(i) for i in range(total)]

                # The slow client was cut off mid-stream.  Draining whatever
                # the sockets still hold ends in a ConnectionClosed well
                # short of the total (1013 when the goodbye squeezed
                # through, 1006 when the server had to abort the jammed
                # pipe).
                slow_got = 0
                with pytest.raises(websockets.ConnectionClosed):
                    while True:
                        await asyncio.wait_for(slow.recv(), timeout=10.0)
                        slow_got += 1
                assert slow.close_code in (1006, 1013)
                assert slow_got < total // 2
                assert len(server._clients) == 1  # fast is still registered

        try:
            asyncio.run(scenario())
        finally:
            server.close()


class TestLifecycle:
    def test_port_conflict_reported(self, server):
        from tobe.errors import TobeError

        with pytest.raises(TobeError, match="bridge failed to start"):
            BridgeServer(port=server.port).start()

    def test_close_is_idempotent(self):
        srv = BridgeServer(port=0).start()
        srv.close()
        srv.close()
