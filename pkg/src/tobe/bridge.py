"""WebSocket bridge between a running session and dashboard clients.

The bridge serves ``/ws`` and fans session events out as JSON text frames.
Outbound messages form a small discriminated union (``type`` field):

    metric   {t, user_id, metric_id, raw, normalized}
    render   {t, user_id, frame}
    protocol {t, phase_id}
    gauge    {t, level}
    beat     {t, user_id}
    ack      {id, ok, error?}          (reply to a control message)

Inbound control messages (``bind_request``, ``timeline_upload``,
``calibration_command``, ``session_command``) carry a client-chosen
correlation ``id`` and are answered with an ``ack``.

The server runs its own event loop on a daemon thread so the session loop
never blocks on a socket: publish() enqueues per client and a client that
falls more than ``queue_limit`` messages behind is disconnected.
"""

from __future__ import annotations

import asyncio
import http
import json
import queue
import socket
import threading
from dataclasses import dataclass

from .errors import TobeError
from .session import SessionEvent

#: A client this far behind gets dropped rather than stalling the feed.
QUEUE_LIMIT = 256

CONTROL_TYPES = frozenset({
    "bind_request", "timeline_upload", "calibration_command",
    "session_command",
})


def event_to_messages(ev: SessionEvent) -> list[dict]:
    """Translate a session event into bridge messages (possibly none)."""
    if ev.kind == "metric":
        return [{
            "type": "metric", "t": ev.t, "user_id": ev.user_id,
            "metric_id": ev.payload["metric_id"],
            "raw": ev.payload["raw"],
            "normalized": ev.payload["normalized"],
        }]
    if ev.kind == "render":
        return [{"type": "render", "t": ev.t, "user_id": ev.user_id,
                 "frame": ev.payload}]
    if ev.kind == "phase":
        return [{"type": "protocol", "t": ev.t,
                 "phase_id": ev.payload["phase_id"]}]
    if ev.kind == "gauge":
        return [{"type": "gauge", "t": ev.t, "level": ev.payload["level"]}]
    if ev.kind == "beat":
        return [{"type": "beat", "t": ev.t, "user_id": ev.user_id}]
    return []


@dataclass(frozen=True)
class ControlRequest:
    """An inbound control message plus the connection that sent it."""

    client: object
    message: dict


class BridgeServer:
    """Threaded WebSocket fan-out server bound to /ws."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, *,
                 queue_limit: int = QUEUE_LIMIT):
        self._host = host
        self._port = port
        self._limit = queue_limit
        self._loop: asyncio.AbstractEventLoop | None = None
        self._stop_evt: asyncio.Event | None = None
        self._clients: dict[object, asyncio.Queue] = {}
        self._inbound: queue.SimpleQueue[ControlRequest] = queue.SimpleQueue()
        self._ready = threading.Event()
        self._thread: threading.Thread | None = None
        self._startup_error: BaseException | None = None
        self.port: int | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "BridgeServer":
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="tobe-bridge")
        self._thread.start()
        self._ready.wait()
        if self._startup_error is not None:
            raise TobeError(f"bridge failed to start: {self._startup_error}")
        return self

    def close(self):
        loop, evt = self._loop, self._stop_evt
        if loop is not None and evt is not None and not loop.is_closed():
            try:
                loop.call_soon_threadsafe(evt.set)
            except RuntimeError:
                pass  # loop shut down between the check and the call
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _run(self):
        try:
            asyncio.run(self._main())
        except BaseException as exc:  # startup failures surface in start()
            self._startup_error = exc
            self._ready.set()

    async def _main(self):
        import websockets

        self._loop = asyncio.get_running_loop()
        self._stop_evt = asyncio.Event()
        try:
            # short close_timeout: a client evicted for falling behind has a
            # jammed pipe, so waiting out the full closing handshake is futile
            server = await websockets.serve(
                self._handler, self._host, self._port,
                process_request=self._route, close_timeout=1.0)
        except OSError as exc:
            self._startup_error = exc
            self._ready.set()
            return
        async with server:
            self.port = server.sockets[0].getsockname()[1]
            self._ready.set()
            await self._stop_evt.wait()

    def _route(self, connection, request):
        if request.path != "/ws":
            return connection.respond(http.HTTPStatus.NOT_FOUND,
                                      "no such endpoint; connect to /ws\n")
        return None

    # -- outbound ----------------------------------------------------------

    def publish_event(self, ev: SessionEvent):
        for msg in event_to_messages(ev):
            self.publish(msg)

    def publish(self, message: dict):
        """Queue a message for every connected client (thread-safe)."""
        self._post(json.dumps(message, sort_keys=True, separators=(",", ":"),
                              allow_nan=False))

    def _post(self, text: str, only=None):
        loop = self._loop
        if loop is not None:
            loop.call_soon_threadsafe(self._fanout, text, only)

    def _fanout(self, text: str, only=None):
        targets = ([(only, self._clients[only])] if only in self._clients
                   else list(self._clients.items()) if only is None else [])
        for ws, q in targets:
            try:
                q.put_nowait(text)
            except asyncio.QueueFull:
                # slow client: cut it off instead of stalling the session
                self._clients.pop(ws, None)
                asyncio.ensure_future(self._evict(ws))

    async def _evict(self, ws):
        # Courtesy close first; when the pipe is jammed the close frame can't
        # be delivered and close() hangs on flow control, so abort instead.
        try:
            await asyncio.wait_for(ws.close(code=1013, reason="too slow"),
                                   timeout=1.0)
        except Exception:
            try:
                ws.transport.abort()
            except Exception:
                pass

    # -- inbound control ---------------------------------------------------

    def poll_control(self) -> list[ControlRequest]:
        """Drain control messages received since the last poll."""
        out = []
        while True:
            try:
                out.append(self._inbound.get_nowait())
            except queue.Empty:
                return out

    def send_ack(self, request: ControlRequest, ok: bool,
                 error: str | None = None):
        doc = {"type": "ack", "id": request.message.get("id"), "ok": ok}
        if error is not None:
            doc["error"] = error
        self._post(json.dumps(doc, sort_keys=True, separators=(",", ":")),
                   only=request.client)

    # -- connection handling ----------------------------------------------

    async def _handler(self, ws):
        # Keep the kernel send buffer shallow so a stalled client surfaces as
        # queue growth here (where the eviction policy lives) instead of as
        # megabytes of stale frames pooling invisibly in the kernel.
        raw = ws.transport.get_extra_info("socket")
        if raw is not None:
            raw.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, 65536)
        q: asyncio.Queue = asyncio.Queue(self._limit)
        self._clients[ws] = q
        sender = asyncio.create_task(self._drain(ws, q))
        try:
            async for raw in ws:
                self._receive(ws, raw)
        except Exception:
            pass
        finally:
            self._clients.pop(ws, None)
            sender.cancel()

    async def _drain(self, ws, q: asyncio.Queue):
        try:
            while True:
                await ws.send(await q.get())
        except Exception:
            pass

    def _receive(self, ws, raw):
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict):
                raise ValueError("expected a JSON object")
        except ValueError as exc:
            self._reject(ws, None, f"invalid JSON: {exc}")
            return
        mtype = msg.get("type")
        if mtype not in CONTROL_TYPES:
            self._reject(ws, msg.get("id"), f"unknown message type {mtype!r}")
            return
        self._inbound.put(ControlRequest(ws, msg))

    def _reject(self, ws, corr_id, error: str):
        doc = {"type": "ack", "id": corr_id, "ok": False, "error": error}
        self._fanout(json.dumps(doc, sort_keys=True, separators=(",", ":")),
                     only=ws)
