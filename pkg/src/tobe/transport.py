"""Publish/subscribe stream transport: UDP discovery plus TCP data delivery.

An Outlet advertises its StreamMeta once a second over UDP and accepts any
number of TCP subscribers; an Inlet connects and pulls SampleChunks in push
order. Producers are never back-pressured: every queue in the path is bounded
and drops its oldest entry, with drops counted in the outlet statistics.

Timestamps stay on the sender's clock. measure_clock_offset runs a ping/pong
handshake and returns the midpoint estimate so consumers can re-reference
when they need to compare streams from different hosts.
"""

from __future__ import annotations

import json
import os
import secrets
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigurationError, ContractError, FramingError, StreamClosedError
from .types import ClockOffset, Modality, SampleChunk, StreamMeta
from .wire import (
    FrameDecoder,
    Ping,
    Pong,
    decode_beacon,
    encode_beacon,
    encode_chunk,
    encode_ping,
    encode_pong,
)

DEFAULT_DISCOVERY_PORT = 16571
BEACON_INTERVAL_S = 1.0
QUEUE_CAPACITY = 1024


def discovery_port() -> int:
    """UDP beacon port; the TOBE_DISCOVERY_PORT env var overrides it."""
    value = os.environ.get("TOBE_DISCOVERY_PORT")
    if value is None:
        return DEFAULT_DISCOVERY_PORT
    try:
        port = int(value)
    except ValueError as exc:
        raise ConfigurationError(f"TOBE_DISCOVERY_PORT={value!r} is not a port") from exc
    if not 0 < port < 65536:
        raise ConfigurationError(f"TOBE_DISCOVERY_PORT={port} out of range")
    return port


@dataclass(frozen=True)
class ResolvedStream(StreamMeta):
    """A StreamMeta heard on the network, carrying its TCP endpoint."""

    host: str = ""
    port: int = 0


@dataclass
class OutletStats:
    pushed: int = 0
    dropped: int = 0


class _Client:
    """One connected subscriber: bounded send queue plus a sender thread."""

    def __init__(self, sock: socket.socket, capacity: int):
        self.sock = sock
        self.queue: deque[bytes] = deque()
        self.capacity = capacity
        self.cond = threading.Condition()
        self.alive = True
        self.dropped = 0

    def enqueue(self, payload: bytes):
        with self.cond:
            if len(self.queue) >= self.capacity:
                self.queue.popleft()
                self.dropped += 1
            self.queue.append(payload)
            self.cond.notify()

    def stop(self):
        with self.cond:
            self.alive = False
            self.cond.notify()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class Outlet:
    """Advertises one stream and fans pushed chunks out to subscribers."""

    _advertised: set[str] = set()
    _advertised_lock = threading.Lock()

    def __init__(self, meta: StreamMeta, port_hint: int | None = None, *,
                 advertise: bool = True, beacon_interval: float = BEACON_INTERVAL_S,
                 capacity: int = QUEUE_CAPACITY, beacon_host: str = "",
                 udp_port: int | None = None, clock=time.time):
        with Outlet._advertised_lock:
            if meta.source_id in Outlet._advertised:
                raise ConfigurationError(
                    f"source_id {meta.source_id!r} is already advertised")
            Outlet._advertised.add(meta.source_id)
        self.meta = meta
        self.stats = OutletStats()
        self._capacity = capacity
        self._clock = clock
        self._closed = False
        self._clients: list[_Client] = []
        self._backlog: deque[bytes] = deque()
        self._lock = threading.Lock()

        try:
            self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                self._listener.bind(("0.0.0.0", port_hint or 0))
            except OSError as exc:
                raise ConfigurationError(
                    f"cannot bind data port {port_hint}: {exc}") from exc
            self._listener.listen(8)
            self.port = self._listener.getsockname()[1]

            self._accept_thread = threading.Thread(
                target=self._accept_loop, name=f"outlet-accept-{meta.name}",
                daemon=True)
            self._accept_thread.start()

            self._beacon_stop = threading.Event()
            if advertise:
                self._beacon_thread = threading.Thread(
                    target=self._beacon_loop,
                    args=(beacon_interval, beacon_host,
                          udp_port if udp_port is not None else discovery_port()),
                    name=f"outlet-beacon-{meta.name}", daemon=True)
                self._beacon_thread.start()
        except Exception:
            with Outlet._advertised_lock:
                Outlet._advertised.discard(meta.source_id)
            raise

    # -- network workers ---------------------------------------------------

    def _beacon_loop(self, interval: float, host: str, port: int):
        payload = encode_beacon(self.meta, host, self.port)
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
        try:
            while True:
                for dest in ("255.255.255.255", "127.0.0.1"):
                    try:
                        sock.sendto(payload, (dest, port))
                    except OSError:
                        pass  # broadcast may be unavailable; loopback still works
                if self._beacon_stop.wait(interval):
                    return
        finally:
            sock.close()

    def _accept_loop(self):
        while not self._closed:
            try:
                sock, _addr = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client = _Client(sock, self._capacity)
            with self._lock:
                for payload in self._backlog:
                    client.enqueue(payload)
                self._clients.append(client)
            threading.Thread(target=self._send_loop, args=(client,),
                             daemon=True).start()
            threading.Thread(target=self._recv_loop, args=(client,),
                             daemon=True).start()

    def _send_loop(self, client: _Client):
        try:
            while True:
                with client.cond:
                    while client.alive and not client.queue:
                        client.cond.wait()
                    if not client.alive:
                        return
                    payload = client.queue.popleft()
                client.sock.sendall(payload)
        except OSError:
            pass
        finally:
            self._drop_client(client)

    def _recv_loop(self, client: _Client):
        decoder = FrameDecoder("outlet")
        try:
            while True:
                data = client.sock.recv(4096)
                if not data:
                    return
                for frame in decoder.feed(data):
                    if isinstance(frame, Ping):
                        client.enqueue(encode_pong(frame.nonce, self._clock()))
        except (OSError, FramingError):
            pass
        finally:
            self._drop_client(client)

    def _drop_client(self, client: _Client):
        with self._lock:
            if client in self._clients:
                self._clients.remove(client)
        client.stop()

    # -- public API --------------------------------------------------------

    def push_chunk(self, chunk: SampleChunk):
        if self._closed:
            raise StreamClosedError("outlet is closed")
        if chunk.samples.shape[1] != self.meta.n_channels:
            raise ContractError(
                f"chunk has {chunk.samples.shape[1]} channels, stream "
                f"{self.meta.name!r} expects {self.meta.n_channels}")
        payload = encode_chunk(chunk)
        with self._lock:
            if len(self._backlog) >= self._capacity:
                self._backlog.popleft()
                self.stats.dropped += 1
            self._backlog.append(payload)
            clients = list(self._clients)
        for client in clients:
            client.enqueue(payload)
        self.stats.pushed += 1

    def close(self):
        if self._closed:
            return
        self._closed = True
        self._beacon_stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            clients = list(self._clients)
            self._clients.clear()
        for client in clients:
            client.stop()
        with Outlet._advertised_lock:
            Outlet._advertised.discard(self.meta.source_id)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_outlet(meta: StreamMeta, port_hint: int | None = None, **kwargs) -> Outlet:
    return Outlet(meta, port_hint, **kwargs)


def resolve_streams(flt=None, timeout: float = 2.0, *,
                    udp_port: int | None = None) -> list[ResolvedStream]:
    """Listen for beacons and return every distinct stream heard.

    flt may be None (all streams), a Modality, a stream name string, or a
    predicate on StreamMeta. An empty result is normal when nothing is up.
    """
    if isinstance(flt, Modality):
        predicate = lambda m: m.modality is flt
    elif isinstance(flt, str):
        predicate = lambda m: m.name == flt
    elif flt is None:
        predicate = lambda m: True
    else:
        predicate = flt

    port = udp_port if udp_port is not None else discovery_port()
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    if hasattr(socket, "SO_REUSEPORT"):
        try:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEPORT, 1)
        except OSError:
            pass
    found: dict[str, ResolvedStream] = {}
    try:
        sock.bind(("", port))
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            sock.settimeout(remaining)
            try:
                data, addr = sock.recvfrom(65536)
            except socket.timeout:
                break
            except OSError:
                break
            try:
                meta, host, tcp_port = decode_beacon(data)
            except FramingError:
                continue  # foreign or corrupt datagram; keep listening
            if not predicate(meta):
                continue
            fields = meta.to_dict()
            found[meta.source_id] = ResolvedStream(
                **fields, host=host or addr[0], port=tcp_port)
    finally:
        sock.close()
    return list(found.values())


class Inlet:
    """Subscriber side of one stream: connect, pull chunks, measure clocks."""

    def __init__(self, meta: StreamMeta, host: str | None = None,
                 port: int | None = None, *, capacity: int = QUEUE_CAPACITY,
                 connect_timeout: float = 5.0):
        if host is None or port is None:
            if not isinstance(meta, ResolvedStream):
                raise ConfigurationError(
                    "need a ResolvedStream or explicit host/port")
            host, port = meta.host, meta.port
        self.meta = meta
        self._capacity = capacity
        self._chunks: deque[SampleChunk] = deque()
        self._cond = threading.Condition()
        self._closed = False
        self._conn_lost = False
        self.clock_offset: ClockOffset | None = None
        self._pongs: dict[int, tuple[float, float]] = {}  # nonce -> (clock, t_recv)

        try:
            self._sock = socket.create_connection((host, port),
                                                  timeout=connect_timeout)
        except OSError as exc:
            raise StreamClosedError(
                f"cannot reach outlet at {host}:{port}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._reader = threading.Thread(target=self._recv_loop,
                                        name="inlet-recv", daemon=True)
        self._reader.start()

    def _recv_loop(self):
        decoder = FrameDecoder("inlet")
        try:
            while True:
                data = self._sock.recv(65536)
                if not data:
                    break
                for frame in decoder.feed(data):
                    if isinstance(frame, Pong):
                        with self._cond:
                            self._pongs[frame.nonce] = (frame.sender_clock,
                                                        time.time())
                            self._cond.notify_all()
                    else:
                        with self._cond:
                            if len(self._chunks) >= self._capacity:
                                self._chunks.popleft()
                            self._chunks.append(frame)
                            self._cond.notify_all()
        except (OSError, FramingError):
            pass
        finally:
            with self._cond:
                self._conn_lost = True
                self._cond.notify_all()

    def pull_chunk(self, max_wait: float = 0.0) -> SampleChunk | None:
        """Next chunk in push order; None after max_wait with no data.

        A lost connection raises StreamClosedError once the buffered
        chunks are drained, so starvation and disconnection are distinct.
        """
        deadline = time.monotonic() + max_wait
        with self._cond:
            while True:
                if self._chunks:
                    return self._chunks.popleft()
                if self._conn_lost or self._closed:
                    raise StreamClosedError("stream disconnected")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)

    def measure_clock_offset(self, timeout: float = 1.0) -> ClockOffset:
        """Ping/pong midpoint estimate of receiver_clock - sender_clock.

        On timeout the previous estimate (clock_offset) is left untouched
        and the failure surfaces as an exception.
        """
        with self._cond:
            if self._conn_lost or self._closed:
                raise StreamClosedError("stream disconnected")
        nonce = secrets.randbits(64)
        t0 = time.time()
        try:
            self._sock.sendall(encode_ping(nonce))
        except OSError as exc:
            raise StreamClosedError(f"send failed: {exc}") from exc
        deadline = time.monotonic() + timeout
        with self._cond:
            while nonce not in self._pongs:
                if self._conn_lost:
                    raise StreamClosedError("stream disconnected")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError("clock offset measurement timed out")
                self._cond.wait(remaining)
            sender_clock, t1 = self._pongs.pop(nonce)
        offset = (t0 + t1) / 2.0 - sender_clock
        self.clock_offset = ClockOffset(offset_s=offset, rtt_s=t1 - t0)
        return self.clock_offset

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_inlet(meta: StreamMeta, host: str | None = None,
               port: int | None = None, **kwargs) -> Inlet:
    return Inlet(meta, host, port, **kwargs)


def measure_clock_offset(inlet: Inlet, timeout: float = 1.0) -> ClockOffset:
    return inlet.measure_clock_offset(timeout)
