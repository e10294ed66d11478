"""Wire codec for discovery beacons and the TCP data framing.

Kept free of sockets so every parser can be exercised (and fuzzed) on plain
bytes. All integers are little-endian; floats are IEEE 754.

Frames on a data connection:

* chunk  (outlet -> inlet): 0x5C, u32 n_samples, u32 n_channels,
  n_samples f64 timestamps, n_samples*n_channels f32 samples row-major
* ping   (inlet -> outlet): 0x5D, u64 nonce
* pong   (outlet -> inlet): 0x5D, u64 nonce, f64 sender clock

Ping and pong share the magic byte; the direction of travel disambiguates
them, so a decoder is built for one side of the connection.

Discovery beacon (UDP): magic "TOBE", version 0x01, u16 payload length,
UTF-8 JSON with the StreamMeta fields plus the TCP endpoint.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FramingError, TobeError
from .types import SampleChunk, StreamMeta

BEACON_MAGIC = b"TOBE"
BEACON_VERSION = 0x01
CHUNK_MAGIC = 0x5C
PING_MAGIC = 0x5D

#: Sanity caps so hostile lengths cannot trigger absurd allocations.
MAX_SAMPLES = 1_000_000
MAX_CHANNELS = 4096
MAX_BEACON_BYTES = 65_000


def encode_beacon(meta: StreamMeta, host: str, port: int) -> bytes:
    doc = dict(meta.to_dict(), host=host, port=port)
    payload = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_BEACON_BYTES:
        raise FramingError(f"beacon payload of {len(payload)} bytes is too large")
    return BEACON_MAGIC + bytes([BEACON_VERSION]) + struct.pack("<H", len(payload)) + payload


def decode_beacon(data: bytes) -> tuple[StreamMeta, str, int]:
    """Parse one UDP beacon datagram into (meta, host, port)."""
    if len(data) < 7 or data[:4] != BEACON_MAGIC:
        raise FramingError("not a beacon datagram")
    if data[4] != BEACON_VERSION:
        raise FramingError(f"unsupported beacon version {data[4]}")
    (length,) = struct.unpack_from("<H", data, 5)
    payload = data[7: 7 + length]
    if len(payload) != length:
        raise FramingError("beacon payload truncated")
    try:
        doc = json.loads(payload.decode("utf-8"))
        host = doc.pop("host")
        port = doc.pop("port")
        meta = StreamMeta.from_dict(doc)
    except (ValueError, KeyError, TypeError, TobeError) as exc:
        raise FramingError(f"bad beacon payload: {exc}") from exc
    if not isinstance(port, int) or not 0 < port < 65536:
        raise FramingError(f"bad beacon port {port!r}")
    return meta, str(host), port


def encode_chunk(chunk: SampleChunk) -> bytes:
    n_samples, n_channels = chunk.samples.shape
    head = struct.pack("<BII", CHUNK_MAGIC, n_samples, n_channels)
    ts = np.ascontiguousarray(chunk.timestamps, dtype="<f8").tobytes()
    xs = np.ascontiguousarray(chunk.samples, dtype="<f4").tobytes()
    return head + ts + xs


def encode_ping(nonce: int) -> bytes:
    return struct.pack("<BQ", PING_MAGIC, nonce)


def encode_pong(nonce: int, sender_clock: float) -> bytes:
    return struct.pack("<BQd", PING_MAGIC, nonce, sender_clock)


class Ping:
    __slots__ = ("nonce",)

    def __init__(self, nonce: int):
        self.nonce = nonce


class Pong:
    __slots__ = ("nonce", "sender_clock")

    def __init__(self, nonce: int, sender_clock: float):
        self.nonce = nonce
        self.sender_clock = sender_clock


class FrameDecoder:
    """Incremental frame parser for one direction of a data connection.

    Feed raw bytes as they arrive; complete frames come back in order.
    side="inlet" parses chunks and pongs (what an inlet receives),
    side="outlet" parses pings. Malformed input raises FramingError and
    poisons the decoder — a stream parser cannot resynchronise reliably, so
    the connection should be dropped.
    """

    _PING_LEN = 9
    _PONG_LEN = 17

    def __init__(self, side: str):
        if side not in ("inlet", "outlet"):
            raise FramingError(f"unknown decoder side {side!r}")
        self.side = side
        self._buf = bytearray()

    def feed(self, data: bytes) -> list:
        self._buf.extend(data)
        frames = []
        while True:
            frame = self._try_parse()
            if frame is None:
                return frames
            frames.append(frame)

    def _try_parse(self):
        buf = self._buf
        if not buf:
            return None
        magic = buf[0]
        if magic == CHUNK_MAGIC and self.side == "inlet":
            return self._parse_chunk()
        if magic == PING_MAGIC:
            if self.side == "outlet":
                if len(buf) < self._PING_LEN:
                    return None
                (nonce,) = struct.unpack_from("<Q", buf, 1)
                del buf[: self._PING_LEN]
                return Ping(nonce)
            if len(buf) < self._PONG_LEN:
                return None
            nonce, clock = struct.unpack_from("<Qd", buf, 1)
            del buf[: self._PONG_LEN]
            return Pong(nonce, clock)
        raise FramingError(f"bad frame magic 0x{magic:02X} for {self.side}")

    def _parse_chunk(self):
        buf = self._buf
        if len(buf) < 9:
            return None
        _, n_samples, n_channels = struct.unpack_from("<BII", buf, 0)
        if n_samples == 0 or n_samples > MAX_SAMPLES:
            raise FramingError(f"implausible sample count {n_samples}")
        if n_channels == 0 or n_channels > MAX_CHANNELS:
            raise FramingError(f"implausible channel count {n_channels}")
        need = 9 + 8 * n_samples + 4 * n_samples * n_channels
        if len(buf) < need:
            return None
        ts = np.frombuffer(buf, dtype="<f8", count=n_samples, offset=9).copy()
        xs = (
            np.frombuffer(buf, dtype="<f4", count=n_samples * n_channels,
                          offset=9 + 8 * n_samples)
            .reshape(n_samples, n_channels)
            .copy()
        )
        del buf[:need]
        try:
            return SampleChunk(ts, xs)
        except TobeError as exc:
            raise FramingError(f"chunk violates invariants: {exc}") from exc
