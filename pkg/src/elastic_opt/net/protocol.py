"""Bit-exact framed TCP protocol.

Frame layout (little-endian throughout):

    magic   4 bytes  b"EAVG"
    version 1 byte   0x01
    type    1 byte   see TYPE_* below
    length  4 bytes  unsigned payload byte count
    payload length bytes

Vector-bearing payloads are a 4-byte dim followed by dim IEEE-754 doubles.
FETCH_REPLY prefixes an 8-byte center version. ERROR carries UTF-8 text.
A malformed frame earns an ERROR frame and a closed connection.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ProtocolError

MAGIC = b"EAVG"
VERSION = 1

TYPE_FETCH = 0x01
TYPE_FETCH_REPLY = 0x02
TYPE_PUSH_ELASTIC = 0x03
TYPE_PUSH_GRAD = 0x04
TYPE_ACK = 0x05
TYPE_SHUTDOWN = 0x06
TYPE_ERROR = 0x07

_EMPTY = (TYPE_FETCH, TYPE_ACK, TYPE_SHUTDOWN)
_VECTOR = (TYPE_PUSH_ELASTIC, TYPE_PUSH_GRAD)

_HEADER = struct.Struct("<4sBBI")


@dataclass(frozen=True)
class Frame:
    type: int
    vector: np.ndarray | None = None
    center_version: int | None = None
    text: str | None = None


def _pack_vector(v: np.ndarray) -> bytes:
    v = np.ascontiguousarray(v, dtype="<f8")
    return struct.pack("<I", v.shape[0]) + v.tobytes()


def _unpack_vector(payload: bytes, offset: int = 0) -> np.ndarray:
    if len(payload) - offset < 4:
        raise ProtocolError("vector payload too short for dim field")
    (dim,) = struct.unpack_from("<I", payload, offset)
    need = offset + 4 + 8 * dim
    if len(payload) != need:
        raise ProtocolError(f"vector payload length {len(payload)} != expected {need}")
    return np.frombuffer(payload, dtype="<f8", count=dim, offset=offset + 4).astype(np.float64)


def encode(frame: Frame) -> bytes:
    t = frame.type
    if t in _EMPTY:
        payload = b""
    elif t in _VECTOR:
        payload = _pack_vector(frame.vector)
    elif t == TYPE_FETCH_REPLY:
        payload = struct.pack("<Q", frame.center_version) + _pack_vector(frame.vector)
    elif t == TYPE_ERROR:
        payload = (frame.text or "").encode("utf-8")
    else:
        raise ProtocolError(f"unknown frame type 0x{t:02x}")
    return _HEADER.pack(MAGIC, VERSION, t, len(payload)) + payload


def decode(data: bytes) -> tuple[Frame, int]:
    """Parse one frame from the head of `data`; returns (frame, bytes consumed)."""
    if len(data) < _HEADER.size:
        raise ProtocolError("short frame header")
    magic, version, t, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if len(data) < _HEADER.size + length:
        raise ProtocolError("truncated payload")
    payload = data[_HEADER.size : _HEADER.size + length]
    consumed = _HEADER.size + length
    if t in _EMPTY:
        if payload:
            raise ProtocolError(f"type 0x{t:02x} must have empty payload")
        return Frame(t), consumed
    if t in _VECTOR:
        return Frame(t, vector=_unpack_vector(payload)), consumed
    if t == TYPE_FETCH_REPLY:
        if len(payload) < 8:
            raise ProtocolError("FETCH_REPLY payload too short")
        (version_ctr,) = struct.unpack_from("<Q", payload)
        return Frame(t, vector=_unpack_vector(payload, 8), center_version=version_ctr), consumed
    if t == TYPE_ERROR:
        return Frame(t, text=payload.decode("utf-8", errors="replace")), consumed
    raise ProtocolError(f"unknown frame type 0x{t:02x}")


def send_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(encode(frame))


def recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> Frame:
    header = recv_exact(sock, _HEADER.size)
    magic, version, t, length = _HEADER.unpack_from(header)
    if magic != MAGIC or version != VERSION:
        raise ProtocolError(f"bad frame header {header!r}")
    payload = recv_exact(sock, length) if length else b""
    frame, _ = decode(header + payload)
    return frame
