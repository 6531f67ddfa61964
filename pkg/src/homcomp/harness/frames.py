"""Length-prefixed frames: [u8 msg_type][u32 LE round][u32 LE payload_len][payload]."""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass
from typing import Callable, Optional

HEADER = struct.Struct("<BII")
HELLO_PAYLOAD = struct.Struct("<I")
MAX_PAYLOAD = 1 << 30


class FrameError(ValueError):
    pass


class ConnectionClosed(ConnectionError):
    pass


class MsgType(enum.IntEnum):
    HELLO = 0x01
    PUSH = 0x02
    GLOBAL = 0x03
    DONE = 0x04


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    round: int
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.round < 2**32:
            raise FrameError(f"round {self.round} does not fit in u32")
        if len(self.payload) > MAX_PAYLOAD:
            raise FrameError("payload too large")

    def to_bytes(self) -> bytes:
        return HEADER.pack(int(self.msg_type), self.round, len(self.payload)) + self.payload

    @classmethod
    def hello(cls, worker_id: int) -> "Frame":
        return cls(MsgType.HELLO, 0, HELLO_PAYLOAD.pack(worker_id))

    def worker_id(self) -> int:
        if self.msg_type is not MsgType.HELLO or len(self.payload) != HELLO_PAYLOAD.size:
            raise FrameError("not a well-formed HELLO frame")
        return HELLO_PAYLOAD.unpack(self.payload)[0]


def parse_header(raw: bytes, max_payload: int = MAX_PAYLOAD) -> tuple[MsgType, int, int]:
    if len(raw) != HEADER.size:
        raise FrameError(f"frame header needs {HEADER.size} bytes, got {len(raw)}")
    kind, rnd, length = HEADER.unpack(raw)
    try:
        msg_type = MsgType(kind)
    except ValueError:
        raise FrameError(f"unknown message type 0x{kind:02x}") from None
    if length > max_payload:
        raise FrameError(f"payload length {length} exceeds limit {max_payload}")
    if msg_type is MsgType.DONE and length:
        raise FrameError("DONE frame must be empty")
    if msg_type is MsgType.HELLO and length != HELLO_PAYLOAD.size:
        raise FrameError("HELLO payload must be 4 bytes")
    return msg_type, rnd, length


def decode_frame(raw: bytes, max_payload: int = MAX_PAYLOAD) -> Frame:
    """Parse exactly one frame from a complete buffer."""
    raw = bytes(raw)
    msg_type, rnd, length = parse_header(raw[:HEADER.size], max_payload)
    if len(raw) != HEADER.size + length:
        raise FrameError(f"declared payload {length} bytes, buffer holds {len(raw) - HEADER.size}")
    return Frame(msg_type, rnd, raw[HEADER.size:])


def recv_exact(sock: socket.socket, n: int, on_bytes: Optional[Callable[[int], None]] = None,
               chunk: int = 1 << 16) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        want = min(chunk, n - len(buf))
        piece = sock.recv(want)
        if not piece:
            raise ConnectionClosed(f"peer closed after {len(buf)} of {n} bytes")
        if on_bytes is not None:
            on_bytes(len(piece))
        buf += piece
    return bytes(buf)


def read_frame(sock: socket.socket, on_bytes: Optional[Callable[[int], None]] = None,
               max_payload: int = MAX_PAYLOAD) -> Frame:
    msg_type, rnd, length = parse_header(recv_exact(sock, HEADER.size, on_bytes), max_payload)
    payload = recv_exact(sock, length, on_bytes) if length else b""
    return Frame(msg_type, rnd, payload)
