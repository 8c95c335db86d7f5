"""Length-prefixed JSON frames.

A frame is a 4-byte little-endian unsigned payload length followed by the
UTF-8 payload.  Payloads are canonical JSON (sorted keys, no whitespace);
floats use Python's shortest round-trip repr so 64-bit values survive the
trip exactly.
"""
from __future__ import annotations

import json
import math
import socket
import struct
from dataclasses import dataclass, field

MAX_PAYLOAD = 1 << 20
KINDS = ("hello", "reset", "step", "state", "error", "bye")

EPISODE_DONE = "EPISODE_DONE"
BAD_CONFIG = "BAD_CONFIG"
BAD_ACTION = "BAD_ACTION"
SEQ_MISMATCH = "SEQ_MISMATCH"
NO_EPISODE = "NO_EPISODE"
BAD_FRAME = "BAD_FRAME"
BAD_KIND = "BAD_KIND"


class ProtocolError(Exception):
    """Something on the wire broke the protocol contract."""

    code = "PROTOCOL"


class DecodeError(ProtocolError):
    code = BAD_FRAME


class TruncatedFrame(DecodeError):
    pass


class FrameTooLarge(DecodeError):
    pass


class MalformedMessage(DecodeError):
    pass


class SequenceMismatch(ProtocolError):
    code = SEQ_MISMATCH


class ServerError(ProtocolError):
    """An error response from the server, carrying its code."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class TransportError(Exception):
    """Connection-level failure (timeout, reset, EOF) as opposed to a protocol error."""


@dataclass
class Message:
    kind: str
    seq: int
    session: str = ""
    body: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"body": self.body, "kind": self.kind, "seq": self.seq, "session": self.session}


def _check_finite(obj, path="body"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise MalformedMessage(f"{path} holds a non-finite number")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def encode_payload(msg: Message) -> bytes:
    if msg.kind not in KINDS:
        raise MalformedMessage(f"unknown message kind {msg.kind!r}")
    _check_finite(msg.body)
    text = json.dumps(msg.to_json(), sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)
    return text.encode("utf-8")


def encode_frame(msg: Message) -> bytes:
    payload = encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise FrameTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return struct.pack("<I", len(payload)) + payload


def decode_payload(payload: bytes) -> Message:
    if len(payload) > MAX_PAYLOAD:
        raise FrameTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedMessage(f"payload is not UTF-8 JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != {"body", "kind", "seq", "session"}:
        raise MalformedMessage("message must have exactly body, kind, seq, session")
    kind, seq, session, body = obj["kind"], obj["seq"], obj["session"], obj["body"]
    if kind not in KINDS:
        raise MalformedMessage(f"unknown message kind {kind!r}")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise MalformedMessage("seq must be a non-negative integer")
    if not isinstance(session, str) or not isinstance(body, dict):
        raise MalformedMessage("session must be a string and body an object")
    return Message(kind, seq, session, body)


def decode_frame(data: bytes) -> Message:
    """Decode exactly one frame."""
    if len(data) < 4:
        raise TruncatedFrame(f"need 4 length bytes, got {len(data)}")
    (length,) = struct.unpack_from("<I", data)
    if length > MAX_PAYLOAD:
        raise FrameTooLarge(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    if len(data) < 4 + length:
        raise TruncatedFrame(f"declared {length} payload bytes, got {len(data) - 4}")
    if len(data) > 4 + length:
        raise MalformedMessage("trailing bytes after frame")
    return decode_payload(data[4:])


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            if got == 0:
                return None
            raise TruncatedFrame(f"connection closed after {got} of {n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Message | None:
    """Next message from ``sock``; None on a clean close between frames."""
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (length,) = struct.unpack("<I", head)
    if length > MAX_PAYLOAD:
        raise FrameTooLarge(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    payload = _recv_exact(sock, length) if length else b""
    if payload is None:
        raise TruncatedFrame("connection closed before payload")
    return decode_payload(payload)


def write_frame(sock: socket.socket, msg: Message) -> None:
    sock.sendall(encode_frame(msg))
