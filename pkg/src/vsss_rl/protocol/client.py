"""Blocking client mirroring the local reset/step contract over the wire."""
from __future__ import annotations

import socket
from typing import Mapping, Optional

import numpy as np

from ..env import RewardBreakdown, StepResult
from .framing import (Message, ProtocolError, SequenceMismatch, ServerError, TransportError,
                      read_frame, write_frame)
from .server import action_body


class EnvClient:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.settimeout(timeout)
        self.seq = 0
        self.session = ""
        self.info: dict = {}

    def request(self, kind: str, body: Optional[dict] = None) -> Message:
        self.seq += 1
        req = Message(kind, self.seq, self.session, body or {})
        try:
            write_frame(self.sock, req)
            resp = read_frame(self.sock)
        except socket.timeout as exc:
            raise TransportError(f"timed out waiting for {kind} response") from exc
        except OSError as exc:
            raise TransportError(f"connection failed during {kind}: {exc}") from exc
        if resp is None:
            raise TransportError(f"server closed the connection during {kind}")
        if resp.seq != req.seq:
            raise SequenceMismatch(f"sent seq {req.seq}, response carries {resp.seq}")
        self.session = resp.session
        if resp.kind == "error":
            raise ServerError(resp.body.get("code", "UNKNOWN"), resp.body.get("message", ""))
        return resp

    def hello(self, config: Optional[Mapping[str, object]] = None) -> dict:
        resp = self.request("hello", {"config": dict(config or {})})
        if resp.kind != "hello":
            raise ProtocolError(f"expected hello, got {resp.kind}")
        self.info = resp.body
        return resp.body

    def reset(self, seed: int = 0) -> np.ndarray:
        resp = self.request("reset", {"seed": int(seed)})
        if resp.kind != "state":
            raise ProtocolError(f"expected state, got {resp.kind}")
        return np.asarray(resp.body["observation"], dtype=np.float64)

    def step(self, action) -> StepResult:
        resp = self.request("step", action_body(action))
        if resp.kind != "state":
            raise ProtocolError(f"expected state, got {resp.kind}")
        b = resp.body
        reward = RewardBreakdown(**b["reward"])
        return StepResult(np.asarray(b["observation"], dtype=np.float64), reward, b["done"],
                          b["done_reason"], b["info"])

    def close(self) -> None:
        try:
            self.request("bye")
        except (TransportError, ProtocolError):
            pass
        finally:
            self.sock.close()

    def __enter__(self) -> "EnvClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def client_reset(conn: EnvClient, config: Optional[Mapping[str, object]], seed: int) -> np.ndarray:
    if config is not None:
        conn.hello(config)
    return conn.reset(seed)


def client_step(conn: EnvClient, action) -> StepResult:
    return conn.step(action)
