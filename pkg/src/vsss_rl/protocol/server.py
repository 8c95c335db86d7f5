"""Environment server: one TCP connection is one session owning one environment."""
from __future__ import annotations

import logging
import socket
import socketserver
import threading
import uuid
from dataclasses import dataclass
from typing import Callable, Optional

from ..config import ConfigError
from ..env import ActionContinuous, ActionDiscrete, EnvConfig, SoccerEnv, env_config_from_kv
from ..physics import ContractError
from .framing import (BAD_ACTION, BAD_CONFIG, BAD_FRAME, BAD_KIND, EPISODE_DONE, NO_EPISODE,
                      SEQ_MISMATCH, DecodeError, Message, read_frame, write_frame)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServerLimits:
    idle_timeout: float = 60.0
    max_sessions: int = 64


def state_body(obs, reward=None, done=False, done_reason=None, info=None) -> dict:
    return {
        "observation": [float(x) for x in obs],
        "reward": reward.as_dict() if reward is not None else None,
        "done": bool(done),
        "done_reason": done_reason,
        "info": info or {},
    }


def parse_action(body: dict):
    action = body.get("action")
    if not isinstance(action, dict):
        raise ValueError("step body needs an 'action' object")
    if set(action) == {"index"} and isinstance(action["index"], int) and not isinstance(action["index"], bool):
        return ActionDiscrete(action["index"])
    if set(action) == {"v", "omega"}:
        v, w = action["v"], action["omega"]
        if all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in (v, w)):
            return ActionContinuous(float(v), float(w))
    raise ValueError(f"unrecognised action {action!r}")


def action_body(action) -> dict:
    if isinstance(action, ActionDiscrete):
        return {"action": {"index": int(action.index)}}
    if isinstance(action, ActionContinuous):
        return {"action": {"v": float(action.v), "omega": float(action.omega)}}
    return {"action": {"index": int(action)}}


class Session:
    """Protocol state machine for one connection; transport-free so it is easy to test."""

    def __init__(self, env_factory: Callable[[EnvConfig], SoccerEnv]):
        self.env_factory = env_factory
        self.id = uuid.uuid4().hex[:12]
        self.config = EnvConfig()
        self.env: Optional[SoccerEnv] = None
        self.last_seq = -1
        self.episode_started = False

    def error(self, req: Message, code: str, text: str) -> Message:
        return Message("error", req.seq, self.id, {"code": code, "message": text})

    def handle(self, req: Message) -> Message:
        if req.seq <= self.last_seq:
            return self.error(req, SEQ_MISMATCH,
                              f"seq {req.seq} is not greater than previous {self.last_seq}")
        self.last_seq = req.seq
        if req.kind == "hello":
            return self._hello(req)
        if req.kind == "reset":
            return self._reset(req)
        if req.kind == "step":
            return self._step(req)
        if req.kind == "bye":
            return Message("bye", req.seq, self.id, {})
        return self.error(req, BAD_KIND, f"clients may not send {req.kind!r}")

    def _configure(self, kv) -> None:
        if not isinstance(kv, dict) or not all(isinstance(v, (str, int, float, bool)) for v in kv.values()):
            raise ConfigError("config must be a flat object of scalar values")
        self.config = env_config_from_kv({k: str(v) for k, v in kv.items()})
        self.env = None
        self.episode_started = False

    def _hello(self, req: Message) -> Message:
        try:
            self._configure(req.body.get("config", {}))
        except (ConfigError, ValueError) as exc:
            return self.error(req, BAD_CONFIG, str(exc))
        return Message("hello", req.seq, self.id,
                       {"obs_dim": self.config.obs_dim, "n_actions": 9,
                        "action_mode": self.config.action_mode})

    def _reset(self, req: Message) -> Message:
        if "config" in req.body:
            try:
                self._configure(req.body["config"])
            except (ConfigError, ValueError) as exc:
                return self.error(req, BAD_CONFIG, str(exc))
        seed = req.body.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            return self.error(req, BAD_CONFIG, "seed must be a non-negative integer")
        if self.env is None:
            self.env = self.env_factory(self.config)
        obs = self.env.reset(seed)
        self.episode_started = True
        return Message("state", req.seq, self.id, state_body(obs))

    def _step(self, req: Message) -> Message:
        if not self.episode_started or self.env is None:
            return self.error(req, NO_EPISODE, "step before reset")
        if self.env.done:
            return self.error(req, EPISODE_DONE, "episode is over; send reset")
        try:
            action = parse_action(req.body)
            res = self.env.step(action)
        except (ValueError, ContractError) as exc:
            return self.error(req, BAD_ACTION, str(exc))
        info = {"step": res.info["step"], "sim_step": res.info["sim_step"]}
        return Message("state", req.seq, self.id,
                       state_body(res.observation, res.reward, res.done, res.done_reason, info))


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        server: EnvServer = self.server  # type: ignore[assignment]
        sock: socket.socket = self.request
        sock.settimeout(server.limits.idle_timeout)
        session = Session(server.env_factory)
        with server.lock:
            server.sessions += 1
        try:
            while True:
                try:
                    req = read_frame(sock)
                except socket.timeout:
                    log.info("session %s idle, closing", session.id)
                    return
                except DecodeError as exc:
                    bad = Message("error", 0, session.id, {"code": BAD_FRAME, "message": str(exc)})
                    try:
                        write_frame(sock, bad)
                    except OSError:
                        pass
                    return
                except OSError:
                    return
                if req is None:
                    return
                resp = session.handle(req)
                write_frame(sock, resp)
                if resp.kind == "bye":
                    return
        except OSError:
            return
        finally:
            with server.lock:
                server.sessions -= 1
            if session.env is not None:
                session.env.close()


class EnvServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, env_factory, limits: ServerLimits):
        super().__init__(address, _Handler)
        self.env_factory = env_factory
        self.limits = limits
        self.lock = threading.Lock()
        self.sessions = 0

    def verify_request(self, request, client_address) -> bool:
        with self.lock:
            return self.sessions < self.limits.max_sessions


class ServerHandle:
    def __init__(self, server: EnvServer, thread: threading.Thread):
        self.server = server
        self.thread = thread

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def default_env_factory(config: EnvConfig) -> SoccerEnv:
    return SoccerEnv(config)


def serve(env_factory: Callable[[EnvConfig], SoccerEnv] = default_env_factory,
          host: str = "127.0.0.1", port: int = 0,
          limits: ServerLimits = ServerLimits()) -> ServerHandle:
    """Start serving in a background thread; ``port=0`` picks a free port."""
    server = EnvServer((host, port), env_factory, limits)
    thread = threading.Thread(target=server.serve_forever, name="vsss-env-server", daemon=True)
    thread.start()
    return ServerHandle(server, thread)
