"""Replay files: a JSON header followed by fixed-size canonical world snapshots.

Layout: 8-byte magic, u32 header length, UTF-8 JSON header, u32 snapshot
count, then ``count`` snapshots of ``world_nbytes(n_blue + n_yellow)`` bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from ..env import EnvConfig
from ..physics import WorldState, world_nbytes
from .manifest import RunManifest, write_atomic

MAGIC = b"VSRPL\x00\x01\x00"


class ReplayError(ValueError):
    pass


@dataclass
class ReplayFile:
    header: dict
    snapshots: list

    @property
    def steps(self) -> int:
        return len(self.snapshots) - 1

    def worlds(self) -> list[WorldState]:
        return [WorldState.from_bytes(s) for s in self.snapshots]

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        size = world_nbytes(self.header["n_blue"] + self.header["n_yellow"])
        for s in self.snapshots:
            if len(s) != size:
                raise ReplayError(f"snapshot of {len(s)} bytes, expected {size}")
        return b"".join([MAGIC, struct.pack("<I", len(head)), head,
                         struct.pack("<I", len(self.snapshots)), *self.snapshots])

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReplayFile":
        if data[:8] != MAGIC:
            raise ReplayError("not a replay file (bad magic)")
        try:
            (hlen,) = struct.unpack_from("<I", data, 8)
            header = json.loads(data[12:12 + hlen].decode("utf-8"))
            (count,) = struct.unpack_from("<I", data, 12 + hlen)
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ReplayError(f"corrupt replay header: {exc}") from exc
        size = world_nbytes(header["n_blue"] + header["n_yellow"])
        off = 16 + hlen
        if len(data) != off + count * size:
            raise ReplayError(f"expected {count} snapshots of {size} bytes, file size disagrees")
        return cls(header, [data[off + i * size: off + (i + 1) * size] for i in range(count)])


def replay_header(config: EnvConfig, manifest: Optional[RunManifest] = None, **extra) -> dict:
    head = {"field": asdict(config.field), "n_blue": config.team_size,
            "n_yellow": config.team_size, "dt": config.sim.dt,
            "control_substeps": config.control_substeps}
    if manifest is not None:
        head["manifest"] = manifest.embedded()
    head.update(extra)
    return head


def export_replay(snapshots: Sequence[bytes], config: EnvConfig, path,
                  manifest: Optional[RunManifest] = None, **extra) -> ReplayFile:
    """Write a recorded episode; nothing is left behind if writing fails."""
    if len(snapshots) < 2:
        raise ReplayError("need a completed episode (at least two snapshots)")
    replay = ReplayFile(replay_header(config, manifest, **extra), list(snapshots))
    write_atomic(Path(path), replay.to_bytes())
    return replay


def read_replay(path) -> ReplayFile:
    return ReplayFile.from_bytes(Path(path).read_bytes())
