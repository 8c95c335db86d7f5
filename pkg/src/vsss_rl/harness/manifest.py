"""Run manifests: what produced an artifact, and how to produce it again."""
from __future__ import annotations

import json
import platform
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .. import __version__
from ..config import config_hash


def module_versions() -> dict[str, str]:
    return {"vsss_rl": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list
    argv: list = field(default_factory=list)
    versions: dict = field(default_factory=module_versions)
    start_time: str = ""

    @classmethod
    def create(cls, command: str, config: Mapping, seeds: Sequence[int],
               argv: Sequence[str] | None = None) -> "RunManifest":
        # a JSON round trip up front keeps the hash stable when the manifest is reloaded
        plain = json.loads(json.dumps({k: config[k] for k in sorted(config)}))
        return cls(command, plain, [int(s) for s in seeds],
                   list(sys.argv if argv is None else argv),
                   start_time=datetime.now(timezone.utc).isoformat(timespec="seconds"))

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def embedded(self) -> dict:
        """The part stamped into artifacts: no timestamp and no argv (which holds output paths)."""
        return {"command": self.command, "config_hash": self.config_hash, "seeds": self.seeds,
                "versions": self.versions}

    def to_json(self) -> str:
        d = asdict(self)
        d["config_hash"] = self.config_hash
        return json.dumps(d, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        d.pop("config_hash", None)
        return cls(**d)

    def header_lines(self) -> list[str]:
        return [f"manifest {json.dumps(self.embedded(), sort_keys=True)}"]


def write_atomic(path: Path, data: bytes) -> Path:
    """Write via a sibling temp file so a failure never leaves a partial artifact."""
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    try:
        tmp.write_bytes(data)
        tmp.replace(path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def write_json(path: Path, payload: dict, manifest: RunManifest) -> Path:
    doc = dict(payload)
    doc["manifest"] = manifest.embedded()
    return write_atomic(path, (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode("utf-8"))


def write_sidecar(out_dir: Path, manifest: RunManifest) -> Path:
    return write_atomic(Path(out_dir) / "manifest.json", manifest.to_json().encode("utf-8"))
