"""Flat ``key = value`` configuration files.

One file can carry every section; keys are dotted (``sim.dt``,
``env.max_steps``, ``dqn.lr``).  Blank lines and ``#`` comments are ignored.
Values are coerced to the type of the matching dataclass field default.
"""
from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    pass


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_kv(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_kv(path.read_text(encoding="utf-8"))


def dump_kv(mapping: Mapping[str, Any]) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(mapping.items()))


def config_hash(mapping: Mapping[str, Any]) -> str:
    return hashlib.sha256(dump_kv(mapping).encode("utf-8")).hexdigest()[:16]


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(value: str, like: Any, key: str) -> Any:
    try:
        if isinstance(like, bool):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            return float(value)
        if isinstance(like, tuple):
            return tuple(type(like[0])(v.strip()) for v in value.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    if like is None:
        return value if value.lower() not in ("", "none") else None
    return value


def section(mapping: Mapping[str, str], prefix: str) -> dict[str, str]:
    dot = prefix + "."
    return {k[len(dot):]: v for k, v in mapping.items() if k.startswith(dot)}


def build(cls, mapping: Mapping[str, str], prefix: str, **overrides):
    """Instantiate dataclass ``cls`` from the ``prefix.*`` keys of ``mapping``."""
    values = section(mapping, prefix)
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    defaults = cls()
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key {prefix}.{key}")
        kwargs[key] = _coerce(raw, getattr(defaults, key), f"{prefix}.{key}")
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def flatten(obj, prefix: str) -> dict[str, Any]:
    return {f"{prefix}.{f.name}": getattr(obj, f.name) for f in dataclasses.fields(obj)
            if not dataclasses.is_dataclass(getattr(obj, f.name))}


def known_prefixes() -> tuple[str, ...]:
    return ("sim", "field", "env", "reward", "dqn", "ddpg", "plant", "adapter", "eval", "net")


def check_prefixes(mapping: Mapping[str, str]) -> None:
    for key in mapping:
        if key.split(".", 1)[0] not in known_prefixes() or "." not in key:
            raise ConfigError(f"unknown key {key!r}")
