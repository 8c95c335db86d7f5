"""Named random substreams derived from one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def substream(root: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; stable across runs and platforms."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(root), spawn_key=(key,))))


def child_seed(root: int, name: str) -> int:
    return int(substream(root, name).integers(0, 2**31 - 1))
