"""Steps-to-goal summary in the "M ± S" style."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class StepsStats:
    n: int
    mean: float
    std: float  # population std

    @property
    def empty(self) -> bool:
        return self.n == 0

    def format(self) -> str:
        if self.empty:
            return "n/a (no scoring episodes)"
        # str.format ignores the process locale, so the separator is always '.'
        return f"{self.mean:.1f} ± {self.std:.1f}"

    def as_dict(self) -> dict:
        return {"n": self.n, "mean": None if self.empty else self.mean,
                "std": None if self.empty else self.std, "formatted": self.format()}


def _records(items: list) -> bool:
    return bool(items) and all(hasattr(e, "steps") and hasattr(e, "scored") for e in items)


EMPTY_STATS = StepsStats(0, math.nan, math.nan)


def steps_to_goal_stats(episodes: Iterable) -> StepsStats:
    """Mean and population std over scoring episodes.

    Accepts episode records (anything with ``steps`` and ``scored``; non-scoring
    ones are skipped) or bare step counts of scoring episodes.
    """
    items = list(episodes)
    if _records(items):
        items = [e.steps for e in items if e.scored]
    arr = np.asarray(items, dtype=np.float64)
    if arr.size == 0:
        return EMPTY_STATS
    return StepsStats(int(arr.size), float(arr.mean()), float(arr.std(ddof=0)))
