"""1-vs-1 matches between two single-robot players with per-episode role mirroring."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..env import (GOAL_AGAINST, GOAL_FOR, ActionContinuous, EnvConfig, SoccerEnv,
                   build_observation, scripted_striker, to_continuous)
from ..physics import BLUE, YELLOW, ContractError, WorldState
from ..seeding import substream
from .stats import StepsStats, steps_to_goal_stats


class Player:
    """Chooses an action for the robot ``index`` of ``side`` from the full world."""

    name = "player"

    def act(self, world: WorldState, side: str, config: EnvConfig,
            rng: np.random.Generator) -> ActionContinuous:
        raise NotImplementedError


class PolicyPlayer(Player):
    """Wraps an observation policy; yellow sees the mirrored (own-perspective) observation."""

    def __init__(self, policy: Callable[[np.ndarray], object], name: str = "policy"):
        self.policy = policy
        self.name = name

    def act(self, world, side, config, rng):
        return to_continuous(self.policy(build_observation(world, config, side, 0)), config)


class ScriptedPlayer(Player):
    name = "scripted"

    def act(self, world, side, config, rng):
        return scripted_striker(world, side, config, 0)


class StationaryPlayer(Player):
    name = "stationary"

    def act(self, world, side, config, rng):
        return ActionContinuous(0.0, 0.0)


def as_player(obj) -> Player:
    if isinstance(obj, Player):
        return obj
    if callable(obj):
        return PolicyPlayer(obj)
    raise TypeError(f"cannot use {obj!r} as a match player")


@dataclass
class MatchEpisode:
    index: int
    seed: int
    a_side: str
    steps: int
    winner: Optional[str]  # "a", "b" or None on timeout


@dataclass
class MatchStats:
    goals_a: int
    goals_b: int
    episodes: int
    steps_a: StepsStats
    steps_b: StepsStats
    records: list = field(default_factory=list)

    @property
    def timeouts(self) -> int:
        return self.episodes - self.goals_a - self.goals_b

    @property
    def steps_to_goal_mean(self) -> float:
        return self.steps_a.mean

    @property
    def steps_to_goal_std(self) -> float:
        return self.steps_a.std

    def as_dict(self) -> dict:
        return {"goals_a": self.goals_a, "goals_b": self.goals_b, "episodes": self.episodes,
                "timeouts": self.timeouts, "steps_to_goal_a": self.steps_a.as_dict(),
                "steps_to_goal_b": self.steps_b.as_dict(),
                "records": [vars(r) for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


class _YellowSeat:
    def __init__(self, player: Player, config: EnvConfig, rng: np.random.Generator):
        self.player, self.config, self.rng = player, config, rng

    def __call__(self, world, side, index, env_rng):
        return self.player.act(world, side, self.config, self.rng)


def match_config(config: EnvConfig) -> EnvConfig:
    return replace(config, team_size=1, controlled_robot=0)


def run_match(player_a, player_b, config: EnvConfig, episodes: int, seed: int,
              plant_factory: Optional[Callable] = None) -> MatchStats:
    """Play ``episodes`` episodes; A is blue in even episodes and yellow in odd ones.

    Consecutive episode pairs share a spawn seed so every start position is
    played once from each side.
    """
    if episodes <= 0:
        raise ContractError("a match needs at least one episode")
    a, b = as_player(player_a), as_player(player_b)
    cfg = match_config(config)
    spawn_seeds = substream(seed, "match.env").integers(0, 2**31 - 1, size=(episodes + 1) // 2)
    rng_a, rng_b = substream(seed, "match.policy_a"), substream(seed, "match.policy_b")
    records = []
    for k in range(episodes):
        a_blue = k % 2 == 0
        blue, yellow = (a, b) if a_blue else (b, a)
        blue_rng, yellow_rng = (rng_a, rng_b) if a_blue else (rng_b, rng_a)
        env = SoccerEnv(cfg, opponent=_YellowSeat(yellow, cfg, yellow_rng))
        ep_seed = int(spawn_seeds[k // 2])
        env.reset(ep_seed)
        res = None
        while not env.done:
            res = env.step(blue.act(env.world, BLUE, cfg, blue_rng))
        winner = None
        if res.done_reason == GOAL_FOR:
            winner = "a" if a_blue else "b"
        elif res.done_reason == GOAL_AGAINST:
            winner = "b" if a_blue else "a"
        records.append(MatchEpisode(k, ep_seed, BLUE if a_blue else YELLOW, env.steps, winner))
    goals_a = sum(r.winner == "a" for r in records)
    goals_b = sum(r.winner == "b" for r in records)
    return MatchStats(goals_a, goals_b, episodes,
                      steps_to_goal_stats([r.steps for r in records if r.winner == "a"]),
                      steps_to_goal_stats([r.steps for r in records if r.winner == "b"]),
                      records)
