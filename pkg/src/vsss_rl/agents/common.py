"""Pieces shared by the DQN and DDPG trainers: policies, evaluation, curves."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..env import GOAL_FOR, ActionContinuous, ActionDiscrete, SoccerEnv
from ..nn import MlpParams, load_params, mlp_forward, params_to_bytes, save_params
from ..physics import ContractError

EVAL_SEED_BASE = 1_000_000


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        super().__init__(message if checkpoint is None else f"{message} (diagnostic checkpoint: {checkpoint})")
        self.checkpoint = checkpoint


def eval_seeds(n: int, base: int = EVAL_SEED_BASE) -> list[int]:
    return list(range(base, base + n))


class GreedyQPolicy:
    def __init__(self, params: MlpParams):
        self.params = params

    def __call__(self, obs: np.ndarray) -> ActionDiscrete:
        q = mlp_forward(self.params, obs)
        return ActionDiscrete(int(np.argmax(q)))


class ActorPolicy:
    """Deterministic actor; network outputs in [-1, 1] scale to (v_max, omega_max)."""

    def __init__(self, params: MlpParams, v_max: float, omega_max: float):
        self.params = params
        self.v_max = v_max
        self.omega_max = omega_max

    def __call__(self, obs: np.ndarray) -> ActionContinuous:
        a = mlp_forward(self.params, obs)
        return ActionContinuous(float(a[0]) * self.v_max, float(a[1]) * self.omega_max)


class RandomPolicy:
    def __init__(self, n_actions: int, seed: int):
        self.n_actions = n_actions
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs: np.ndarray) -> ActionDiscrete:
        return ActionDiscrete(int(self.rng.integers(self.n_actions)))


def policy_from_checkpoint(path) -> Callable:
    params, meta = load_params(path)
    kind = meta.get("kind")
    if kind == "dqn":
        return GreedyQPolicy(params)
    if kind == "ddpg_actor":
        return ActorPolicy(params, float(meta["v_max"]), float(meta["omega_max"]))
    raise ValueError(f"{path}: checkpoint kind {kind!r} is not a policy")


def policy_checkpoint_bytes(policy, extra: Optional[dict] = None) -> bytes:
    meta = dict(extra or {})
    if isinstance(policy, GreedyQPolicy):
        meta["kind"] = "dqn"
    elif isinstance(policy, ActorPolicy):
        meta.update(kind="ddpg_actor", v_max=policy.v_max, omega_max=policy.omega_max)
    else:
        raise TypeError("only network policies can be checkpointed")
    return params_to_bytes(policy.params, meta)


@dataclass
class EpisodeRecord:
    seed: int
    steps: int
    total_return: float
    done_reason: str

    @property
    def scored(self) -> bool:
        return self.done_reason == GOAL_FOR


@dataclass
class EvalResult:
    episodes: list

    @property
    def mean_return(self) -> float:
        return float(np.mean([e.total_return for e in self.episodes]))

    @property
    def success_rate(self) -> float:
        return sum(e.scored for e in self.episodes) / len(self.episodes)

    @property
    def steps_to_goal(self) -> list:
        return [e.steps for e in self.episodes if e.scored]

    @property
    def mean_steps_to_goal(self) -> float:
        s = self.steps_to_goal
        return float(np.mean(s)) if s else math.nan


def run_episode(env: SoccerEnv, policy: Callable, seed: int) -> EpisodeRecord:
    obs = env.reset(seed)
    total = 0.0
    while True:
        res = env.step(policy(obs))
        total += res.reward.total
        if res.done:
            return EpisodeRecord(seed, env.steps, total, res.done_reason)
        obs = res.observation


def evaluate(env: SoccerEnv, policy: Callable, seeds: Iterable[int]) -> EvalResult:
    return EvalResult([run_episode(env, policy, s) for s in seeds])


def linear_epsilon(step: int, start: float, end: float, decay_steps: int) -> float:
    """Linear decay reaching ``end`` exactly at ``decay_steps`` and holding there."""
    if step >= decay_steps:
        return end
    return start + (end - start) * (step / decay_steps)


@dataclass
class CurvePoint:
    env_step: int
    eval_return: float
    steps_to_goal: float
    success_rate: float = math.nan


@dataclass
class LearningCurve:
    points: list = field(default_factory=list)

    def add(self, point: CurvePoint) -> None:
        if self.points and point.env_step <= self.points[-1].env_step:
            raise ContractError("learning-curve env_step must strictly increase")
        self.points.append(point)

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["env_step", "eval_return", "steps_to_goal", "success_rate"])
        for p in self.points:
            w.writerow([p.env_step, repr(float(p.eval_return)), repr(float(p.steps_to_goal)),
                        repr(float(p.success_rate))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        rows = [line for line in text.splitlines() if line and not line.startswith("#")]
        reader = csv.DictReader(rows)
        curve = cls()
        for r in reader:
            curve.add(CurvePoint(int(r["env_step"]), float(r["eval_return"]),
                                 float(r["steps_to_goal"]), float(r.get("success_rate", "nan"))))
        return curve


@dataclass
class TrainResult:
    policy: Callable
    curve: LearningCurve
    env_steps: int
    buffer_size: int
    checkpoints: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    # policy with the best periodic evaluation (validation seeds)
    best_policy: Optional[Callable] = None


class BestTracker:
    """Keeps the evaluated policy with the highest (success rate, mean return)."""

    def __init__(self):
        self.policy = None
        self.key = None

    def offer(self, policy, result: EvalResult) -> None:
        key = (result.success_rate, result.mean_return)
        if self.key is None or key > self.key:
            self.key = key
            self.policy = policy


def write_checkpoint(out_dir: Optional[Path], name: str, policy, meta: dict) -> Optional[Path]:
    if out_dir is None:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_bytes(policy_checkpoint_bytes(policy, meta))
    return path
