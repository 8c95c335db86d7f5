"""Deep Q-learning over the discrete (v, omega) table."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..env import SoccerEnv
from ..nn import Adam, Batch, MlpParams, MlpSpec, ReplayBuffer, Transition, mlp_backward, mlp_forward
from ..physics import ContractError
from ..seeding import substream
from .common import (BestTracker, CurvePoint, GreedyQPolicy, LearningCurve, TrainingDiverged, TrainResult,
                     eval_seeds, evaluate, linear_epsilon, write_checkpoint)


@dataclass(frozen=True)
class DqnConfig:
    gamma: float = 0.95
    lr: float = 1e-3
    batch_size: int = 64
    buffer_capacity: int = 100_000
    target_sync_period: int = 1000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 50_000
    warmup_steps: int = 1000
    max_env_steps: int = 200_000
    train_every: int = 1
    hidden: tuple = (64, 64)
    huber_delta: float = 1.0
    eval_every: int = 10_000
    eval_episodes: int = 10

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must lie in [0, 1)")
        if self.epsilon_end > self.epsilon_start:
            raise ContractError("epsilon_end must not exceed epsilon_start")
        for name in ("batch_size", "buffer_capacity", "target_sync_period", "epsilon_decay_steps",
                     "warmup_steps", "max_env_steps", "train_every", "eval_every", "eval_episodes"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")


def q_spec(obs_dim: int, n_actions: int, hidden=(64, 64)) -> MlpSpec:
    return MlpSpec((obs_dim, *hidden, n_actions), "relu", "identity")


def dqn_td_targets(batch: Batch, q_target: MlpParams, gamma: float) -> np.ndarray:
    """r + gamma * max_a Q_target(s', a) * (1 - done)."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    q_next = mlp_forward(q_target, batch.next_obs)
    return batch.reward + gamma * q_next.max(axis=1) * (1.0 - batch.done)


def dqn_select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; ties go to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


def dqn_loss_and_grads(params: MlpParams, target: MlpParams, batch: Batch, gamma: float,
                       huber_delta: float = 1.0):
    y = dqn_td_targets(batch, target, gamma)
    q, cache = mlp_forward(params, batch.obs, cache=True)
    actions = batch.action.argmax(axis=1)
    rows = np.arange(len(batch))
    err = q[rows, actions] - y
    absd = np.abs(err)
    quad = np.minimum(absd, huber_delta)
    loss = float(np.mean(0.5 * quad * quad + huber_delta * (absd - quad)))
    g = np.zeros_like(q)
    g[rows, actions] = np.clip(err, -huber_delta, huber_delta) / len(batch)
    grads, _ = mlp_backward(params, cache, g)
    return loss, grads


def one_hot(index: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[index] = 1.0
    return v


def train_dqn(env_factory: Callable[[], SoccerEnv], cfg: DqnConfig, seed: int,
              out_dir: Optional[Path] = None, eval_env_factory: Optional[Callable] = None,
              log: Optional[Callable[[str], None]] = None,
              extra_meta: Optional[dict] = None,
              init_params: Optional[MlpParams] = None) -> TrainResult:
    """``init_params`` starts from given weights instead of a fresh network (fine-tuning)."""
    env = env_factory()
    eval_env = (eval_env_factory or env_factory)()
    n_actions = env.n_actions
    spec = q_spec(env.obs_dim, n_actions, cfg.hidden)
    if init_params is None:
        params = MlpParams.init(spec, substream(seed, "dqn.init"))
    elif init_params.spec != spec:
        raise ContractError("init_params do not match the Q-network shape")
    else:
        params = init_params.copy()
    target = params.copy()
    opt = Adam(params, cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.obs_dim, n_actions)
    explore = substream(seed, "dqn.explore")
    sampler = substream(seed, "dqn.sample")
    episode_rng = substream(seed, "dqn.episodes")
    curve = LearningCurve()
    losses: list = []
    checkpoints = []
    meta = {"algo": "dqn", "seed": seed, **(extra_meta or {})}
    best = BestTracker()

    def new_episode():
        return env.reset(int(episode_rng.integers(0, 2**31 - 1)))

    obs = new_episode()
    for t in range(1, cfg.max_env_steps + 1):
        if t <= cfg.warmup_steps:
            a = int(explore.integers(n_actions))
        else:
            eps = linear_epsilon(t - cfg.warmup_steps, cfg.epsilon_start, cfg.epsilon_end,
                                 cfg.epsilon_decay_steps)
            a = dqn_select_action(mlp_forward(params, obs), eps, explore)
        res = env.step(a)
        # time-limit truncation is not a terminal state for bootstrapping
        terminal = res.done and res.done_reason != "max_steps"
        buffer.push(Transition(obs, one_hot(a, n_actions), res.reward.total, res.observation, terminal))
        obs = new_episode() if res.done else res.observation

        if t > cfg.warmup_steps and t % cfg.train_every == 0:
            batch = buffer.sample(cfg.batch_size, sampler)
            loss, grads = dqn_loss_and_grads(params, target, batch, cfg.gamma, cfg.huber_delta)
            if not math.isfinite(loss):
                path = write_checkpoint(out_dir, f"diverged_step{t}.ckpt", GreedyQPolicy(params), meta)
                raise TrainingDiverged(f"non-finite DQN loss at env step {t}", path)
            params = opt.step(params, grads)
            losses.append(loss)
        if t % cfg.target_sync_period == 0:
            target = params.copy()
        if t % cfg.eval_every == 0 or t == cfg.max_env_steps:
            current = GreedyQPolicy(params)
            result = evaluate(eval_env, current, eval_seeds(cfg.eval_episodes))
            best.offer(current, result)
            curve.add(CurvePoint(t, result.mean_return, result.mean_steps_to_goal, result.success_rate))
            if log:
                log(f"dqn seed={seed} step={t} return={result.mean_return:.3f} "
                    f"success={result.success_rate:.2f} steps_to_goal={result.mean_steps_to_goal:.1f}")
            path = write_checkpoint(out_dir, f"dqn_step{t}.ckpt", GreedyQPolicy(params), meta)
            if path:
                checkpoints.append(path)
    return TrainResult(GreedyQPolicy(params), curve, cfg.max_env_steps, len(buffer), checkpoints,
                       losses, best.policy)
