"""Deep deterministic policy gradient over normalised (v, omega) actions."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..env import ActionContinuous, SoccerEnv
from ..nn import (AdamState, Batch, MlpParams, MlpSpec, ReplayBuffer, Transition, adam_update,
                  mlp_backward, mlp_forward)
from ..physics import ContractError
from ..seeding import substream
from .common import (BestTracker, ActorPolicy, CurvePoint, LearningCurve, TrainingDiverged, TrainResult,
                     eval_seeds, evaluate, write_checkpoint)


@dataclass(frozen=True)
class DdpgConfig:
    gamma: float = 0.95
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau: float = 0.005
    batch_size: int = 64
    buffer_capacity: int = 100_000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    ou_dt: float = 1.0
    warmup_steps: int = 1000
    max_env_steps: int = 100_000
    hidden: tuple = (64, 64)
    eval_every: int = 10_000
    eval_episodes: int = 10

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ContractError("tau must lie in (0, 1]")
        if self.ou_sigma < 0:
            raise ContractError("ou_sigma must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must lie in [0, 1)")
        for name in ("batch_size", "buffer_capacity", "warmup_steps", "max_env_steps",
                     "eval_every", "eval_episodes"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    """Polyak average ``tau * source + (1 - tau) * target``."""
    if target.spec != source.spec:
        raise ContractError("soft_update needs networks with the same spec")
    if tau == 1.0:
        return source.copy()
    ws = [tau * s + (1.0 - tau) * t for s, t in zip(source.weights, target.weights)]
    bs = [tau * s + (1.0 - tau) * t for s, t in zip(source.biases, target.biases)]
    return MlpParams(target.spec, ws, bs)


def ou_noise_step(x, theta: float, mu: float, sigma: float, dt: float,
                  rng: np.random.Generator):
    """One Euler-Maruyama step of an Ornstein-Uhlenbeck process."""
    if not dt > 0:
        raise ContractError("dt must be positive")
    x = np.asarray(x, dtype=np.float64)
    return x + theta * (mu - x) * dt + sigma * math.sqrt(dt) * rng.standard_normal(x.shape)


def actor_spec(obs_dim: int, hidden=(64, 64)) -> MlpSpec:
    return MlpSpec((obs_dim, *hidden, 2), "relu", "tanh")


def critic_spec(obs_dim: int, hidden=(64, 64)) -> MlpSpec:
    return MlpSpec((obs_dim + 2, *hidden, 1), "relu", "identity")


@dataclass
class DdpgNets:
    actor: MlpParams
    critic: MlpParams
    actor_target: MlpParams
    critic_target: MlpParams
    actor_opt: AdamState
    critic_opt: AdamState

    @classmethod
    def init(cls, obs_dim: int, rng: np.random.Generator, hidden=(64, 64)) -> "DdpgNets":
        actor = MlpParams.init(actor_spec(obs_dim, hidden), rng)
        critic = MlpParams.init(critic_spec(obs_dim, hidden), rng)
        return cls(actor, critic, actor.copy(), critic.copy(),
                   AdamState.fresh(actor), AdamState.fresh(critic))


def critic_targets(batch: Batch, nets: DdpgNets, gamma: float) -> np.ndarray:
    next_a = mlp_forward(nets.actor_target, batch.next_obs)
    q_next = mlp_forward(nets.critic_target, np.hstack([batch.next_obs, next_a]))[:, 0]
    return batch.reward + gamma * q_next * (1.0 - batch.done)


def critic_loss_and_grads(critic: MlpParams, batch: Batch, y: np.ndarray):
    q, cache = mlp_forward(critic, np.hstack([batch.obs, batch.action]), cache=True)
    err = q[:, 0] - y
    loss = 0.5 * float(np.mean(err * err))
    grads, _ = mlp_backward(critic, cache, (err / len(y))[:, None])
    return loss, grads


def actor_objective_and_grads(actor: MlpParams, critic: MlpParams, obs: np.ndarray):
    """Mean Q(s, mu(s)) and its gradient w.r.t. the actor parameters."""
    a, a_cache = mlp_forward(actor, obs, cache=True)
    q, c_cache = mlp_forward(critic, np.hstack([obs, a]), cache=True)
    n = len(obs)
    _, dq_dinput = mlp_backward(critic, c_cache, np.full((n, 1), 1.0 / n))
    grads, _ = mlp_backward(actor, a_cache, dq_dinput[:, -2:])
    return float(q.mean()), grads


def ddpg_update(batch: Batch, nets: DdpgNets, cfg: DdpgConfig):
    """One critic regression step, one actor ascent step, then soft target updates.

    Returns ``(new_nets, {"critic_loss", "actor_objective"})``.
    """
    if len(batch) != cfg.batch_size:
        raise ContractError(f"batch of {len(batch)} != configured {cfg.batch_size}")
    y = critic_targets(batch, nets, cfg.gamma)
    c_loss, c_grads = critic_loss_and_grads(nets.critic, batch, y)
    critic, critic_opt = adam_update(nets.critic, c_grads, nets.critic_opt, cfg.critic_lr)
    objective, a_grads = actor_objective_and_grads(nets.actor, critic, batch.obs)
    # ascend: hand Adam the negated gradient
    neg = MlpParams(a_grads.spec, [-w for w in a_grads.weights], [-b for b in a_grads.biases])
    actor, actor_opt = adam_update(nets.actor, neg, nets.actor_opt, cfg.actor_lr)
    new = DdpgNets(actor, critic,
                   soft_update(nets.actor_target, actor, cfg.tau),
                   soft_update(nets.critic_target, critic, cfg.tau),
                   actor_opt, critic_opt)
    return new, {"critic_loss": c_loss, "actor_objective": objective}


def train_ddpg(env_factory: Callable[[], SoccerEnv], cfg: DdpgConfig, seed: int,
               out_dir: Optional[Path] = None, eval_env_factory: Optional[Callable] = None,
               log: Optional[Callable[[str], None]] = None,
               extra_meta: Optional[dict] = None) -> TrainResult:
    env = env_factory()
    eval_env = (eval_env_factory or env_factory)()
    ecfg = env.config
    nets = DdpgNets.init(env.obs_dim, substream(seed, "ddpg.init"), cfg.hidden)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.obs_dim, 2)
    noise_rng = substream(seed, "ddpg.noise")
    sampler = substream(seed, "ddpg.sample")
    episode_rng = substream(seed, "ddpg.episodes")
    curve = LearningCurve()
    losses: list = []
    checkpoints = []
    meta = {"algo": "ddpg", "seed": seed, **(extra_meta or {})}
    best = BestTracker()

    def policy_of(n: DdpgNets) -> ActorPolicy:
        return ActorPolicy(n.actor, ecfg.v_max, ecfg.omega_max)

    def new_episode():
        return env.reset(int(episode_rng.integers(0, 2**31 - 1))), np.full(2, cfg.ou_mu)

    obs, noise = new_episode()
    for t in range(1, cfg.max_env_steps + 1):
        if t <= cfg.warmup_steps:
            a = noise_rng.uniform(-1.0, 1.0, size=2)
        else:
            noise = ou_noise_step(noise, cfg.ou_theta, cfg.ou_mu, cfg.ou_sigma, cfg.ou_dt, noise_rng)
            a = np.clip(mlp_forward(nets.actor, obs) + noise, -1.0, 1.0)
        res = env.step(ActionContinuous(float(a[0]) * ecfg.v_max, float(a[1]) * ecfg.omega_max))
        terminal = res.done and res.done_reason != "max_steps"
        buffer.push(Transition(obs, a, res.reward.total, res.observation, terminal))
        if res.done:
            obs, noise = new_episode()
        else:
            obs = res.observation

        if t > cfg.warmup_steps:
            nets, info = ddpg_update(buffer.sample(cfg.batch_size, sampler), nets, cfg)
            if not math.isfinite(info["critic_loss"]):
                path = write_checkpoint(out_dir, f"diverged_step{t}.ckpt", policy_of(nets), meta)
                raise TrainingDiverged(f"non-finite critic loss at env step {t}", path)
            losses.append(info["critic_loss"])
        if t % cfg.eval_every == 0 or t == cfg.max_env_steps:
            current = policy_of(nets)
            result = evaluate(eval_env, current, eval_seeds(cfg.eval_episodes))
            best.offer(current, result)
            curve.add(CurvePoint(t, result.mean_return, result.mean_steps_to_goal, result.success_rate))
            if log:
                log(f"ddpg seed={seed} step={t} return={result.mean_return:.3f} "
                    f"success={result.success_rate:.2f} steps_to_goal={result.mean_steps_to_goal:.1f}")
            path = write_checkpoint(out_dir, f"ddpg_step{t}.ckpt", policy_of(nets), meta)
            if path:
                checkpoints.append(path)
    return TrainResult(policy_of(nets), curve, cfg.max_env_steps, len(buffer), checkpoints, losses,
                       best.policy)


def initial_policy(env: SoccerEnv, seed: int, hidden=(64, 64)) -> ActorPolicy:
    """The untrained actor that ``train_ddpg`` would start from."""
    nets = DdpgNets.init(env.obs_dim, substream(seed, "ddpg.init"), hidden)
    return ActorPolicy(nets.actor, env.config.v_max, env.config.omega_max)
