"""Episodic step/reset environment over the physics core.

Observation layout (all entries clipped to [-1.25, 1.25]):

    ball:   x / half_length, y / half_width, vx / BALL_SPEED_NORM, vy / BALL_SPEED_NORM
    robot:  x / half_length, y / half_width, vx / v_phys, vy / v_phys,
            sin(theta), cos(theta), omega / omega_phys

Robots follow the ball in the order: controlled robot, its teammates by
index, then opponents by index.  ``v_phys`` and ``omega_phys`` are the
largest speeds the wheels can produce.  A yellow-side observer sees the
field rotated by pi, so every policy attacks towards +x.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..config import ConfigError
from ..physics import (BLUE, YELLOW, BallState, ContractError, FieldSpec, RobotState, SimParams,
                       WheelCommand, WorldState, detect_goal, step_inplace, wrap_angle)
from ..seeding import substream
from ..sim2real.plant import naive_inverse

BALL_SPEED_NORM = 2.0
OBS_BOUND = 1.25

OPPONENT_POLICIES = ("stationary", "random", "scripted_striker")
ACTION_MODES = ("continuous", "discrete")
SPAWN_MODES = ("fixed", "random")

GOAL_FOR = "goal_for"
GOAL_AGAINST = "goal_against"
MAX_STEPS = "max_steps"

# canonical blue placements (x, y, theta); yellow is the point reflection
FIXED_BLUE_SPAWNS = ((-0.40, 0.30, 0.0), (-0.60, 0.0, 0.0), (-0.40, -0.30, 0.0))


@dataclass(frozen=True)
class ActionContinuous:
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class ActionDiscrete:
    index: int = 0


Action = Union[ActionContinuous, ActionDiscrete]


@dataclass(frozen=True)
class RewardWeights:
    goal: float = 10.0
    ball_potential: float = 1.0
    robot_ball_potential: float = 0.2
    energy: float = 1e-4


@dataclass(frozen=True)
class EnvConfig:
    team_size: int = 1
    controlled_robot: int = 0
    opponent_policy: str = "stationary"
    max_steps: int = 500
    action_mode: str = "discrete"
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    spawn_mode: str = "fixed"
    # uniform +- jitter on the fixed ball spot; 0 keeps the ball at centre
    ball_jitter: float = 0.0
    v_max: float = 0.8
    omega_max: float = 12.0
    control_substeps: int = 8
    sim: SimParams = field(default_factory=SimParams)
    field: FieldSpec = field(default_factory=FieldSpec)
    log_path: Optional[str] = None

    def validate(self) -> "EnvConfig":
        if not 1 <= self.team_size <= 3:
            raise ConfigError("team_size must be in 1..3")
        if not 0 <= self.controlled_robot < self.team_size:
            raise ConfigError("controlled_robot must index a blue robot")
        if self.opponent_policy not in OPPONENT_POLICIES:
            raise ConfigError(f"opponent_policy must be one of {OPPONENT_POLICIES}")
        if self.action_mode not in ACTION_MODES:
            raise ConfigError(f"action_mode must be one of {ACTION_MODES}")
        if self.spawn_mode not in SPAWN_MODES:
            raise ConfigError(f"spawn_mode must be one of {SPAWN_MODES}")
        if self.max_steps <= 0 or self.control_substeps <= 0:
            raise ConfigError("max_steps and control_substeps must be positive")
        if not (self.v_max > 0 and self.omega_max > 0):
            raise ConfigError("v_max and omega_max must be positive")
        if self.ball_jitter < 0:
            raise ConfigError("ball_jitter must be >= 0")
        w = self.reward_weights
        if not all(math.isfinite(x) for x in (w.goal, w.ball_potential,
                                              w.robot_ball_potential, w.energy)):
            raise ConfigError("reward weights must be finite")
        return self

    @property
    def dt_control(self) -> float:
        return self.sim.dt * self.control_substeps

    @property
    def obs_dim(self) -> int:
        return 4 + 7 * 2 * self.team_size


@dataclass(frozen=True)
class RewardBreakdown:
    goal: float = 0.0
    ball_potential: float = 0.0
    robot_ball_potential: float = 0.0
    energy_penalty: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict:
        return {"goal": self.goal, "ball_potential": self.ball_potential,
                "robot_ball_potential": self.robot_ball_potential,
                "energy_penalty": self.energy_penalty, "total": self.total}


@dataclass
class StepResult:
    observation: np.ndarray
    reward: RewardBreakdown
    done: bool
    done_reason: Optional[str]
    info: dict


def discrete_action_table(config: EnvConfig) -> list[ActionContinuous]:
    """Nine (v, omega) pairs, v-major; index 4 is the stop command."""
    vs = (-config.v_max / 2, 0.0, config.v_max)
    ws = (-config.omega_max, 0.0, config.omega_max)
    return [ActionContinuous(v, w) for v in vs for w in ws]


STOP_INDEX = 4


def clamp_action(action: ActionContinuous, config: EnvConfig) -> ActionContinuous:
    v, w = float(action.v), float(action.omega)
    if not (math.isfinite(v) and math.isfinite(w)):
        raise ContractError("action components must be finite")
    return ActionContinuous(max(-config.v_max, min(config.v_max, v)),
                            max(-config.omega_max, min(config.omega_max, w)))


def to_continuous(action, config: EnvConfig) -> ActionContinuous:
    table = discrete_action_table(config)
    if isinstance(action, ActionDiscrete):
        idx = action.index
    elif isinstance(action, ActionContinuous):
        return clamp_action(action, config)
    elif isinstance(action, (int, np.integer)):
        idx = int(action)
    else:
        raise ContractError(f"unsupported action {action!r}")
    if not 0 <= idx < len(table):
        raise ContractError(f"discrete action {idx} outside [0, {len(table)})")
    return table[idx]


# ------------------------------------------------------------------ geometry

def mirrored(x: float, y: float, theta: float) -> tuple[float, float, float]:
    return -x, -y, wrap_angle(theta + math.pi)


def team_view(world: WorldState, side: str, index: int):
    """(controlled robot, teammates, opponents) seen from ``side``."""
    own = world.robots_blue if side == BLUE else world.robots_yellow
    other = world.robots_yellow if side == BLUE else world.robots_blue
    mates = [r for i, r in enumerate(own) if i != index]
    return own[index], mates, list(other)


def attacking_goal(side: str, fld: FieldSpec) -> tuple[float, float]:
    return (fld.half_length, 0.0) if side == BLUE else (-fld.half_length, 0.0)


def build_observation(world: WorldState, config: EnvConfig, side: str = BLUE,
                      index: Optional[int] = None) -> np.ndarray:
    if index is None:
        index = config.controlled_robot
    fld, sim = config.field, config.sim
    hl, hw = fld.half_length, fld.half_width
    v_phys = sim.wheel_radius * sim.max_wheel_speed
    w_phys = 2.0 * v_phys / sim.axle_length
    sgn = 1.0 if side == BLUE else -1.0
    b = world.ball
    feats = [sgn * b.x / hl, sgn * b.y / hw, sgn * b.vx / BALL_SPEED_NORM, sgn * b.vy / BALL_SPEED_NORM]
    me, mates, opp = team_view(world, side, index)
    for r in [me, *mates, *opp]:
        theta = r.theta if side == BLUE else wrap_angle(r.theta + math.pi)
        feats += [sgn * r.x / hl, sgn * r.y / hw, sgn * r.vx / v_phys, sgn * r.vy / v_phys,
                  math.sin(theta), math.cos(theta), r.ang_vel / w_phys]
    obs = np.asarray(feats, dtype=np.float64)
    np.clip(obs, -OBS_BOUND, OBS_BOUND, out=obs)
    return obs


def compute_reward(prev: WorldState, curr: WorldState, events: Optional[str],
                   weights: RewardWeights, config: EnvConfig, side: str = BLUE,
                   index: Optional[int] = None) -> RewardBreakdown:
    """Potential-based shaping plus the sparse goal term.

    ``events`` is ``"goal_for"``, ``"goal_against"`` or None.
    """
    if index is None:
        index = config.controlled_robot
    gx, gy = attacking_goal(side, config.field)

    def ball_goal(w):
        return math.hypot(w.ball.x - gx, w.ball.y - gy)

    def robot_ball(w):
        r = team_view(w, side, index)[0]
        return math.hypot(w.ball.x - r.x, w.ball.y - r.y)

    goal = 0.0
    if events == GOAL_FOR:
        goal = weights.goal
    elif events == GOAL_AGAINST:
        goal = -weights.goal
    ball_term = weights.ball_potential * (ball_goal(prev) - ball_goal(curr))
    robot_term = weights.robot_ball_potential * (robot_ball(prev) - robot_ball(curr))
    me = team_view(curr, side, index)[0]
    energy = -weights.energy * (abs(me.cmd_left) + abs(me.cmd_right)) * config.dt_control
    return RewardBreakdown(goal, ball_term, robot_term, energy,
                           goal + ball_term + robot_term + energy)


# ------------------------------------------------------------------ spawning

def fixed_world(config: EnvConfig) -> WorldState:
    blue, yellow = [], []
    for i in range(config.team_size):
        x, y, th = FIXED_BLUE_SPAWNS[i]
        blue.append(RobotState(x, y, th))
        mx, my, mth = mirrored(x, y, th)
        yellow.append(RobotState(mx, my, mth))
    return WorldState(0, blue, yellow, BallState())


def random_world(config: EnvConfig, rng: np.random.Generator) -> WorldState:
    """Uniform non-overlapping placement by rejection sampling."""
    fld, sim = config.field, config.sim
    rr, br = sim.robot_radius, sim.ball_radius
    margin = 0.01
    n = 2 * config.team_size
    for _ in range(10_000):
        bodies = []
        xs = rng.uniform(-(fld.half_length - rr - margin), fld.half_length - rr - margin, size=n)
        ys = rng.uniform(-(fld.half_width - rr - margin), fld.half_width - rr - margin, size=n)
        ths = rng.uniform(-math.pi, math.pi, size=n)
        bx = rng.uniform(-(fld.half_length - br - margin), fld.half_length - br - margin)
        by = rng.uniform(-(fld.half_width - br - margin), fld.half_width - br - margin)
        bodies = list(zip(xs.tolist(), ys.tolist()))
        ok = all(math.hypot(x - bx, y - by) >= rr + br + margin for x, y in bodies)
        ok = ok and all(math.hypot(bodies[i][0] - bodies[j][0], bodies[i][1] - bodies[j][1])
                        >= 2 * rr + margin for i in range(n) for j in range(i + 1, n))
        if ok:
            robots = [RobotState(x, y, wrap_angle(float(t))) for (x, y), t in zip(bodies, ths.tolist())]
            k = config.team_size
            return WorldState(0, robots[:k], robots[k:], BallState(float(bx), float(by)))
    raise RuntimeError("could not sample a collision-free spawn")


# -------------------------------------------------------------------- policy

# opponent callables: (world, side, index, rng) -> ActionContinuous
Opponent = Callable[[WorldState, str, int, np.random.Generator], ActionContinuous]


def make_opponent(name: str, config: EnvConfig) -> Opponent:
    if name == "stationary":
        return lambda world, side, index, rng: ActionContinuous(0.0, 0.0)
    if name == "random":
        table = discrete_action_table(config)
        return lambda world, side, index, rng: table[int(rng.integers(len(table)))]
    if name == "scripted_striker":
        from .striker import scripted_striker

        return lambda world, side, index, rng: scripted_striker(world, side, config, index)
    raise ConfigError(f"unknown opponent policy {name!r}")


class SoccerEnv:
    """Gym-style environment; the agent drives one blue robot.

    ``controller`` maps the agent's (v, omega) plus its robot state to wheel
    commands (naive inverse by default).  ``plant`` optionally perturbs the
    controlled robot's wheel commands every physics tick.
    """

    def __init__(self, config: EnvConfig | None = None, *, opponent: Optional[Opponent] = None,
                 controller: Optional[Callable] = None, plant=None, record: bool = False):
        self.config = (config or EnvConfig()).validate()
        self.table = discrete_action_table(self.config)
        self.opponent = opponent or make_opponent(self.config.opponent_policy, self.config)
        self.controller = controller
        self.plant = plant
        self.record = record
        self.world: Optional[WorldState] = None
        self.snapshots: list[bytes] = []
        self.steps = 0
        self.done = True
        self._log = None

    @property
    def n_actions(self) -> int:
        return len(self.table)

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    def reset(self, seed: int = 0) -> np.ndarray:
        cfg = self.config
        self.rng = substream(seed, "env.opponent")
        spawn_rng = substream(seed, "env.spawn")
        if cfg.spawn_mode == "fixed":
            world = fixed_world(cfg)
            if cfg.ball_jitter > 0:
                world.ball.x, world.ball.y = (float(v) for v in
                                              spawn_rng.uniform(-cfg.ball_jitter, cfg.ball_jitter, 2))
        else:
            world = random_world(cfg, spawn_rng)
        self.world = world
        if self.plant is not None:
            self.plant.reset(substream(seed, "env.plant"))
        self.steps = 0
        self.done = False
        self.snapshots = [world.to_bytes()] if self.record else []
        if cfg.log_path:
            if self._log is not None:
                self._log.close()
            self._log = open(cfg.log_path, "a", encoding="utf-8")
        return build_observation(world, cfg)

    def _wheels_for(self, robot: RobotState, action: ActionContinuous, controlled: bool) -> WheelCommand:
        if controlled and self.controller is not None:
            return self.controller(action.v, action.omega, robot)
        return naive_inverse(action.v, action.omega, self.config.sim)

    def step(self, action) -> StepResult:
        if self.world is None:
            raise ContractError("reset() must be called before step()")
        if self.done:
            raise ContractError("episode is done; call reset()")
        cfg = self.config
        act = to_continuous(action, cfg)
        prev = self.world
        world = prev.copy()
        ctrl = cfg.controlled_robot
        commands: list[WheelCommand] = []
        for i, robot in enumerate(world.robots_blue):
            if i == ctrl:
                commands.append(self._wheels_for(robot, act, True))
            else:
                commands.append(WheelCommand(0.0, 0.0))
        for i, robot in enumerate(world.robots_yellow):
            opp = clamp_action(self.opponent(world, YELLOW, i, self.rng), cfg)
            commands.append(self._wheels_for(robot, opp, False))

        scorer = None
        for _ in range(cfg.control_substeps):
            if self.plant is not None:
                ticked = list(commands)
                ticked[ctrl] = self.plant.perturb(commands[ctrl])
                step_inplace(world, ticked, cfg.sim, cfg.field)
            else:
                step_inplace(world, commands, cfg.sim, cfg.field)
            scorer = detect_goal(world, cfg.field)
            if scorer is not None:
                break
        # the stored command is the controller output, not the perturbed one
        world.robots_blue[ctrl].cmd_left = commands[ctrl].v_left
        world.robots_blue[ctrl].cmd_right = commands[ctrl].v_right

        self.world = world
        self.steps += 1
        event = None
        if scorer == BLUE:
            event = GOAL_FOR
        elif scorer == YELLOW:
            event = GOAL_AGAINST
        reward = compute_reward(prev, world, event, cfg.reward_weights, cfg)
        reason = event
        if reason is None and self.steps >= cfg.max_steps:
            reason = MAX_STEPS
        self.done = reason is not None
        if self.record:
            self.snapshots.append(world.to_bytes())
        info = {"step": self.steps, "sim_step": world.step,
                "wheels": (commands[ctrl].v_left, commands[ctrl].v_right)}
        if self._log is not None:
            self._log.write(json.dumps({"step": self.steps, "action": [act.v, act.omega],
                                        "reward": reward.as_dict(), "done_reason": reason},
                                       sort_keys=True) + "\n")
            if self.done:
                self._log.flush()
        return StepResult(build_observation(world, cfg), reward, self.done, reason, info)

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None


def rollout(env: SoccerEnv, policy: Callable[[np.ndarray], object], seed: int) -> list[StepResult]:
    obs = env.reset(seed)
    results = []
    while True:
        res = env.step(policy(obs))
        results.append(res)
        if res.done:
            return results
        obs = res.observation


# ------------------------------------------------------------- config files

def env_config_from_kv(mapping) -> EnvConfig:
    """Build an EnvConfig from ``sim.*``, ``field.*``, ``reward.*`` and ``env.*`` keys."""
    from ..config import build

    sim = build(SimParams, mapping, "sim")
    fld = build(FieldSpec, mapping, "field")
    weights = build(RewardWeights, mapping, "reward")
    cfg = build(EnvConfig, mapping, "env", sim=sim, field=fld, reward_weights=weights)
    return cfg.validate()


def env_config_to_kv(cfg: EnvConfig) -> dict:
    from ..config import flatten

    out = {}
    out.update(flatten(cfg.sim, "sim"))
    out.update(flatten(cfg.field, "field"))
    out.update(flatten(cfg.reward_weights, "reward"))
    out.update({k: v for k, v in flatten(cfg, "env").items() if v is not None})
    return out
