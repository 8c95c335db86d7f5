"""Learned low-level adapter: desired (v, omega) -> wheel commands for a perturbed plant.

Data collection drives a lone robot (no walls) through the surrogate plant
with held random wheel commands.  After the wheels settle, the achieved
(v, omega) is measured by pose differencing and paired with the wheel
speeds present when the command was issued; the command itself is the
regression target.  The adapter is therefore an inverse steady-state model
with wheel-state feedback.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..env import EnvConfig, SoccerEnv
from ..nn import (Adam, MlpParams, MlpSpec, load_params, mlp_backward, mlp_forward,
                  params_to_bytes)
from ..physics import (BallState, ContractError, FieldSpec, RobotState, SimParams, WheelCommand,
                       WorldState, step_inplace, wrap_angle)
from ..seeding import substream
from .plant import SurrogateParams, SurrogatePlant, naive_inverse

DATASET_COLUMNS = ("v_achieved", "omega_achieved", "wheel_left", "wheel_right", "cmd_left", "cmd_right")
# a field large enough that a lone robot never meets a wall
_OPEN_FIELD = FieldSpec(length=1e4, width=1e4, goal_width=1.0, goal_depth=1.0)


class AdapterDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class AdapterSample:
    v_des: float
    omega_des: float
    wheel_left: float
    wheel_right: float
    cmd_left: float
    cmd_right: float

    @property
    def input(self) -> tuple:
        return (self.v_des, self.omega_des, self.wheel_left, self.wheel_right)

    @property
    def target(self) -> tuple:
        return (self.cmd_left, self.cmd_right)


@dataclass(frozen=True)
class Excitation:
    """Held random wheel commands.

    Each sample holds one command for ``settle_ticks`` then measures over
    ``measure_ticks``.  With probability ``hold_prob`` the previous command
    is perturbed instead of redrawn so near-steady transitions are covered.
    """

    settle_ticks: int = 100
    measure_ticks: int = 20
    hold_prob: float = 0.3
    hold_jitter: float = 5.0
    # fraction of the wheel clamp the excitation spans
    amplitude: float = 1.0


@dataclass
class TrackingReport:
    rmse_v: float
    rmse_omega: float
    combined: float
    per_command: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"rmse_v": self.rmse_v, "rmse_omega": self.rmse_omega,
                           "combined": self.combined, "per_command": self.per_command},
                          sort_keys=True, indent=1)


class FreeRobot:
    """One robot in open space actuated through a surrogate pipeline."""

    def __init__(self, plant: SurrogateParams, rng: np.random.Generator):
        self.sim = plant.base
        self.pipeline = SurrogatePlant(plant, rng)
        self.world = WorldState(0, [RobotState()], [], BallState(1e3, 1e3))
        self._theta_unwrapped = 0.0

    @property
    def robot(self) -> RobotState:
        return self.world.robots_blue[0]

    def run(self, cmd: WheelCommand, ticks: int) -> None:
        for _ in range(ticks):
            before = self.robot.theta
            step_inplace(self.world, [self.pipeline.perturb(cmd)], self.sim, _OPEN_FIELD)
            self._theta_unwrapped += wrap_angle(self.robot.theta - before)

    def measure(self, ticks: int, command: Callable[[RobotState], WheelCommand],
                hold: int = 1) -> tuple[float, float]:
        """Run ``ticks`` ticks re-querying ``command`` every ``hold`` ticks; return (v, omega)."""
        r = self.robot
        x0, y0, th0 = r.x, r.y, self._theta_unwrapped
        heading0 = r.theta
        cmd = None
        for k in range(ticks):
            if k % hold == 0:
                cmd = command(self.robot)
            self.run(cmd, 1)
        duration = ticks * self.sim.dt
        return arc_velocity(self.robot.x - x0, self.robot.y - y0, heading0,
                            self._theta_unwrapped - th0, duration)


def arc_velocity(dx: float, dy: float, heading0: float, dtheta: float,
                 duration: float) -> tuple[float, float]:
    """(v, omega) of the constant-curvature arc joining two poses."""
    omega = dtheta / duration
    chord = math.hypot(dx, dy)
    mid = heading0 + dtheta / 2.0
    sign = 1.0 if dx * math.cos(mid) + dy * math.sin(mid) >= 0 else -1.0
    half = dtheta / 2.0
    arc = chord * (half / math.sin(half)) if abs(half) > 1e-9 else chord
    return sign * arc / duration, omega


def collect_adapter_dataset(plant: SurrogateParams, n_samples: int,
                            excitation: Excitation = Excitation(), seed: int = 0) -> list[AdapterSample]:
    if n_samples <= 0:
        raise ContractError("n_samples must be positive")
    cmd_rng = substream(seed, "adapter.excitation")
    bot = FreeRobot(plant, substream(seed, "adapter.plant"))
    limit = plant.base.max_wheel_speed * excitation.amplitude
    cmd = WheelCommand(0.0, 0.0)
    out = []
    for _ in range(n_samples):
        if cmd_rng.random() < excitation.hold_prob:
            jl, jr = cmd_rng.uniform(-excitation.hold_jitter, excitation.hold_jitter, 2)
            cmd = WheelCommand(float(np.clip(cmd.v_left + jl, -limit, limit)),
                               float(np.clip(cmd.v_right + jr, -limit, limit)))
        else:
            l, r = cmd_rng.uniform(-limit, limit, 2)
            cmd = WheelCommand(float(l), float(r))
        w0 = bot.robot
        # translation invariance: keep coordinates small
        w0.x = w0.y = 0.0
        wl, wr = w0.wheel_left, w0.wheel_right
        bot.run(cmd, excitation.settle_ticks)
        v, omega = bot.measure(excitation.measure_ticks, lambda _r, c=cmd: c)
        out.append(AdapterSample(v, omega, wl, wr, cmd.v_left, cmd.v_right))
    return out


def dataset_to_csv(samples: Sequence[AdapterSample], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_COLUMNS)
    for s in samples:
        w.writerow([repr(float(x)) for x in (*s.input, *s.target)])
    return buf.getvalue()


def dataset_from_csv(text: str) -> list[AdapterSample]:
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    if tuple(header) != DATASET_COLUMNS:
        raise ValueError(f"unexpected dataset columns {header}")
    return [AdapterSample(*(float(x) for x in row)) for row in reader]


def envelope_coverage(samples: Sequence[AdapterSample], v_max: float, omega_max: float,
                      bins: int = 10) -> float:
    """Fraction of the bins x bins grid over the action box holding a sample."""
    hit = np.zeros((bins, bins), dtype=bool)
    for s in samples:
        if abs(s.v_des) <= v_max and abs(s.omega_des) <= omega_max:
            i = min(bins - 1, int((s.v_des + v_max) / (2 * v_max) * bins))
            j = min(bins - 1, int((s.omega_des + omega_max) / (2 * omega_max) * bins))
            hit[i, j] = True
    return float(hit.mean())


# ------------------------------------------------------------------ training

@dataclass(frozen=True)
class AdapterTrainConfig:
    epochs: int = 150
    batch_size: int = 128
    lr: float = 1e-3
    val_fraction: float = 0.2
    hidden: tuple = (64, 64)
    seed: int = 0


class Normaliser:
    """Fixed physical scalings so adapter inputs and outputs are O(1)."""

    def __init__(self, sim: SimParams):
        self.v_scale = sim.wheel_radius * sim.max_wheel_speed
        self.w_scale = 2.0 * self.v_scale / sim.axle_length
        self.wheel_scale = sim.max_wheel_speed

    def inputs(self, x: np.ndarray) -> np.ndarray:
        return x / np.array([self.v_scale, self.w_scale, self.wheel_scale, self.wheel_scale])

    def targets(self, y: np.ndarray) -> np.ndarray:
        return y / self.wheel_scale

    def commands(self, y: np.ndarray) -> np.ndarray:
        return y * self.wheel_scale


def adapter_spec(hidden=(64, 64)) -> MlpSpec:
    return MlpSpec((4, *hidden, 2), "tanh", "identity")


@dataclass
class AdapterResult:
    params: MlpParams
    sim: SimParams
    val_rmse: float
    train_rmse: float
    losses: list


def _arrays(samples: Sequence[AdapterSample]):
    x = np.array([s.input for s in samples], dtype=np.float64)
    y = np.array([s.target for s in samples], dtype=np.float64)
    return x, y


def train_adapter(dataset: Sequence[AdapterSample], sim: SimParams,
                  cfg: AdapterTrainConfig = AdapterTrainConfig(),
                  spec: Optional[MlpSpec] = None,
                  validation: Optional[Sequence[AdapterSample]] = None) -> AdapterResult:
    """Mean-squared-error regression of wheel commands; RMSEs reported in rad/s."""
    if len(dataset) == 0:
        raise ContractError("dataset is empty")
    spec = spec or adapter_spec(cfg.hidden)
    norm = Normaliser(sim)
    x, y = _arrays(dataset)
    rng = substream(cfg.seed, "adapter.train")
    if validation is None:
        order = rng.permutation(len(x))
        n_val = int(round(cfg.val_fraction * len(x)))
        val_idx, train_idx = order[:n_val], order[n_val:]
        xv, yv = x[val_idx], y[val_idx]
        x, y = x[train_idx], y[train_idx]
    else:
        xv, yv = _arrays(validation)
    xn, yn = norm.inputs(x), norm.targets(y)
    params = MlpParams.init(spec, substream(cfg.seed, "adapter.init"))
    opt = Adam(params, cfg.lr)
    losses = []
    n = len(xn)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            out, cache = mlp_forward(params, xn[idx], cache=True)
            err = out - yn[idx]
            loss = float(np.mean(err * err))
            if not math.isfinite(loss):
                raise AdapterDiverged(f"non-finite adapter loss in epoch {epoch}")
            grads, _ = mlp_backward(params, cache, 2.0 * err / err.size)
            params = opt.step(params, grads)
        losses.append(loss)

    def rmse(xs, ys):
        if len(xs) == 0:
            return math.nan
        pred = norm.commands(mlp_forward(params, norm.inputs(xs)))
        return float(np.sqrt(np.mean((pred - ys) ** 2)))

    return AdapterResult(params, sim, rmse(xv, yv), rmse(x, y), losses)


class LearnedAdapter:
    """Controller hook: ``(v, omega, robot) -> WheelCommand`` through the trained net."""

    def __init__(self, params: MlpParams, sim: SimParams):
        self.params = params
        self.sim = sim
        self.norm = Normaliser(sim)

    def wheels(self, v: float, omega: float, wheel_left: float, wheel_right: float) -> WheelCommand:
        x = self.norm.inputs(np.array([v, omega, wheel_left, wheel_right]))
        out = self.norm.commands(mlp_forward(self.params, x))
        return WheelCommand(float(out[0]), float(out[1])).clamped(self.sim.max_wheel_speed)

    def __call__(self, v: float, omega: float, robot: RobotState) -> WheelCommand:
        return self.wheels(v, omega, robot.wheel_left, robot.wheel_right)

    def to_bytes(self, extra: Optional[dict] = None) -> bytes:
        meta = {"kind": "adapter", "sim": asdict(self.sim)}
        meta.update(extra or {})
        return params_to_bytes(self.params, meta)

    @classmethod
    def load(cls, path) -> "LearnedAdapter":
        params, meta = load_params(path)
        if meta.get("kind") != "adapter":
            raise ValueError(f"{path} is not an adapter checkpoint")
        return cls(params, SimParams(**meta["sim"]))


def naive_controller(sim: SimParams) -> Callable[[float, float, RobotState], WheelCommand]:
    return lambda v, omega, robot: naive_inverse(v, omega, sim)


# ------------------------------------------------------------------ evaluation

def tracking_grid(v_max: float, omega_max: float, n: int = 7) -> list[tuple[float, float]]:
    """Evenly spaced desired commands covering 90% of the action box."""
    vs = np.linspace(-0.9 * v_max, 0.9 * v_max, n)
    ws = np.linspace(-0.9 * omega_max, 0.9 * omega_max, n)
    return [(float(v), float(w)) for v in vs for w in ws]


def evaluate_tracking(controller: Callable, plant: SurrogateParams,
                      commands: Sequence[tuple[float, float]], seed: int = 0,
                      v_norm: float = 0.8, omega_norm: float = 12.0,
                      settle_ticks: int = 100, measure_ticks: int = 40,
                      control_ticks: int = 8) -> TrackingReport:
    """Hold each desired (v, omega), let it settle, and measure by pose differencing.

    ``combined`` is sqrt((rmse_v / v_norm)^2 + (rmse_omega / omega_norm)^2).
    """
    if len(commands) == 0:
        raise ContractError("need at least one test command")
    rng = substream(seed, "tracking.plant")
    per = []
    ev, ew = [], []
    for v_des, w_des in commands:
        bot = FreeRobot(plant, rng)
        ctrl = lambda robot, v=v_des, w=w_des: controller(v, w, robot)
        bot.measure(settle_ticks, ctrl, control_ticks)
        v, w = bot.measure(measure_ticks, ctrl, control_ticks)
        ev.append(v - v_des)
        ew.append(w - w_des)
        per.append({"v_des": v_des, "omega_des": w_des, "v": v, "omega": w})
    rmse_v = float(np.sqrt(np.mean(np.square(ev))))
    rmse_w = float(np.sqrt(np.mean(np.square(ew))))
    combined = math.hypot(rmse_v / v_norm, rmse_w / omega_norm)
    return TrackingReport(rmse_v, rmse_w, combined, per)
