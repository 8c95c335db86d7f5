"""Wheel-level actuation: the closed-form inverse map and the perturbed surrogate plant."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..physics import ContractError, SimParams, WheelCommand, motor_lag


def naive_inverse(v: float, omega: float, params: SimParams) -> WheelCommand:
    """Wheel speeds that realise (v, omega) on the nominal robot, clamped."""
    half = omega * params.axle_length / 2.0
    r = params.wheel_radius
    return WheelCommand((v - half) / r, (v + half) / r).clamped(params.max_wheel_speed)


@dataclass(frozen=True)
class SurrogateParams:
    """Perturbations that stand in for an imperfect physical robot."""

    base: SimParams = field(default_factory=SimParams)
    gain_left: float = 1.0
    gain_right: float = 1.0
    deadzone: float = 0.0
    latency_steps: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not (self.gain_left > 0 and self.gain_right > 0):
            raise ContractError("wheel gains must be positive")
        if self.latency_steps < 0 or self.deadzone < 0 or self.noise_sigma < 0:
            raise ContractError("latency, deadzone and noise must be non-negative")

    @property
    def is_identity(self) -> bool:
        return (self.gain_left == 1.0 and self.gain_right == 1.0 and self.deadzone == 0.0
                and self.latency_steps == 0 and self.noise_sigma == 0.0)


IDENTITY_PLANT = SurrogateParams()


def canonical_plant(base: SimParams | None = None) -> SurrogateParams:
    """The fixed perturbation used by the acceptance experiments."""
    return SurrogateParams(base=base or SimParams(), gain_left=0.8, gain_right=1.05,
                           deadzone=1.0, latency_steps=2, noise_sigma=0.1)


class SurrogatePlant:
    """Stateful per-robot actuation pipeline: delay, gain, deadzone, noise.

    ``perturb`` returns the command that reaches the motors this physics
    tick; the first-order motor lag is left to the simulator so that an
    identity plant reproduces the base simulator exactly.
    """

    def __init__(self, params: SurrogateParams, rng: np.random.Generator | None = None):
        self.params = params
        self.reset(rng)

    def reset(self, rng: np.random.Generator | None = None) -> None:
        self.rng = rng if rng is not None else np.random.default_rng(0)
        zero = WheelCommand(0.0, 0.0)
        self._queue = deque([zero] * self.params.latency_steps)

    def perturb(self, cmd: WheelCommand) -> WheelCommand:
        p = self.params
        if p.latency_steps:
            self._queue.append(cmd)
            cmd = self._queue.popleft()
        left = cmd.v_left * p.gain_left
        right = cmd.v_right * p.gain_right
        if abs(left) < p.deadzone:
            left = 0.0
        if abs(right) < p.deadzone:
            right = 0.0
        if p.noise_sigma > 0.0:
            nl, nr = self.rng.normal(0.0, p.noise_sigma, size=2)
            left += float(nl)
            right += float(nr)
        return WheelCommand(left, right).clamped(p.base.max_wheel_speed)


def surrogate_apply(cmd: WheelCommand, plant: SurrogateParams, state: dict,
                    rng: np.random.Generator | None = None) -> WheelCommand:
    """One tick of the surrogate wheel pipeline including motor lag.

    ``state`` carries the delay line and the current wheel speeds between
    calls; pass an empty dict to start from rest.
    """
    if "pipeline" not in state:
        state["pipeline"] = SurrogatePlant(plant, rng)
        state["wheels"] = WheelCommand(0.0, 0.0)
    effective = state["pipeline"].perturb(cmd.clamped(plant.base.max_wheel_speed))
    w = state["wheels"]
    base = plant.base
    out = WheelCommand(motor_lag(w.v_left, effective.v_left, base.dt, base.motor_tau),
                       motor_lag(w.v_right, effective.v_right, base.dt, base.motor_tau))
    state["wheels"] = out
    return out
