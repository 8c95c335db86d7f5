"""Policy evaluation on the surrogate plant with and without the learned adapter."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from ..agents.common import EvalResult, evaluate
from ..env import EnvConfig, SoccerEnv
from ..sim2real import SurrogateParams, SurrogatePlant
from ..seeding import substream
from .stats import StepsStats, steps_to_goal_stats


@dataclass
class TransferResult:
    adapter_off: EvalResult
    adapter_on: EvalResult

    @property
    def off_stats(self) -> StepsStats:
        return steps_to_goal_stats(self.adapter_off.episodes)

    @property
    def on_stats(self) -> StepsStats:
        return steps_to_goal_stats(self.adapter_on.episodes)

    def as_dict(self) -> dict:
        def side(res: EvalResult, stats: StepsStats) -> dict:
            return {"episodes": len(res.episodes), "success_rate": res.success_rate,
                    "mean_return": res.mean_return, "steps_to_goal": stats.as_dict()}

        return {"adapter_off": side(self.adapter_off, self.off_stats),
                "adapter_on": side(self.adapter_on, self.on_stats)}


def surrogate_env(config: EnvConfig, plant: SurrogateParams,
                  controller: Optional[Callable] = None) -> SoccerEnv:
    return SoccerEnv(config, controller=controller,
                     plant=SurrogatePlant(plant, substream(0, "transfer.plant")))


def transfer_policy_eval(policy: Callable, adapter: Callable, plant: SurrogateParams,
                         config: EnvConfig, seeds: Sequence[int]) -> TransferResult:
    """Same policy, same episode seeds, naive inverse versus learned adapter."""
    off = evaluate(surrogate_env(config, plant), policy, seeds)
    on = evaluate(surrogate_env(config, plant, adapter), policy, seeds)
    return TransferResult(off, on)
