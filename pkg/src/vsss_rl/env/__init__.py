from .core import (ACTION_MODES, GOAL_AGAINST, GOAL_FOR, MAX_STEPS, OPPONENT_POLICIES, STOP_INDEX,
                   Action, ActionContinuous, ActionDiscrete, EnvConfig, RewardBreakdown,
                   RewardWeights, SoccerEnv, StepResult, build_observation, compute_reward,
                   discrete_action_table, env_config_from_kv, env_config_to_kv, fixed_world,
                   random_world, rollout, to_continuous)
from .striker import ALIGN, RECOVER, STRIKE, scripted_striker, striker_mode

__all__ = [
    "ACTION_MODES", "GOAL_AGAINST", "GOAL_FOR", "MAX_STEPS", "OPPONENT_POLICIES", "STOP_INDEX",
    "Action", "ActionContinuous", "ActionDiscrete", "EnvConfig", "RewardBreakdown",
    "RewardWeights", "SoccerEnv", "StepResult", "build_observation", "compute_reward",
    "discrete_action_table", "env_config_from_kv", "env_config_to_kv", "fixed_world",
    "random_world", "rollout", "to_continuous",
    "ALIGN", "RECOVER", "STRIKE", "scripted_striker", "striker_mode",
]
