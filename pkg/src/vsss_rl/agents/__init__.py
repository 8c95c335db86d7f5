from .common import (ActorPolicy, EvalResult, GreedyQPolicy, LearningCurve, RandomPolicy,
                     TrainingDiverged, TrainResult, evaluate, linear_epsilon, policy_from_checkpoint)
from .ddpg import DdpgConfig, ddpg_update, initial_policy, soft_update, train_ddpg
from .dqn import DqnConfig, dqn_select_action, dqn_td_targets, train_dqn

__all__ = ["ActorPolicy", "EvalResult", "GreedyQPolicy", "LearningCurve", "RandomPolicy",
           "TrainingDiverged", "TrainResult", "evaluate", "linear_epsilon",
           "policy_from_checkpoint", "DdpgConfig", "ddpg_update", "initial_policy", "soft_update",
           "train_ddpg", "DqnConfig", "dqn_select_action", "dqn_td_targets", "train_dqn"]
