from .manifest import RunManifest, write_atomic, write_json, write_sidecar
from .match import (MatchEpisode, MatchStats, Player, PolicyPlayer, ScriptedPlayer,
                    StationaryPlayer, as_player, run_match)
from .replay import ReplayError, ReplayFile, export_replay, read_replay
from .stats import EMPTY_STATS, StepsStats, steps_to_goal_stats
from .transfer import TransferResult, transfer_policy_eval

__all__ = ["RunManifest", "write_atomic", "write_json", "write_sidecar", "MatchEpisode",
           "MatchStats", "Player", "PolicyPlayer", "ScriptedPlayer", "StationaryPlayer",
           "as_player", "run_match", "ReplayError", "ReplayFile", "export_replay", "read_replay",
           "EMPTY_STATS", "StepsStats", "steps_to_goal_stats", "TransferResult",
           "transfer_policy_eval"]
