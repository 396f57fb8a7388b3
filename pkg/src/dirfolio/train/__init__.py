from .algos import ALGOS, TrainConfig, a2c_update, policy_update, ppo_update, prepare_targets, reinforce_update
from .grid import grid_search_finetune, rank_trials
from .rollout import Trajectory, collect_rollout, compute_gae, concat_trajectories, monte_carlo_returns
from .trainer import Trainer, TrainResult, policy_from_checkpoint

__all__ = [
    "ALGOS",
    "TrainConfig",
    "Trajectory",
    "Trainer",
    "TrainResult",
    "a2c_update",
    "collect_rollout",
    "compute_gae",
    "concat_trajectories",
    "grid_search_finetune",
    "monte_carlo_returns",
    "policy_from_checkpoint",
    "policy_update",
    "ppo_update",
    "prepare_targets",
    "rank_trials",
    "reinforce_update",
]
