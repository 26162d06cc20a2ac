"""Parallel rollout engine and PPO learner."""

from boardpush.learn.checkpoint import (CheckpointError, read_checkpoint,
                                        write_checkpoint)
from boardpush.learn.nets import (Adam, PolicyParams, RunningStats,
                                  gaussian_logp, policy_eval)
from boardpush.learn.ppo import TrainConfig, TransitionBatch, gae, ppo_update
from boardpush.learn.rollout import rollout
from boardpush.learn.train import (TrainingDiverged, build_envs, load_policy,
                                   save_policy, train)

__all__ = [
    "Adam", "CheckpointError", "PolicyParams", "RunningStats", "TrainConfig",
    "TrainingDiverged", "TransitionBatch", "build_envs", "gae",
    "gaussian_logp", "load_policy", "policy_eval", "ppo_update",
    "read_checkpoint", "rollout", "save_policy", "train", "write_checkpoint",
]
