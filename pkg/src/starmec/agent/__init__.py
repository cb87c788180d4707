"""Actor-critic agent: MLP with manual gradients and a PPO learner."""

from .mlp import MlpParams, init_mlp, mlp_backward, mlp_forward
from .ppo import (
    Adam, PolicyParams, PpoConfig, PpoLearner, RolloutBuffer, TrainingDiverged,
    clipped_surrogate_loss, compute_returns_and_advantages, greedy_action, init_policy,
    load_checkpoint, policy_forward, run_policy, sample_action, save_checkpoint,
    squashed_logp, train, update,
)

__all__ = [
    "Adam", "MlpParams", "PolicyParams", "PpoConfig", "PpoLearner", "RolloutBuffer",
    "TrainingDiverged", "clipped_surrogate_loss", "compute_returns_and_advantages",
    "greedy_action", "init_mlp", "init_policy", "load_checkpoint", "mlp_backward",
    "mlp_forward", "policy_forward", "run_policy", "sample_action", "save_checkpoint",
    "squashed_logp", "train", "update",
]
