"""Aerial STAR-RIS assisted MEC: simulator, PPO agent and experiment harness."""

from .config import ConfigError, RewardConfig, SystemConfig, load_config
from .env import ControlAction, StarMecEnv

__all__ = ["ConfigError", "ControlAction", "RewardConfig", "StarMecEnv", "SystemConfig", "load_config"]
__version__ = "0.1.0"
