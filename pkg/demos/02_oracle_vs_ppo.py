"""
One slot, one device: PPO against exhaustive search
===================================================

On a single-slot instance with two elements the whole decision space is
small enough to grid. Train the agent on that fixed instance and see how
close its greedy action lands to the grid minimum.

Usage: python demos/02_oracle_vs_ppo.py [iterations]
"""

import math
import sys

from starmec.agent.ppo import PpoConfig, greedy_action, run_policy, train
from starmec.config import SystemConfig
from starmec.env import VecStarMecEnv
from starmec.harness.oracle import oracle_search

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 1000

# With one slot the agent gets a single increment from the reset state,
# so the bounds must let it reach any phase and any split in one move.
# Multiplicative power steps give it resolution near the low-power optimum.
cfg = SystemConfig(num_devices=1, num_elements=2, num_slots=1, instance_seed=0,
                   phase_step=math.pi, beta_step=1.0, power_update="multiplicative")

best = oracle_search(cfg)
print("grid:", best.summary())

# %%
result = train(lambda n: VecStarMecEnv(cfg, n, record=False), PpoConfig(seed=0), iterations)
print("last iteration:", {k: round(v, 4) for k, v in result.curve[-1].items()})

env = VecStarMecEnv(cfg, 1)
_, energy = run_policy(env, lambda o: greedy_action(result.params, o), [0])
rec = env.traces[0].records[0]
print(f"PPO greedy energy {energy[0]:.6g} J, lam={rec.lam.round(3)}, p={rec.power.round(6)} W")
print(f"ratio to grid minimum: {energy[0] / best.energy:.3f}")
