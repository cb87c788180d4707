"""
Comparing the surface schemes on one layout
===========================================

Train the STAR agent and the conventional-surface agent on the same device
layout, roll out every scheme on the same evaluation episodes, then draw
the flight paths.

Usage: python demos/03_compare_schemes.py [iterations] [output-dir]
"""

import sys
from pathlib import Path

import numpy as np

from starmec.harness import experiments as ex
from starmec.harness.plots import plot_trajectories

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 200
out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("results") / "demo"

exp = ex.ExperimentConfig(iterations=iterations, seeds=(0,), eval_episodes=8, output_dir=out,
                          schemes=("star_ppo", "conventional_ppo", "fixed_trajectory", "full_offload", "random"),
                          write_traces=True)

# %%
# Training results are cached under ``out/policies``; a second run of
# this script only evaluates.
rows = ex.run_sweep(exp, "none", [0.0])
for scheme, by_value in ex.summarize(rows).items():
    mean, std, n = by_value[0.0]
    print(f"{scheme:17s} {mean:.3f} +- {std:.3f} J over {n} episodes")

# %%
# Break the STAR total into its parts.
star = [r for r in rows if r.scheme == "star_ppo"]
for part in ("local_energy_J", "offload_energy_J", "flight_energy_J"):
    print(f"  star {part:17s} {np.mean([getattr(r, part) for r in star]):.4f}")

# %%
# Flight paths of the first evaluation episode.
from starmec.trace import EpisodeTrace

traces = {s: EpisodeTrace.read_jsonl(out / "traces" / ex.trace_name(s, "none", 0.0, 0, 0))
          for s in ("star_ppo", "conventional_ppo", "fixed_trajectory")}
plot_trajectories(traces, out / "trajectories.png")
print("wrote", out / "trajectories.png")
