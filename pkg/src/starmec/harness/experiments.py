"""Sweeps over a system parameter for several schemes and seeds.

A sweep runs in two phases. First every PPO policy the sweep needs is
trained (or loaded from the checkpoint cache under ``<output>/policies``);
then each (scheme, value, seed) cell is evaluated for ``eval_episodes``
episodes. Both phases can fan out over a process pool; results are merged
by sorted key so the CSV does not depend on the worker count.

Results CSV columns (one row per evaluated episode):

==================  =====  ==============================================
column              unit   meaning
==================  =====  ==============================================
scheme                     star_ppo, conventional_ppo, fixed_trajectory,
                           full_offload or random
axis                       swept parameter (input_bits, num_elements, none)
value               axis   Mbit for input_bits, count for num_elements
seed                       device layout and training seed
episode                    evaluation episode index
total_energy_J      J      local + offload + flight
local_energy_J      J
offload_energy_J    J
flight_energy_J     J
deadline_violations count  device-slots past their deadline
capacity_violations count  slots over the MEC capacity
speed_violations    count  slots over the speed limit
dead_links          count  device-slots with a zero-rate link and lam > 0
return_distance_m   m      distance between first and last position
path_length_m       m      total flown distance
==================  =====  ==============================================
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..agent.ppo import PpoConfig, load_checkpoint, save_checkpoint, train, write_curve
from ..baselines import (FixedTrajectoryPolicy, FullOffloadPolicy, PpoPolicy, RandomPolicy,
                         conventional_ris_mode)
from ..config import ConfigError, SystemConfig
from ..env import VecStarMecEnv
from ..mobility import path_length
from ..trace import EpisodeTrace

SCHEMES = ("star_ppo", "conventional_ppo", "fixed_trajectory", "full_offload", "random")
PPO_SCHEMES = {"star_ppo": "star_ppo", "conventional_ppo": "conventional_ppo", "full_offload": "star_ppo"}
OUTPUT_ENV_VAR = "STARMEC_OUTPUT_DIR"
EVAL_SEED_BASE = 1_000_000


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV_VAR, "results"))


# ------------------------------------------------------------------ axes
@dataclass(frozen=True)
class Axis:
    name: str
    retrain: bool  # whether each value needs its own trained policy

    def apply(self, system: SystemConfig, value: float) -> SystemConfig:
        if self.name == "input_bits":
            bits = float(value) * 1e6
            return system.replace(input_bits_range=(bits, bits))
        if self.name == "num_elements":
            return system.replace(num_elements=int(round(value)))
        return system


AXES = {
    "input_bits": Axis("input_bits", retrain=False),
    "num_elements": Axis("num_elements", retrain=True),
    "none": Axis("none", retrain=False),
}


def parse_grid(text: str) -> list[float]:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be >= 1")
        return [round(v, 12) for v in np.linspace(start, stop, count)]
    values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError("empty grid")
    return values


# ------------------------------------------------------------------ config
@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    iterations: int = 500
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    schemes: tuple[str, ...] = ("star_ppo", "conventional_ppo", "fixed_trajectory", "full_offload")
    eval_episodes: int = 1
    workers: int = 1
    output_dir: Path = field(default_factory=default_output_dir)
    write_traces: bool = False

    def validate(self) -> "ExperimentConfig":
        bad = {}
        if self.iterations < 0:
            bad["experiment.iterations"] = "must be >= 0"
        if not self.seeds:
            bad["experiment.seeds"] = "need at least one seed"
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown or not self.schemes:
            bad["experiment.schemes"] = f"choose from {', '.join(SCHEMES)}"
        if self.eval_episodes < 1:
            bad["experiment.eval_episodes"] = "must be >= 1"
        if self.workers < 1:
            bad["experiment.workers"] = "must be >= 1"
        if bad:
            raise ConfigError(bad)
        self.system.validate()
        self.ppo.validate()
        return self

    @classmethod
    def from_sections(cls, system: SystemConfig, sections: dict) -> "ExperimentConfig":
        exp = dict(sections.get("experiment") or {})
        known = {f.name for f in fields(cls)} - {"system", "ppo"}
        unknown = sorted(set(exp) - known)
        if unknown:
            raise ConfigError({f"experiment.{n}": "unknown field" for n in unknown})
        for key in ("seeds", "schemes"):
            if key in exp:
                exp[key] = tuple(exp[key])
        if "output_dir" in exp:
            exp["output_dir"] = Path(exp["output_dir"])
        return cls(system=system, ppo=PpoConfig.from_dict(sections.get("ppo") or {}), **exp)


# ------------------------------------------------------------------ results
@dataclass
class ResultRow:
    scheme: str
    axis: str
    value: float
    seed: int
    episode: int
    total_energy_J: float
    local_energy_J: float
    offload_energy_J: float
    flight_energy_J: float
    deadline_violations: int
    capacity_violations: int
    speed_violations: int
    dead_links: int
    return_distance_m: float
    path_length_m: float

    @classmethod
    def from_trace(cls, trace: EpisodeTrace, scheme: str, axis: str, value: float,
                   seed: int, episode: int) -> "ResultRow":
        energy = trace.total_energy()
        counts = trace.violation_counts()
        return cls(scheme, axis, float(value), int(seed), int(episode), energy.total, energy.local,
                   energy.offload, energy.flight, counts.get("deadline", 0), counts.get("capacity", 0),
                   counts.get("speed", 0), counts.get("dead_link", 0), trace.return_distance(),
                   path_length(trace.positions))

    def sort_key(self):
        return (SCHEMES.index(self.scheme), self.value, self.seed, self.episode)


RESULT_COLUMNS = tuple(f.name for f in fields(ResultRow))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(rows: list[ResultRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in sorted(rows, key=ResultRow.sort_key):
            writer.writerow([_fmt(getattr(row, c)) for c in RESULT_COLUMNS])


def read_results(path: str | Path) -> list[ResultRow]:
    types = {f.name: f.type for f in fields(ResultRow)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for name, text in rec.items():
                t = types[name]
                kw[name] = text if t == "str" else (int(text) if t == "int" else float(text))
            out.append(ResultRow(**kw))
    return out


# ------------------------------------------------------------------ policies
def scheme_system(scheme: str, system: SystemConfig, seed: int) -> SystemConfig:
    """System config a scheme runs on: fixed device layout per seed, surface variant per scheme."""
    cfg = system.replace(layout_seed=int(seed))
    if scheme == "conventional_ppo":
        cfg = conventional_ris_mode(cfg)
    return cfg.validate()


def policy_key(train_scheme: str, system: SystemConfig, ppo: PpoConfig, iterations: int) -> str:
    payload = json.dumps({"scheme": train_scheme, "system": system.to_dict(), "ppo": ppo.to_dict(),
                          "iterations": iterations}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def checkpoint_path(output_dir: Path, train_scheme: str, seed: int, key: str) -> Path:
    return Path(output_dir) / "policies" / f"{train_scheme}-seed{seed}-{key}.ckpt"


@dataclass(frozen=True)
class TrainJob:
    train_scheme: str
    seed: int
    system: SystemConfig
    ppo: PpoConfig
    iterations: int
    output_dir: Path

    @property
    def key(self) -> str:
        return policy_key(self.train_scheme, self.system, self.ppo, self.iterations)

    @property
    def path(self) -> Path:
        return checkpoint_path(self.output_dir, self.train_scheme, self.seed, self.key)


def run_train_job(job: TrainJob) -> Path:
    """Train one policy unless its checkpoint is already cached."""
    path = job.path
    if path.exists():
        return path
    path.parent.mkdir(parents=True, exist_ok=True)
    system = job.system
    ppo = PpoConfig(**{**asdict(job.ppo), "seed": int(job.seed)})
    result = train(lambda n: VecStarMecEnv(system, n, record=False), ppo, job.iterations)
    tmp = path.with_suffix(".tmp")
    save_checkpoint(result.params, tmp)
    write_curve(result.curve, path.with_suffix(".curve.csv"))
    tmp.replace(path)
    return path


def make_policy(scheme: str, seed: int, checkpoint: Path | None):
    if scheme == "fixed_trajectory":
        return FixedTrajectoryPolicy()
    if scheme == "random":
        return RandomPolicy(seed=EVAL_SEED_BASE + int(seed))
    if checkpoint is None or not Path(checkpoint).exists():
        raise FileNotFoundError(f"missing checkpoint for {scheme}: {checkpoint}")
    params = load_checkpoint(checkpoint)
    if scheme == "full_offload":
        return FullOffloadPolicy(PpoPolicy(params))
    return PpoPolicy(params)


def episode_seeds(seed: int, episodes: int) -> list[int]:
    return [EVAL_SEED_BASE + 1000 * int(seed) + e for e in range(episodes)]


@dataclass(frozen=True)
class EvalJob:
    scheme: str
    axis: str
    value: float
    seed: int
    system: SystemConfig
    episodes: int
    checkpoint: Path | None
    trace_dir: Path | None = None


def run_eval_job(job: EvalJob) -> list[ResultRow]:
    policy = make_policy(job.scheme, job.seed, job.checkpoint)
    env = VecStarMecEnv(job.system, job.episodes, record=True)
    obs = env.reset(episode_seeds(job.seed, job.episodes))
    policy.reset(env)
    done = False
    while not done:
        obs, _, done, _ = env.step(policy.act(obs))
    rows = []
    for e, trace in enumerate(env.traces):
        rows.append(ResultRow.from_trace(trace, job.scheme, job.axis, job.value, job.seed, e))
        if job.trace_dir is not None:
            Path(job.trace_dir).mkdir(parents=True, exist_ok=True)
            trace.write_jsonl(Path(job.trace_dir) / trace_name(job.scheme, job.axis, job.value, job.seed, e))
    return rows


def trace_name(scheme: str, axis: str, value: float, seed: int, episode: int) -> str:
    return f"{scheme}_{axis}-{value:g}_seed{seed}_ep{episode}.jsonl"


def _pool_map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def plan_training(exp: ExperimentConfig, axis: Axis, grid) -> dict[tuple, TrainJob]:
    """Unique training jobs keyed by (train_scheme, seed, value or None)."""
    jobs: dict[tuple, TrainJob] = {}
    values = grid if axis.retrain else [None]
    for scheme in exp.schemes:
        train_scheme = PPO_SCHEMES.get(scheme)
        if train_scheme is None:
            continue
        for seed in exp.seeds:
            for value in values:
                base = exp.system if value is None else axis.apply(exp.system, value)
                system = scheme_system(train_scheme, base, seed)
                jobs[(train_scheme, seed, value)] = TrainJob(train_scheme, int(seed), system, exp.ppo,
                                                             exp.iterations, Path(exp.output_dir))
    return jobs


def run_sweep(exp: ExperimentConfig, axis_name: str, grid) -> list[ResultRow]:
    """Train what is needed, evaluate every cell and return rows in sorted order."""
    exp.validate()
    if axis_name not in AXES:
        raise ValueError(f"unknown axis {axis_name!r}; choose from {', '.join(AXES)}")
    axis = AXES[axis_name]
    grid = [float(v) for v in grid]
    train_jobs = plan_training(exp, axis, grid)
    keys = sorted(train_jobs, key=lambda k: (k[0], k[1], -1.0 if k[2] is None else k[2]))
    paths = dict(zip(keys, _pool_map(run_train_job, [train_jobs[k] for k in keys], exp.workers)))
    trace_dir = Path(exp.output_dir) / "traces" if exp.write_traces else None
    eval_jobs = []
    for scheme in exp.schemes:
        for value in grid:
            for seed in exp.seeds:
                train_scheme = PPO_SCHEMES.get(scheme)
                ckpt = None
                if train_scheme is not None:
                    ckpt = paths[(train_scheme, seed, value if axis.retrain else None)]
                system = scheme_system(scheme, axis.apply(exp.system, value), seed)
                eval_jobs.append(EvalJob(scheme, axis.name, value, int(seed), system,
                                         exp.eval_episodes, ckpt, trace_dir))
    rows = [r for chunk in _pool_map(run_eval_job, eval_jobs, exp.workers) for r in chunk]
    return sorted(rows, key=ResultRow.sort_key)


def summarize(rows: list[ResultRow], column: str = "total_energy_J") -> dict[str, dict[float, tuple[float, float, int]]]:
    """``{scheme: {value: (mean, std, n)}}`` over seeds and episodes."""
    groups: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.value), []).append(getattr(r, column))
    out: dict[str, dict[float, tuple[float, float, int]]] = {}
    for (scheme, value), vals in sorted(groups.items(), key=lambda kv: (SCHEMES.index(kv[0][0]), kv[0][1])):
        arr = np.asarray(vals)
        out.setdefault(scheme, {})[value] = (float(arr.mean()), float(arr.std()), len(arr))
    return out
