"""Command line: ``starmec {train,eval,sweep,oracle,plot}``.

Outputs go under ``--output-dir`` (default: ``$STARMEC_OUTPUT_DIR`` or
``./results``). CSV payloads are deterministic for a given seed; run
timestamps live only in the ``*.meta.json`` sidecars.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 missing
file (config or checkpoint), 4 training diverged.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..agent.ppo import TrainingDiverged
from ..config import ConfigError, SystemConfig, load_config
from ..trace import EpisodeTrace
from . import experiments as ex
from .oracle import OracleGrid, oracle_search


def write_metadata(target: Path, argv: list[str], **extra) -> Path:
    meta = {
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "starmec_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "argv": argv,
        **extra,
    }
    path = Path(str(target) + ".meta.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _experiment(args) -> ex.ExperimentConfig:
    if args.config:
        if not Path(args.config).exists():
            raise FileNotFoundError(f"config file not found: {args.config}")
        system, sections = load_config(args.config)
    else:
        system, sections = SystemConfig(), {}
    exp = ex.ExperimentConfig.from_sections(system, sections)
    if args.output_dir:
        exp.output_dir = Path(args.output_dir)
    for attr, name in (("iterations", "iterations"), ("episodes", "eval_episodes"), ("workers", "workers")):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(exp, name, value)
    if getattr(args, "seeds", None):
        exp.seeds = tuple(int(s) for s in args.seeds.split(","))
    if getattr(args, "schemes", None):
        exp.schemes = ex.SCHEMES[:4] if args.schemes == "all" else tuple(args.schemes.split(","))
    return exp.validate()


def cmd_train(args) -> int:
    exp = _experiment(args)
    if args.scheme not in ("star_ppo", "conventional_ppo"):
        raise ConfigError({"scheme": "train supports star_ppo and conventional_ppo"})
    system = ex.scheme_system(args.scheme, exp.system, args.seed)
    job = ex.TrainJob(args.scheme, args.seed, system, exp.ppo, exp.iterations, exp.output_dir)
    path = Path(args.checkpoint) if args.checkpoint else job.path
    if args.checkpoint and path.exists():
        path.unlink()
    if args.checkpoint:
        # train into the cache location, then copy to the requested path
        cached = ex.run_train_job(job)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(cached.read_bytes())
        path.with_suffix(".curve.csv").write_bytes(cached.with_suffix(".curve.csv").read_bytes())
    else:
        ex.run_train_job(job)
    write_metadata(path, sys.argv, system=system.to_dict(), ppo=exp.ppo.to_dict(), iterations=exp.iterations)
    print(f"checkpoint: {path}")
    print(f"learning curve: {path.with_suffix('.curve.csv')}")
    return 0


def cmd_eval(args) -> int:
    exp = _experiment(args)
    system = ex.scheme_system(args.scheme, exp.system, args.seed)
    ckpt = None
    train_scheme = ex.PPO_SCHEMES.get(args.scheme)
    if train_scheme is not None:
        if args.checkpoint:
            ckpt = Path(args.checkpoint)
        else:
            train_system = ex.scheme_system(train_scheme, exp.system, args.seed)
            key = ex.policy_key(train_scheme, train_system, exp.ppo, exp.iterations)
            ckpt = ex.checkpoint_path(exp.output_dir, train_scheme, args.seed, key)
        if not ckpt.exists():
            raise FileNotFoundError(f"missing checkpoint for {args.scheme}: {ckpt} (run `starmec train` first)")
    out = Path(args.out) if args.out else exp.output_dir / f"eval_{args.scheme}_seed{args.seed}.csv"
    job = ex.EvalJob(args.scheme, "none", 0.0, args.seed, system, exp.eval_episodes, ckpt,
                     out.parent / "traces")
    rows = ex.run_eval_job(job)
    ex.write_results(rows, out)
    write_metadata(out, sys.argv, system=system.to_dict(), checkpoint=ckpt)
    for r in rows:
        print(f"{r.scheme} seed {r.seed} episode {r.episode}: {r.total_energy_J:.4f} J "
              f"(local {r.local_energy_J:.4f}, offload {r.offload_energy_J:.4f}, flight {r.flight_energy_J:.4f}), "
              f"return distance {r.return_distance_m:.3f} m")
    print(f"results: {out}")
    return 0


def cmd_sweep(args) -> int:
    exp = _experiment(args)
    grid = ex.parse_grid(args.grid)
    rows = ex.run_sweep(exp, args.axis, grid)
    out = Path(args.out) if args.out else exp.output_dir / f"sweep_{args.axis}.csv"
    ex.write_results(rows, out)
    write_metadata(out, sys.argv, system=exp.system.to_dict(), ppo=exp.ppo.to_dict(),
                   iterations=exp.iterations, seeds=list(exp.seeds), schemes=list(exp.schemes), grid=grid)
    for scheme, per_value in ex.summarize(rows).items():
        cells = ", ".join(f"{v:g}: {m:.4f}±{s:.4f}" for v, (m, s, _) in per_value.items())
        print(f"{scheme:18s} {cells}")
    print(f"{len(rows)} rows written to {out}")
    return 0


def cmd_oracle(args) -> int:
    exp = _experiment(args)
    system = exp.system.replace(num_devices=args.devices, num_elements=args.elements, num_slots=1,
                                instance_seed=args.seed).validate()
    if args.deadline is not None:
        system = system.replace(deadline_range=(args.deadline, args.deadline)).validate()
    grid = OracleGrid(lam=np.linspace(0.0, 1.0, args.lam_points),
                      beta_r=np.linspace(0.0, 1.0, args.beta_points),
                      phase=np.arange(args.phase_points) * (2 * np.pi / args.phase_points))
    result = oracle_search(system, grid, seed=args.seed)
    out = Path(args.out) if args.out else exp.output_dir / f"oracle_seed{args.seed}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(result).items()}
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_metadata(out, sys.argv, system=system.to_dict())
    print(result.summary())
    return 0


def cmd_plot(args) -> int:
    from .plots import FIGURES, plot_energy_sweep, plot_trajectories

    axis = FIGURES[args.fig]
    first = Path(args.input[0].rpartition("=")[2])
    out = Path(args.out) if args.out else first.with_name(f"{args.fig}.png")
    if axis is None:
        traces = {}
        for item in args.input:
            label, _, path = item.rpartition("=")
            if not Path(path).exists():
                raise FileNotFoundError(f"trace not found: {path}")
            traces[label or Path(path).stem] = EpisodeTrace.read_jsonl(path)
        plot_trajectories(traces, out)
    else:
        path = Path(args.input[0])
        if not path.exists():
            raise FileNotFoundError(f"results CSV not found: {path}")
        rows = ex.read_results(path)
        plot_energy_sweep(rows, out, axis=axis)
    print(f"figure: {out}\ndata: {out.with_suffix('.csv')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starmec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (schema_version 1)")
        p.add_argument("--output-dir", help=f"output directory (default ${ex.OUTPUT_ENV_VAR} or ./results)")

    p = sub.add_parser("train", help="train a PPO policy and write a checkpoint and learning curve")
    common(p)
    p.add_argument("--scheme", default="star_ppo", choices=("star_ppo", "conventional_ppo"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int)
    p.add_argument("--checkpoint", help="checkpoint path (default: cache path under the output dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="replay a policy, write traces and result rows")
    common(p)
    p.add_argument("--scheme", default="star_ppo", choices=ex.SCHEMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint")
    p.add_argument("--iterations", type=int, help="used to locate the cached checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="sweep input size or element count over schemes and seeds")
    common(p)
    p.add_argument("--axis", required=True, choices=("input_bits", "num_elements"))
    p.add_argument("--grid", required=True, help="start:stop:count or comma list (Mbit for input_bits)")
    p.add_argument("--schemes", help="comma list or 'all'")
    p.add_argument("--seeds", help="comma list, e.g. 0,1,2,3,4")
    p.add_argument("--iterations", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="exhaustive search on a one-slot instance")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--devices", type=int, default=1)
    p.add_argument("--elements", type=int, default=2)
    p.add_argument("--deadline", type=float, help="override the task deadline (s)")
    p.add_argument("--lam-points", type=int, default=41)
    p.add_argument("--beta-points", type=int, default=5)
    p.add_argument("--phase-points", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot", help="render a figure and its CSV")
    p.add_argument("--fig", required=True, choices=("energy_vs_input", "energy_vs_elements", "trajectories"))
    p.add_argument("--input", nargs="+", required=True,
                   help="sweep CSV, or label=trace.jsonl items for trajectories")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except TrainingDiverged as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return 4
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
