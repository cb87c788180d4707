"""Figures rendered from result CSVs and traces; the plotted numbers are always written as CSV too."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..trace import EpisodeTrace  # noqa: E402
from .experiments import ResultRow, summarize  # noqa: E402

LABELS = {
    "star_ppo": "STAR-RIS (PPO)",
    "conventional_ppo": "conventional RIS (PPO)",
    "fixed_trajectory": "fixed trajectory",
    "full_offload": "full offloading",
    "random": "random",
}
AXIS_LABELS = {"input_bits": "input data size (Mbit)", "num_elements": "number of elements M"}
FIGURES = {"energy_vs_input": "input_bits", "energy_vs_elements": "num_elements", "trajectories": None}
# fixed metadata keeps the PNG bytes stable across runs
_PNG_META = {"Software": None}


def write_summary_csv(summary, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "value", "mean_total_energy_J", "std_total_energy_J", "n"])
        for scheme, per_value in summary.items():
            for value, (mean, std, n) in per_value.items():
                writer.writerow([scheme, repr(value), repr(mean), repr(std), n])


def plot_energy_sweep(rows: list[ResultRow], out_png: str | Path, out_csv: str | Path | None = None,
                      axis: str | None = None) -> dict:
    """Mean total energy (error bars: one std over seeds and episodes) per scheme."""
    if not rows:
        raise ValueError("no result rows to plot")
    axis = axis or rows[0].axis
    summary = summarize([r for r in rows if r.axis == axis])
    out_png = Path(out_png)
    out_csv = Path(out_csv) if out_csv else out_png.with_suffix(".csv")
    write_summary_csv(summary, out_csv)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for scheme, per_value in summary.items():
        xs = np.array(sorted(per_value))
        means = np.array([per_value[x][0] for x in xs])
        stds = np.array([per_value[x][1] for x in xs])
        ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3, label=LABELS.get(scheme, scheme))
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("total energy (J)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return summary


def plot_trajectories(traces: dict[str, EpisodeTrace], out_png: str | Path,
                      out_csv: str | Path | None = None, area_size: float = 100.0) -> None:
    """Overlay UAV paths (one series per label) with device positions."""
    out_png = Path(out_png)
    out_csv = Path(out_csv) if out_csv else out_png.with_suffix(".csv")
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series", "index", "x", "y"])
        for label, trace in traces.items():
            for i, pos in enumerate(trace.positions):
                writer.writerow([label, i, repr(float(pos[0])), repr(float(pos[1]))])
        devices = next((t.devices for t in traces.values() if t.devices is not None), None)
        if devices is not None:
            for i, d in enumerate(devices):
                writer.writerow(["device", i, repr(float(d[0])), repr(float(d[1]))])
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    for label, trace in traces.items():
        pos = trace.positions
        if np.allclose(pos[:, :2], pos[0, :2]):
            ax.plot(pos[0, 0], pos[0, 1], marker="*", markersize=12, linestyle="none",
                    label=f"{LABELS.get(label, label)} (hovering)")
        else:
            ax.plot(pos[:, 0], pos[:, 1], marker=".", label=LABELS.get(label, label))
    if devices is not None:
        regions = next((t.regions for t in traces.values() if t.regions is not None), None)
        colors = ["tab:red" if regions is None or r == 0 else "tab:green"
                  for r in (regions if regions is not None else [0] * len(devices))]
        ax.scatter(devices[:, 0], devices[:, 1], c=colors, marker="s", label="devices")
    ax.set_xlim(0, area_size)
    ax.set_ylim(0, area_size)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120, metadata=_PNG_META)
    plt.close(fig)
