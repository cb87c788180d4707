"""Task model: local and offloading latency/energy, completion time, totals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TaskSpec:
    input_bits: float
    cycles_per_bit: float
    deadline: float

    def __post_init__(self):
        if not self.input_bits > 0:
            raise ValueError("input_bits must be > 0")
        if not self.deadline > 0:
            raise ValueError("deadline must be > 0")


@dataclass
class DeviceCompute:
    cpu_freq: float
    chip_coeff: float = 1e-26
    p_max: float = 0.2

    def __post_init__(self):
        if not self.cpu_freq > 0:
            raise ValueError("cpu_freq must be > 0")
        if not self.chip_coeff > 0:
            raise ValueError("chip_coeff must be > 0")


@dataclass
class EnergyBreakdown:
    local: float = 0.0
    offload: float = 0.0
    flight: float = 0.0

    @property
    def total(self) -> float:
        return self.local + self.offload + self.flight

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        return EnergyBreakdown(self.local + other.local, self.offload + other.offload,
                               self.flight + other.flight)

    def as_dict(self) -> dict[str, float]:
        return {"local": self.local, "offload": self.offload, "flight": self.flight,
                "total": self.total}


def _check_fraction(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(lam > 1):
        raise ValueError("offload fraction must lie in [0, 1]")
    return lam


def local_latency(lam, input_bits, cycles_per_bit, cpu_freq):
    """Seconds to run the ``1 - lam`` share of the task on the device CPU."""
    lam = _check_fraction(lam)
    return (1.0 - lam) * input_bits * cycles_per_bit / cpu_freq


def local_energy(lam, input_bits, cycles_per_bit, cpu_freq, chip_coeff):
    lam = _check_fraction(lam)
    return chip_coeff * cpu_freq**2 * (1.0 - lam) * input_bits * cycles_per_bit


def offload_latency(lam, input_bits, rate_bps):
    """Uplink time of the offloaded share; +inf when bits are sent over a dead link."""
    lam = _check_fraction(lam)
    bits = lam * np.asarray(input_bits, dtype=float)
    rate_bps = np.asarray(rate_bps, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(bits > 0, bits / np.where(rate_bps > 0, rate_bps, 0.0), 0.0)
    return out[()] if out.ndim == 0 else out


def offload_energy(lam, input_bits, rate_bps, power):
    """Transmit energy ``p * lam * I / r``; +inf for positive power over a dead link."""
    t = offload_latency(lam, input_bits, rate_bps)
    power = np.asarray(power, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(power > 0, power * t, 0.0)
    return out[()] if np.ndim(out) == 0 else out


def slot_completion_time(lam, t_local, t_offload, mode: str = "paper"):
    """Completion time compared against the task deadline.

    ``paper`` evaluates ``(1 - lam) * t_local + lam * t_offload`` as written
    in the problem constraint, where both latencies already carry their own
    share. ``parallel`` takes ``max(t_local, t_offload)``.
    """
    lam = _check_fraction(lam)
    if mode == "paper":
        with np.errstate(invalid="ignore"):
            return (1.0 - lam) * t_local + np.where(lam > 0, lam * t_offload, 0.0)
    if mode == "parallel":
        return np.maximum(t_local, t_offload)
    raise ValueError(f"unknown completion mode {mode!r}")


def mec_load(lam, input_bits, cycles_per_bit):
    """MEC cycles demanded in one slot, per device."""
    return np.asarray(lam, dtype=float) * np.asarray(input_bits, dtype=float) * cycles_per_bit


def total_energy(trace) -> EnergyBreakdown:
    """Sum per-slot breakdowns of a complete trace (an iterable of breakdowns or a trace)."""
    slots = getattr(trace, "energies", trace)
    out = EnergyBreakdown()
    for item in slots:
        out = out + item
    return out
