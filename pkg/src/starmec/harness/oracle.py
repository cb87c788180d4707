"""Exhaustive grid search for the single-slot energy minimisation problem.

Only meant for tiny instances (one slot, a handful of devices and
elements). The instance is the first slot of an environment reset, so the
same channel draw and task can be replayed through the simulator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .. import channel as ch
from .. import compute as cp
from ..config import SystemConfig
from ..env import VecStarMecEnv

MAX_COMBINATIONS = 10_000_000


@dataclass
class OracleGrid:
    """Candidate values per decision variable.

    ``beta_r`` and ``phase`` are per-element grids (every element ranges
    over the same values). ``positions`` lists x/y serving points; ``None``
    means the start point only, which is the only option with one slot.
    """

    lam: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 41))
    power: np.ndarray | None = None
    beta_r: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 5))
    phase: np.ndarray = field(default_factory=lambda: np.arange(8) * (np.pi / 4))
    positions: list | None = None

    def power_values(self, p_max: float) -> np.ndarray:
        if self.power is not None:
            return np.asarray(self.power, dtype=float)
        return np.concatenate([[0.0], np.geomspace(p_max * 1e-4, p_max, 48)])


@dataclass
class OracleResult:
    feasible: bool
    energy: float
    lam: np.ndarray | None = None
    power: np.ndarray | None = None
    beta_r: np.ndarray | None = None
    phi_r: np.ndarray | None = None
    phi_t: np.ndarray | None = None
    position: np.ndarray | None = None
    evaluated: int = 0
    message: str = ""

    def summary(self) -> str:
        if not self.feasible:
            return f"no feasible point ({self.evaluated} grid points evaluated)"
        return (f"min energy {self.energy:.6g} J at lam={np.round(self.lam, 4).tolist()}, "
                f"p={np.round(self.power, 6).tolist()} W, beta_r={np.round(self.beta_r, 3).tolist()}, "
                f"position={np.round(self.position, 2).tolist()} ({self.evaluated} points)")


def _coefficient_grid(M: int, beta_values, phases, used_regions: set[int]):
    """All per-element (beta_r, phi_r, phi_t) assignments; phases of an unused side stay at 0."""
    betas = np.array(list(itertools.product(beta_values, repeat=M)), dtype=float)
    phase_sets = np.array(list(itertools.product(phases, repeat=M)), dtype=float)
    zero = np.zeros((1, M))
    phi_r = phase_sets if 0 in used_regions else zero
    phi_t = phase_sets if 1 in used_regions else zero
    b_idx, r_idx, t_idx = np.meshgrid(np.arange(len(betas)), np.arange(len(phi_r)),
                                      np.arange(len(phi_t)), indexing="ij")
    return betas[b_idx.ravel()], phi_r[r_idx.ravel()], phi_t[t_idx.ravel()]


def oracle_search(config: SystemConfig, grid: OracleGrid | None = None, seed: int = 0,
                  chunk: int = 4096) -> OracleResult:
    """Minimum-energy feasible point of the first slot of instance ``seed``.

    Feasibility means every device meets its deadline and the offloaded
    load fits the MEC capacity. Devices are scored independently given
    the surface configuration, which is exact for orthogonal access; the
    joint capacity check is applied to the per-device optimum.
    """
    grid = grid or OracleGrid()
    if config.interference_mode != "orthogonal":
        raise ValueError("oracle search supports orthogonal access only")
    c = config
    env = VecStarMecEnv(c, 1, record=False)
    env.reset([seed])
    s = env.state
    K, M = env.K, env.M
    lam = np.asarray(grid.lam, dtype=float)
    power = grid.power_values(c.p_max)
    positions = [np.asarray(c.start_xy, dtype=float)] if grid.positions is None else \
        [np.asarray(p, dtype=float) for p in grid.positions]
    used = set(int(r) for r in s.regions)

    def beta_values(pos):
        # a conventional surface has its split fixed by the side it hovers over
        if c.conventional_ris:
            return [1.0 if pos[0] < c.region_split_x else 0.0]
        return grid.beta_r

    def coefficient_grid(pos):
        return _coefficient_grid(M, beta_values(pos), grid.phase, used)

    per_position = [len(beta_values(p)) ** M * len(grid.phase) ** (M * len(used)) for p in positions]
    total = sum(per_position) * (len(lam) * len(power)) ** K
    if total > MAX_COMBINATIONS:
        raise ValueError(f"grid has {total} combinations, limit is {MAX_COMBINATIONS}")

    bits, deadline = s.input_bits[0], s.deadline[0]
    t_full = bits * c.cycles_per_bit / c.cpu_freq
    best = OracleResult(False, float("inf"), evaluated=total)
    L, P = lam[None, :, None], power[None, None, :]
    for pos in positions:
        position = np.array([pos[0], pos[1], c.altitude])
        real = env.channel_at(position[None, :], env.last_nlos)
        beta_r, phi_r, phi_t = coefficient_grid(pos)
        for start in range(0, len(beta_r), chunk):
            sl = slice(start, start + chunk)
            coeffs = ch.StarCoefficients.split(beta_r[sl], phi_r[sl], phi_t[sl])
            gains = np.abs(ch.device_gains(real, coeffs, s.regions)) ** 2   # (C, K)
            energy_c = np.zeros(len(gains))
            lam_c = np.zeros((len(gains), K), dtype=int)
            pow_c = np.zeros((len(gains), K), dtype=int)
            ok_c = np.ones(len(gains), dtype=bool)
            for k in range(K):
                rate = ch.rate(P * gains[:, k, None, None] / c.noise_power, c.bandwidth)  # (C, 1, P)
                e_loc = cp.local_energy(L, bits[k], c.cycles_per_bit, c.cpu_freq, c.chip_coeff)
                with np.errstate(divide="ignore", invalid="ignore"):
                    t_off = np.where(L > 0, L * bits[k] / rate, 0.0)
                    e_off = np.where(L > 0, P * t_off, 0.0)
                done = cp.slot_completion_time(L, (1.0 - L) * t_full[k], t_off, c.completion_mode)
                feasible = (done <= deadline[k]) & np.isfinite(t_off)
                feasible &= L * bits[k] * c.cycles_per_bit <= c.mec_capacity
                e = np.where(feasible, e_loc + e_off, np.inf)              # (C, L, P)
                flat = e.reshape(len(gains), -1)
                arg = np.argmin(flat, axis=1)
                val = flat[np.arange(len(gains)), arg]
                ok_c &= np.isfinite(val)
                energy_c += val
                lam_c[:, k], pow_c[:, k] = np.unravel_index(arg, (len(lam), len(power)))
            load = np.sum(lam[lam_c] * bits * c.cycles_per_bit, axis=1)
            ok_c &= load <= c.mec_capacity
            if not np.any(ok_c):
                continue
            energy_c = np.where(ok_c, energy_c, np.inf)
            i = int(np.argmin(energy_c))
            if energy_c[i] < best.energy:
                best = OracleResult(True, float(energy_c[i]), lam=lam[lam_c[i]], power=power[pow_c[i]],
                                    beta_r=coeffs.beta_r[i].copy(), phi_r=coeffs.phi_r[i].copy(),
                                    phi_t=coeffs.phi_t[i].copy(), position=position, evaluated=total)
    if not best.feasible:
        best.message = "no feasible point"
    return best
