"""
Link budget of the aerial surface
=================================

Why phase alignment decides whether offloading pays off at all.
"""

import numpy as np

from starmec import channel as ch
from starmec.config import SystemConfig
from starmec.env import VecStarMecEnv

cfg = SystemConfig()
env = VecStarMecEnv(cfg, 1, record=False)
env.reset([7])
s = env.state

# %%
# The surface starts with every phase at zero. Those settings add the
# per-element terms with random relative phases, so the gain grows
# roughly like sqrt(M) instead of M.
gains = np.abs(ch.device_gains(s.channel, s.coeffs, s.regions))[0] ** 2
print("regions        ", s.regions)
print("|h_k|^2 at reset", np.array2string(gains, precision=3))

# %%
# Point each side's phases at one device. Element m gets the angle that
# cancels the phase of its cascaded term conj(h_mb[m]) * h_km[m].
target = {0: int(np.flatnonzero(s.regions == 0)[0]), 1: int(np.flatnonzero(s.regions == 1)[0])}
h_mb, h_km = s.channel.h_mb[0], s.channel.h_km[0]
phi_r = np.angle(h_mb) - np.angle(h_km[target[0]])
phi_t = np.angle(h_mb) - np.angle(h_km[target[1]])
aligned = ch.StarCoefficients.split(np.full(cfg.num_elements, 0.5), phi_r, phi_t)
aligned_gains = np.abs(ch.device_gains(s.channel, aligned, s.regions))[0] ** 2
print("aligned        ", np.array2string(aligned_gains, precision=3))
print("gain factor on targets", [round(float(aligned_gains[k] / gains[k]), 1) for k in target.values()])

# %%
# Energy per offloaded bit at low SNR barely depends on transmit power:
# p * I / (W log2(1 + p g / noise)) tends to I * noise * ln 2 / (W g).
# Compare that floor with running the same bits locally.
bits = 75e3
local = cfg.chip_coeff * cfg.cpu_freq ** 2 * bits * cfg.cycles_per_bit
for name, g in (("reset phases", gains), ("aligned", aligned_gains)):
    floor = bits * cfg.noise_power * np.log(2) / (cfg.bandwidth * g)
    print(f"{name:13s} offload floor (J):", np.array2string(floor, precision=4), f" local: {local:.4f}")

# %%
# A conventional surface splits all energy to one side, so the devices
# across the line see no cascaded link at all from the start position.
conv = VecStarMecEnv(cfg.replace(conventional_ris=True), 1, record=False)
conv.reset([7])
cg = np.abs(ch.device_gains(conv.state.channel, conv.state.coeffs, conv.state.regions))[0] ** 2
print("conventional   ", np.array2string(cg, precision=3))
