"""The MDP around the simulator: observations, action decoding, reward.

The agent emits a vector in ``[-1, 1]^d`` which :meth:`VecStarMecEnv.decode`
maps onto physical increments. Layout of that vector::

    [lam (K) | dq (2) | dbeta_r (M, absent for conventional RIS) |
     dphi_r (M) | dphi_t (M) | dp (K)]

Every decoded quantity is clamped onto its feasible box before it touches
the physics, so phases stay in [0, 2pi), amplitudes split to one, offload
fractions and powers stay in range and the speed limit holds by
construction. Penalty terms in the reward are kept for the constraints the
clamps cannot see (deadlines, MEC capacity).

:class:`VecStarMecEnv` steps several independent instances in lockstep (all
episodes have exactly ``num_slots`` steps); :class:`StarMecEnv` is the
single-instance view used by tests and the harness.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import channel as ch
from . import compute as cp
from .config import SystemConfig
from .mobility import clamp_step
from .trace import EpisodeTrace, SlotRecord


def piecewise_C(x, g0: float):
    """Revenue ``g0`` when ``x >= 0``, otherwise ``x`` itself."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, g0, x)
    return out[()] if out.ndim == 0 else out


def reward(breakdown, deadline_slack, capacity_slack, speed_slack, cfg,
           energy_scale: float = 1.0):
    """Per-slot reward.

    ``mu1 * E / energy_scale + mu2 * sum_k C(deadline slack)
    + mu3 * sum_k C(capacity slack) + mu4 * C(speed slack)``. Slacks are
    ``limit - used``, so a negative slack is a violation of that size.
    ``breakdown`` is an :class:`EnergyBreakdown` or a total energy (array
    for batched use, the device axis last on the slack arrays).
    """
    total = breakdown.total if isinstance(breakdown, cp.EnergyBreakdown) else np.asarray(breakdown)
    g0 = cfg.g0
    value = cfg.mu1 * total / energy_scale
    value = value + cfg.mu2 * np.sum(piecewise_C(deadline_slack, g0), axis=-1)
    value = value + cfg.mu3 * np.sum(piecewise_C(capacity_slack, g0), axis=-1)
    value = value + cfg.mu4 * piecewise_C(speed_slack, g0)
    return float(value) if np.ndim(value) == 0 else value


@dataclass
class ControlAction:
    """Physical increments for one slot (arrays may carry a leading batch axis)."""

    lam: np.ndarray
    dq: np.ndarray
    dbeta_r: np.ndarray
    dphi_r: np.ndarray
    dphi_t: np.ndarray
    dp: np.ndarray

    def row(self, i: int) -> "ControlAction":
        return ControlAction(*(np.asarray(getattr(self, f.name))[i] for f in fields(self)))


@dataclass
class EnvState:
    """Simulator state; array fields carry a leading batch axis in the vectorised env."""

    slot: int                      # 1-based index of the slot about to be served
    position: np.ndarray           # (B, 3)
    start: np.ndarray              # (3,)
    devices: np.ndarray            # (B, K, 3)
    regions: np.ndarray            # (K,) 0 reflection, 1 transmission
    coeffs: ch.StarCoefficients    # (B, M) arrays
    power: np.ndarray              # (B, K)
    input_bits: np.ndarray         # (B, K)
    deadline: np.ndarray           # (B, K)
    channel: ch.ChannelRealization

    def view(self, i: int) -> "EnvState":
        """Copy of instance ``i`` with the batch axis dropped."""
        co = self.coeffs
        real = self.channel
        return EnvState(
            slot=self.slot, position=self.position[i].copy(), start=self.start.copy(),
            devices=self.devices[i].copy(), regions=self.regions.copy(),
            coeffs=ch.StarCoefficients(co.beta_r[i].copy(), co.beta_t[i].copy(),
                                       co.phi_r[i].copy(), co.phi_t[i].copy()),
            power=self.power[i].copy(), input_bits=self.input_bits[i].copy(),
            deadline=self.deadline[i].copy(),
            channel=ch.ChannelRealization(real.h_mb[i].copy(), real.h_km[i].copy(), real.rician_K,
                                          float(real.pathloss_mb[i]), real.pathloss_km[i].copy()),
        )


class VecStarMecEnv:
    """``num_envs`` independent instances advanced in lockstep."""

    def __init__(self, config: SystemConfig, num_envs: int = 1, record: bool = True):
        self.config = config.validate()
        self.num_envs = int(num_envs)
        self.record = record
        self.K = config.num_devices
        self.M = config.num_elements
        self.state: EnvState | None = None
        self.traces: list[EpisodeTrace] = []
        self._chan_scale = 1.0 / np.sqrt(ch.pathloss(config.channel_ref_distance, config.pathloss_ref,
                                                     config.pathloss_exponent))
        self._layout = self._make_layout()
        self._task_rngs: list[np.random.Generator] = []
        self._chan_rngs: list[np.random.Generator] = []

    # ----------------------------------------------------------- dimensions
    def _make_layout(self) -> dict[str, slice]:
        K, M = self.K, self.M
        sizes = [("lam", K), ("dq", 2)]
        if not self.config.conventional_ris:
            sizes.append(("dbeta_r", M))
        sizes += [("dphi_r", M), ("dphi_t", M), ("dp", K)]
        layout, start = {}, 0
        for name, size in sizes:
            layout[name] = slice(start, start + size)
            start += size
        self._action_dim = start
        return layout

    @property
    def action_dim(self) -> int:
        return self._action_dim

    @property
    def action_layout(self) -> dict[str, slice]:
        return dict(self._layout)

    @property
    def obs_dim(self) -> int:
        """``2M(K+1)`` channel + ``4M`` STAR + 3 position + 3K task + K power + 1 slot,
        plus ``KM`` alignment and K link-quality entries when enabled."""
        K, M = self.K, self.M
        extra = K if self.config.link_quality_features else 0
        extra += K * M if self.config.alignment_features else 0
        return 2 * M * (K + 1) + 4 * M + 3 + 3 * K + K + 1 + extra

    # ------------------------------------------------------------- lifecycle
    def place_devices(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Uniform placement: reflection devices left of the split line, transmission right."""
        c = self.config
        regions = np.array([0] * c.num_reflection + [1] * c.num_transmission)
        xs = np.where(regions == 0,
                      rng.uniform(0.0, c.region_split_x, size=self.K),
                      rng.uniform(c.region_split_x, c.area_size, size=self.K))
        ys = rng.uniform(0.0, c.area_size, size=self.K)
        return np.column_stack([xs, ys, np.zeros(self.K)]), regions

    def _draw_tasks(self):
        c = self.config
        bits = np.array([r.uniform(*c.input_bits_range, size=self.K) for r in self._task_rngs])
        deadline = np.array([r.uniform(*c.deadline_range, size=self.K) for r in self._task_rngs])
        return bits, deadline

    def channel_at(self, position, nlos) -> ch.ChannelRealization:
        c = self.config
        geo = ch.Geometry(ris=position, bs=np.asarray(c.bs_position, dtype=float), devices=self.state.devices)
        return ch.compose_rician(geo, nlos, self.M, c.rician_factor, ref_gain=c.pathloss_ref,
                                 exponent=c.pathloss_exponent, wavelength=c.wavelength,
                                 spacing=c.element_spacing)

    def _draw_nlos(self):
        draws = [ch.draw_nlos(r, self.M, self.K) for r in self._chan_rngs]
        return np.array([d[0] for d in draws]), np.array([d[1] for d in draws])

    def reset(self, seeds) -> np.ndarray:
        """Start new episodes; ``seeds`` holds one integer per instance."""
        c = self.config
        seeds = list(np.atleast_1d(seeds))
        if len(seeds) != self.num_envs:
            raise ValueError(f"need {self.num_envs} seeds, got {len(seeds)}")
        if c.instance_seed is not None:
            seeds = [c.instance_seed] * self.num_envs
        devices, self._task_rngs, self._chan_rngs = [], [], []
        for seed in seeds:
            geo_ss, task_ss, chan_ss = np.random.SeedSequence(int(seed)).spawn(3)
            if c.layout_seed is not None:
                geo_ss = np.random.SeedSequence(int(c.layout_seed)).spawn(3)[0]
            dev, regions = self.place_devices(np.random.default_rng(geo_ss))
            devices.append(dev)
            self._task_rngs.append(np.random.default_rng(task_ss))
            self._chan_rngs.append(np.random.default_rng(chan_ss))
        B = self.num_envs
        start = np.array([c.start_xy[0], c.start_xy[1], c.altitude], dtype=float)
        coeffs = ch.StarCoefficients.initial(self.M)
        coeffs = ch.StarCoefficients(*(np.tile(getattr(coeffs, n), (B, 1))
                                       for n in ("beta_r", "beta_t", "phi_r", "phi_t")))
        self.state = EnvState(
            slot=1, position=np.tile(start, (B, 1)), start=start, devices=np.array(devices),
            regions=regions, coeffs=coeffs, power=np.full((B, self.K), c.p_max / 2),
            input_bits=np.zeros((B, self.K)), deadline=np.zeros((B, self.K)), channel=None,
        )
        if c.conventional_ris:
            self._force_conventional(self.state.coeffs)
        self.state.input_bits, self.state.deadline = self._draw_tasks()
        self.last_nlos = self._draw_nlos()
        self.state.channel = self.channel_at(self.state.position, self.last_nlos)
        self.traces = [EpisodeTrace(num_slots=c.num_slots, devices=devices[i], regions=regions)
                       for i in range(B)]
        return self.observe()

    # ----------------------------------------------------------- observation
    def observe(self, slot: int | None = None) -> np.ndarray:
        c, s = self.config, self.state
        B = self.num_envs
        h_mb = s.channel.h_mb * self._chan_scale
        h_km = (s.channel.h_km * self._chan_scale).reshape(B, -1)
        if c.featurization == "cartesian":
            chan = [h_mb.real, h_mb.imag, h_km.real, h_km.imag]
        else:
            chan = [np.abs(h_mb), np.angle(h_mb) / np.pi, np.abs(h_km), np.angle(h_km) / np.pi]
        diag_r, diag_t = ch.star_diagonals(s.coeffs)
        star = [diag_r.real, diag_r.imag, diag_t.real, diag_t.imag]
        if c.alignment_features:
            star.append(self.phase_alignment().reshape(B, -1))
        slot = s.slot if slot is None else slot
        parts = chan + star + [
            s.position / c.area_size,
            s.input_bits / c.input_bits_norm,
            np.full((B, self.K), c.cycles_per_bit / 800.0),
            s.deadline / c.deadline_range[1],
            s.power / c.p_max,
            np.full((B, 1), slot / c.num_slots),
        ]
        if c.link_quality_features:
            parts.append(self.link_quality())
        return np.concatenate(parts, axis=1)

    def phase_alignment(self) -> np.ndarray:
        """Per device and element, ``|c_m| sin(arg c_m - arg g)`` over the mean ``|c_m|``.

        ``c_m`` is element m's term of the device's cascaded sum under the
        current phases (amplitudes left out) and ``g`` the sum itself. Up to a
        positive factor this is minus the derivative of ``|g|^2`` with respect
        to that element's phase, so a phase increment against it raises the gain.
        Shape (B, K, M).
        """
        s = self.state
        diag_r, diag_t = np.exp(1j * s.coeffs.phi_r), np.exp(1j * s.coeffs.phi_t)
        refl = (np.asarray(s.regions) == 0)[:, None]
        diag = np.where(refl, diag_r[:, None, :], diag_t[:, None, :])
        terms = np.conj(s.channel.h_mb)[:, None, :] * diag * s.channel.h_km   # (B, K, M)
        total = terms.sum(axis=-1, keepdims=True)
        scale = np.abs(terms).mean(axis=-1, keepdims=True)
        mismatch = np.imag(terms * np.conj(total)) / np.maximum(np.abs(total), 1e-300)
        return np.where(scale > 0, mismatch / np.where(scale > 0, scale, 1.0), 0.0)

    def link_quality(self) -> np.ndarray:
        """``log10(1 + p_max |h_k|^2 / noise) / 4`` under the current coefficients, per device."""
        c, s = self.config, self.state
        gain = np.abs(ch.device_gains(s.channel, s.coeffs, s.regions)) ** 2
        return np.log10(1.0 + c.p_max * gain / c.noise_power) / 4.0

    # ------------------------------------------------------------- actions
    def decode(self, vector) -> ControlAction:
        """Map policy outputs in ``[-1, 1]^d`` (shape (B, d) or (d,)) to physical increments."""
        v = np.asarray(vector, dtype=float)
        if v.shape[-1:] != (self.action_dim,):
            raise ValueError(f"action must have trailing size {self.action_dim}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("invalid action: NaN or inf in action vector")
        v = np.clip(v, -1.0, 1.0)
        c, L = self.config, self._layout
        lead = v.shape[:-1]
        if c.action_update_mode == "hadamard":
            # multiplicative factors in [0, 2]
            dq = 1.0 + v[..., L["dq"]]
            dbeta = 1.0 + v[..., L["dbeta_r"]] if "dbeta_r" in L else np.ones(lead + (self.M,))
            dphi_r, dphi_t = 1.0 + v[..., L["dphi_r"]], 1.0 + v[..., L["dphi_t"]]
            dp = 1.0 + v[..., L["dp"]]
        else:
            dq = v[..., L["dq"]] * c.max_step_distance
            dbeta = v[..., L["dbeta_r"]] * c.beta_step if "dbeta_r" in L else np.zeros(lead + (self.M,))
            dphi_r = v[..., L["dphi_r"]] * c.phase_step
            dphi_t = v[..., L["dphi_t"]] * c.phase_step
            if c.power_update == "multiplicative":
                dp = c.power_ratio_max ** v[..., L["dp"]]
            else:
                dp = v[..., L["dp"]] * c.power_step_frac * c.p_max
        lam = 0.5 * (v[..., L["lam"]] + 1.0)
        return ControlAction(lam, dq, dbeta, dphi_r, dphi_t, dp)

    def encode(self, action: ControlAction) -> np.ndarray:
        """Inverse of :meth:`decode` in additive mode (values clipped to [-1, 1])."""
        c, L = self.config, self._layout
        lam = np.asarray(action.lam, dtype=float)
        out = np.zeros(lam.shape[:-1] + (self.action_dim,))
        out[..., L["lam"]] = 2.0 * lam - 1.0
        out[..., L["dq"]] = np.asarray(action.dq) / c.max_step_distance
        if "dbeta_r" in L:
            out[..., L["dbeta_r"]] = np.asarray(action.dbeta_r) / c.beta_step
        out[..., L["dphi_r"]] = np.asarray(action.dphi_r) / c.phase_step
        out[..., L["dphi_t"]] = np.asarray(action.dphi_t) / c.phase_step
        if c.power_update == "multiplicative":
            with np.errstate(divide="ignore"):
                out[..., L["dp"]] = np.log(np.asarray(action.dp, dtype=float)) / np.log(c.power_ratio_max)
        else:
            out[..., L["dp"]] = np.asarray(action.dp) / (c.power_step_frac * c.p_max)
        return np.clip(out, -1.0, 1.0)

    def served_region(self, position=None) -> np.ndarray:
        """Region a conventional RIS serves from ``position``: 0 reflection, 1 transmission."""
        pos = self.state.position if position is None else np.asarray(position)
        return np.where(pos[..., 0] < self.config.region_split_x, 0, 1)

    def _force_conventional(self, coeffs: ch.StarCoefficients) -> None:
        beta_r = np.where(self.served_region() == 0, 1.0, 0.0)[:, None]
        coeffs.beta_r[...] = beta_r
        coeffs.beta_t[...] = 1.0 - beta_r

    def _apply_increments(self, act: ControlAction) -> None:
        c, s = self.config, self.state
        co = s.coeffs
        if c.action_update_mode == "hadamard":
            beta_r = co.beta_r * act.dbeta_r
            phi_r, phi_t = co.phi_r * act.dphi_r, co.phi_t * act.dphi_t
            power = s.power * act.dp
        else:
            beta_r = co.beta_r + act.dbeta_r
            phi_r, phi_t = co.phi_r + act.dphi_r, co.phi_t + act.dphi_t
            power = s.power * act.dp if c.power_update == "multiplicative" else s.power + act.dp
        s.coeffs = ch.StarCoefficients.split(beta_r, phi_r, phi_t)
        if c.conventional_ris:
            self._force_conventional(s.coeffs)
        s.power = np.clip(power, 0.0, c.p_max)

    def _move(self, act: ControlAction) -> np.ndarray:
        c, s = self.config, self.state
        if s.slot >= c.num_slots:
            return s.position.copy()
        cur = s.position[:, :2]
        dq = np.asarray(act.dq, dtype=float)
        target = cur * dq if c.action_update_mode == "hadamard" else cur + dq
        max_step = c.max_step_distance
        home = radius = None
        if c.return_guard:
            home = s.start[:2]
            radius = (c.num_slots - 1 - s.slot) * max_step
        limit = max_step if c.speed_clamp else np.inf
        new_xy = clamp_step(cur, target, limit, c.area_size, home, radius)
        return np.column_stack([new_xy, s.position[:, 2]])

    # ------------------------------------------------------------------ step
    def slot_physics(self, lam, coeffs: ch.StarCoefficients, power, channel=None, input_bits=None):
        """Energies and latencies of serving the current slot with the given controls.

        A dead link (zero rate, e.g. zero transmit power) cannot carry any
        bits, so the task then runs locally in full.
        """
        c, s = self.config, self.state
        real = s.channel if channel is None else channel
        bits = s.input_bits if input_bits is None else input_bits
        gains = ch.device_gains(real, coeffs, s.regions)
        sinrs = ch.sinr_all(gains, power, c.noise_power, c.interference_mode, s.regions)
        rates = ch.rate(sinrs, c.bandwidth)
        lam = np.clip(lam, 0.0, 1.0)
        lam_eff = np.where(rates > 0, lam, 0.0)
        dead_link = (rates <= 0) & (lam > 0)
        t_loc = cp.local_latency(lam_eff, bits, c.cycles_per_bit, c.cpu_freq)
        e_loc = cp.local_energy(lam_eff, bits, c.cycles_per_bit, c.cpu_freq, c.chip_coeff)
        sending = lam_eff > 0
        t_off = np.where(sending, lam_eff * bits / np.where(sending, rates, 1.0), 0.0)
        e_off = np.where(sending, power * t_off, 0.0)
        completion = cp.slot_completion_time(lam_eff, t_loc, t_off, c.completion_mode)
        load = cp.mec_load(lam_eff, bits, c.cycles_per_bit)
        return {"gains": gains, "sinr": sinrs, "rates": rates, "lam": lam_eff,
                "dead_link": dead_link, "t_local": t_loc, "t_offload": t_off,
                "e_local": e_loc, "e_offload": e_off, "completion": completion, "load": load}

    def step(self, action):
        """Advance every instance by one slot.

        ``action`` is a (B, d) array of policy outputs or a batched
        :class:`ControlAction`. Returns ``(obs, rewards, done, info)`` where
        ``done`` is shared by all instances.
        """
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        c, s = self.config, self.state
        if s.slot > c.num_slots:
            raise RuntimeError("episode is over; call reset()")
        act = action if isinstance(action, ControlAction) else self.decode(action)
        for f in fields(act):
            if not np.all(np.isfinite(getattr(act, f.name))):
                raise ValueError("invalid action: NaN or inf in action")

        self._apply_increments(act)
        phys = self.slot_physics(act.lam, s.coeffs, s.power)

        new_pos = self._move(act)
        moved = new_pos[:, :2] - s.position[:, :2]
        dist = np.hypot(moved[:, 0], moved[:, 1])
        e_flight = np.where(dist > 0, c.flight_kappa * (dist / c.slot_duration) ** c.flight_exponent, 0.0)
        e_local = phys["e_local"].sum(axis=1)
        e_off = phys["e_offload"].sum(axis=1)
        e_total = e_local + e_off + e_flight

        deadline_slack = s.deadline - phys["completion"]
        capacity_slack = c.mec_capacity / self.K - phys["load"]
        speed_slack = c.max_step_distance - dist
        rewards = reward(e_total, deadline_slack, capacity_slack, speed_slack, c.reward,
                         c.reward_energy_scale)
        rewards = np.asarray(rewards, dtype=float)

        done = s.slot >= c.num_slots
        if done:
            first = np.array([t.records[0].position if t.records else s.position[i]
                              for i, t in enumerate(self.traces)]) if self.record else s.start[None, :]
            ret = np.linalg.norm(s.position - first, axis=1)
            rewards = rewards - c.reward.return_penalty_weight * ret / c.max_step_distance

        violations = {
            "deadline": np.sum(deadline_slack < 0, axis=1),
            "capacity": phys["load"].sum(axis=1) > c.mec_capacity,
            "speed": dist > c.max_step_distance * (1 + 1e-9),
            "dead_link": np.sum(phys["dead_link"], axis=1),
        }
        if self.record:
            for i, tr in enumerate(self.traces):
                tr.append(SlotRecord(
                    slot=s.slot, position=s.position[i].copy(), lam=phys["lam"][i].copy(),
                    power=s.power[i].copy(), beta_r=s.coeffs.beta_r[i].copy(),
                    phi_r=s.coeffs.phi_r[i].copy(), phi_t=s.coeffs.phi_t[i].copy(),
                    displacement=moved[i].copy(), reward=float(rewards[i]),
                    energy=cp.EnergyBreakdown(float(e_local[i]), float(e_off[i]), float(e_flight[i])),
                    violations={k: v[i].item() for k, v in violations.items()},
                ))
        info = {"energy_local": e_local, "energy_offload": e_off, "energy_flight": e_flight,
                "energy_total": e_total, "violations": violations, "lam": phys["lam"],
                "completion": phys["completion"], "rates": phys["rates"], "displacement": moved}
        if done:
            obs = self.observe(slot=c.num_slots)
            s.slot += 1
        else:
            s.position = new_pos
            if c.conventional_ris:
                self._force_conventional(s.coeffs)
            s.slot += 1
            s.input_bits, s.deadline = self._draw_tasks()
            self.last_nlos = self._draw_nlos()
            s.channel = self.channel_at(s.position, self.last_nlos)
            obs = self.observe()
        return obs, rewards, done, info

    def sample_actions(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(self.num_envs, self.action_dim))


class StarMecEnv:
    """Single-instance environment with a gym-style ``reset``/``step``.

    >>> env = StarMecEnv(SystemConfig())
    >>> obs = env.reset(seed=0)
    >>> obs, r, done, info = env.step(np.zeros(env.action_dim))
    """

    def __init__(self, config: SystemConfig):
        self.vec = VecStarMecEnv(config, num_envs=1, record=True)
        self.config = self.vec.config
        self.K, self.M = self.vec.K, self.vec.M

    @property
    def action_dim(self) -> int:
        return self.vec.action_dim

    @property
    def obs_dim(self) -> int:
        return self.vec.obs_dim

    @property
    def action_layout(self) -> dict[str, slice]:
        return self.vec.action_layout

    @property
    def state(self) -> EnvState:
        """Snapshot (copy) of the current state."""
        return self.vec.state.view(0)

    @property
    def trace(self) -> EpisodeTrace:
        return self.vec.traces[0]

    def reset(self, seed: int = 0) -> np.ndarray:
        return self.vec.reset([seed])[0]

    def decode(self, vector) -> ControlAction:
        return self.vec.decode(vector)

    def encode(self, action: ControlAction) -> np.ndarray:
        return self.vec.encode(action)

    def step(self, action):
        if isinstance(action, ControlAction):
            batched = ControlAction(*(np.asarray(getattr(action, f.name), dtype=float)[None, ...]
                                      for f in fields(action)))
        else:
            a = np.asarray(action, dtype=float)
            if a.shape != (self.action_dim,):
                raise ValueError(f"action must have shape ({self.action_dim},), got {a.shape}")
            batched = a[None, :]
        obs, rewards, done, info = self.vec.step(batched)
        info = {k: ({kk: vv[0].item() for kk, vv in v.items()} if isinstance(v, dict) else v[0])
                for k, v in info.items()}
        info["energy"] = self.trace.records[-1].energy
        return obs[0], float(rewards[0]), done, info

    def sample_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=self.action_dim)
