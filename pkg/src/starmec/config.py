"""System configuration for the aerial STAR-RIS MEC simulator.

Every physical and learning constant lives on :class:`SystemConfig`. Values
that come from the evaluation setup of the original study (area, altitude,
speed limit, Rician factor, noise density, bandwidth, CPU parameters, task
ranges) are the defaults; the rest are documented modelling choices.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised when a configuration has invalid fields.

    ``fields`` maps each offending field name to a short reason.
    """

    def __init__(self, fields: dict[str, str]):
        self.fields = dict(fields)
        lines = [f"{name}: {reason}" for name, reason in sorted(self.fields.items())]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))


def dbm_per_hz_to_watts(density_dbm_hz: float, bandwidth_hz: float) -> float:
    """Integrate a noise density in dBm/Hz over ``bandwidth_hz`` and return watts."""
    total_dbm = density_dbm_hz + 10.0 * math.log10(bandwidth_hz)
    return 10.0 ** ((total_dbm - 30.0) / 10.0)


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass
class RewardConfig:
    mu1: float = -1.0
    mu2: float = 1.0
    mu3: float = 1.0
    mu4: float = 1.0
    g0: float = 0.1
    return_penalty_weight: float = 1.0


@dataclass
class SystemConfig:
    # geometry
    area_size: float = 100.0
    altitude: float = 20.0
    start_xy: tuple[float, float] = (50.0, 0.0)
    bs_position: tuple[float, float, float] = (25.0, 0.0, 0.0)
    region_split_x: float = 50.0
    num_devices: int = 6
    num_elements: int = 10

    # time and flight
    flight_time: float = 50.0
    num_slots: int = 20
    max_speed: float = 7.0
    flight_kappa: float = 0.01
    flight_exponent: int = 1
    action_update_mode: str = "additive"
    return_guard: bool = True
    speed_clamp: bool = True  # False only for diagnostics

    # radio
    rician_factor: float = 10.0
    pathloss_ref_db: float = -30.0
    pathloss_exponent: float = 2.2
    carrier_freq: float = 2.4e9
    element_spacing: float = 0.5
    noise_dbm_per_hz: float = -174.0
    bandwidth: float = 10e6
    p_max: float = 0.2
    interference_mode: str = "orthogonal"

    # computation
    cycles_per_bit: float = 800.0
    cpu_freq: float = 100e6
    chip_coeff: float = 1e-26
    input_bits_range: tuple[float, float] = (0.05e6, 0.1e6)
    deadline_range: tuple[float, float] = (1.0, 5.0)
    mec_capacity: float = 10e9
    completion_mode: str = "paper"

    # action increments (bounds of one step)
    beta_step: float = 0.1
    phase_step: float = math.pi / 8
    power_step_frac: float = 1.0
    power_update: str = "additive"        # or "multiplicative"
    power_ratio_max: float = 10.0         # multiplicative steps scale p by [1/r, r]

    # scheme / observation switches
    conventional_ris: bool = False
    featurization: str = "cartesian"
    channel_ref_distance: float = 50.0
    link_quality_features: bool = True  # per-device SNR summary in the observation
    alignment_features: bool = True     # per-device, per-element phase mismatch (K*M entries)
    input_bits_norm: float = 0.1e6       # observation scale for task sizes

    # reward
    reward: RewardConfig = field(default_factory=RewardConfig)
    energy_scale: float | None = None

    # device placement drawn from this seed instead of the episode seed
    layout_seed: int | None = None
    # when set, every reset rebuilds the same instance regardless of the episode seed
    instance_seed: int | None = None

    # ------------------------------------------------------------------ derived
    @property
    def slot_duration(self) -> float:
        return self.flight_time / self.num_slots

    @property
    def noise_power(self) -> float:
        return dbm_per_hz_to_watts(self.noise_dbm_per_hz, self.bandwidth)

    @property
    def pathloss_ref(self) -> float:
        return db_to_linear(self.pathloss_ref_db)

    @property
    def wavelength(self) -> float:
        return 299_792_458.0 / self.carrier_freq

    @property
    def num_reflection(self) -> int:
        return (self.num_devices + 1) // 2

    @property
    def num_transmission(self) -> int:
        return self.num_devices // 2

    @property
    def max_step_distance(self) -> float:
        return self.max_speed * self.slot_duration

    @property
    def reward_energy_scale(self) -> float:
        """Worst-case all-local energy of one slot, used to normalise rewards."""
        if self.energy_scale is not None:
            return self.energy_scale
        worst_bits = self.input_bits_range[1]
        per_device = self.chip_coeff * self.cpu_freq**2 * worst_bits * self.cycles_per_bit
        return self.num_devices * per_device

    # ------------------------------------------------------------- validation
    def errors(self) -> dict[str, str]:
        bad: dict[str, str] = {}
        positive = [
            "area_size", "altitude", "flight_time", "max_speed", "flight_kappa",
            "pathloss_exponent", "carrier_freq", "element_spacing", "bandwidth",
            "p_max", "cycles_per_bit", "cpu_freq", "chip_coeff", "mec_capacity",
            "beta_step", "phase_step", "power_step_frac", "channel_ref_distance", "input_bits_norm",
        ]
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                bad[name] = f"must be a positive finite number, got {value!r}"
        for name in ("num_devices", "num_elements", "num_slots"):
            value = getattr(self, name)
            if not (isinstance(value, int) and value >= 1):
                bad[name] = f"must be an integer >= 1, got {value!r}"
        if self.rician_factor < 0:
            bad["rician_factor"] = "must be >= 0"
        if self.flight_exponent not in (1, 2):
            bad["flight_exponent"] = "must be 1 or 2"
        lo, hi = self.input_bits_range
        if not 0 < lo <= hi:
            bad["input_bits_range"] = "need 0 < low <= high"
        lo, hi = self.deadline_range
        if not 0 < lo <= hi:
            bad["deadline_range"] = "need 0 < low <= high"
        x, y = self.start_xy
        if not (0 <= x <= self.area_size and 0 <= y <= self.area_size):
            bad["start_xy"] = "start must lie inside the service area"
        if self.action_update_mode not in ("additive", "hadamard"):
            bad["action_update_mode"] = "must be 'additive' or 'hadamard'"
        if self.interference_mode not in ("orthogonal", "sinr"):
            bad["interference_mode"] = "must be 'orthogonal' or 'sinr'"
        if self.completion_mode not in ("paper", "parallel"):
            bad["completion_mode"] = "must be 'paper' or 'parallel'"
        if self.power_update not in ("additive", "multiplicative"):
            bad["power_update"] = "must be 'additive' or 'multiplicative'"
        if not self.power_ratio_max > 1:
            bad["power_ratio_max"] = "must be > 1"
        if self.featurization not in ("cartesian", "polar"):
            bad["featurization"] = "must be 'cartesian' or 'polar'"
        r = self.reward
        if not r.mu1 < 0:
            bad["reward.mu1"] = "energy weight must be negative"
        for name in ("mu2", "mu3", "mu4", "g0"):
            if not getattr(r, name) > 0:
                bad[f"reward.{name}"] = "must be > 0"
        if r.return_penalty_weight < 0:
            bad["reward.return_penalty_weight"] = "must be >= 0"
        if self.energy_scale is not None and not self.energy_scale > 0:
            bad["energy_scale"] = "must be > 0 when given"
        return bad

    def validate(self) -> "SystemConfig":
        bad = self.errors()
        if bad:
            raise ConfigError(bad)
        return self

    # ---------------------------------------------------------- (de)serialise
    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError({name: "unknown field" for name in unknown})
        reward = data.pop("reward", None)
        if isinstance(reward, dict):
            rknown = {f.name for f in dataclasses.fields(RewardConfig)}
            runknown = sorted(set(reward) - rknown)
            if runknown:
                raise ConfigError({f"reward.{n}": "unknown field" for n in runknown})
            data["reward"] = RewardConfig(**reward)
        for key in ("start_xy", "bs_position", "input_bits_range", "deadline_range"):
            if key in data and data[key] is not None:
                data[key] = tuple(float(v) for v in data[key])
        return cls(**data)

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


def load_config(path: str | Path) -> tuple[SystemConfig, dict[str, Any]]:
    """Read a YAML config file.

    Returns the system config and the remaining top-level sections (for
    example ``ppo`` or ``experiment``) untouched. The file must carry
    ``schema_version: 1``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError({"<root>": "config file must contain a mapping"})
    version = raw.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError({"schema_version": f"unsupported version {version!r}"})
    system = SystemConfig.from_dict(raw.pop("system", {}) or {}).validate()
    return system, raw


def dump_config(system: SystemConfig, path: str | Path, **sections: Any) -> None:
    payload = {"schema_version": CONFIG_SCHEMA_VERSION, "system": system.to_dict()}
    payload.update(sections)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(payload, fh, sort_keys=False)
