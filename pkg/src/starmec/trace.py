"""Episode traces and their line-delimited JSON record format.

One record per slot, written as a JSON object on its own line::

    {"slot": 1, "position": [x, y, z], "lam": [...], "power": [...],
     "beta_r": [...], "phi_r": [...], "phi_t": [...], "displacement": [dx, dy],
     "reward": r, "energy": {"local": .., "offload": .., "flight": .., "total": ..},
     "violations": {"deadline": n, "capacity": bool, "speed": bool, "dead_link": n}}

``position`` is the UAV position in which the slot was served, so the
sequence of positions across records is the trajectory q(1), ..., q(N).

The file may start with a header line describing the instance::

    {"header": {"num_slots": N, "devices": [[x, y, z], ...], "regions": [0, 1, ...]}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compute import EnergyBreakdown, total_energy


@dataclass
class SlotRecord:
    slot: int
    position: np.ndarray
    lam: np.ndarray
    power: np.ndarray
    beta_r: np.ndarray
    phi_r: np.ndarray
    phi_t: np.ndarray
    displacement: np.ndarray
    reward: float
    energy: EnergyBreakdown
    violations: dict

    def to_json(self) -> dict:
        return {
            "slot": self.slot,
            "position": [float(v) for v in self.position],
            "lam": [float(v) for v in self.lam],
            "power": [float(v) for v in self.power],
            "beta_r": [float(v) for v in self.beta_r],
            "phi_r": [float(v) for v in self.phi_r],
            "phi_t": [float(v) for v in self.phi_t],
            "displacement": [float(v) for v in self.displacement],
            "reward": float(self.reward),
            "energy": {k: float(v) for k, v in self.energy.as_dict().items()},
            "violations": {k: bool(v) if isinstance(v, (bool, np.bool_)) else int(v)
                           for k, v in self.violations.items()},
        }

    @classmethod
    def from_json(cls, rec: dict) -> "SlotRecord":
        e = rec["energy"]
        return cls(
            slot=int(rec["slot"]),
            position=np.asarray(rec["position"], dtype=float),
            lam=np.asarray(rec["lam"], dtype=float),
            power=np.asarray(rec["power"], dtype=float),
            beta_r=np.asarray(rec["beta_r"], dtype=float),
            phi_r=np.asarray(rec["phi_r"], dtype=float),
            phi_t=np.asarray(rec["phi_t"], dtype=float),
            displacement=np.asarray(rec["displacement"], dtype=float),
            reward=float(rec["reward"]),
            energy=EnergyBreakdown(e["local"], e["offload"], e["flight"]),
            violations=dict(rec["violations"]),
        )


@dataclass
class EpisodeTrace:
    num_slots: int
    records: list[SlotRecord] = field(default_factory=list)
    devices: np.ndarray | None = None
    regions: np.ndarray | None = None

    def append(self, rec: SlotRecord) -> None:
        self.records.append(rec)

    @property
    def complete(self) -> bool:
        return len(self.records) == self.num_slots

    @property
    def positions(self) -> np.ndarray:
        return np.array([r.position for r in self.records])

    @property
    def energies(self) -> list[EnergyBreakdown]:
        return [r.energy for r in self.records]

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records])

    def total_energy(self) -> EnergyBreakdown:
        if not self.complete:
            raise ValueError("incomplete trace")
        return total_energy(self)

    def violation_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            for k, v in r.violations.items():
                out[k] = out.get(k, 0) + int(v)
        return out

    def return_distance(self) -> float:
        pos = self.positions
        return float(np.linalg.norm(pos[-1] - pos[0]))

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {"num_slots": self.num_slots}
            if self.devices is not None:
                header["devices"] = np.asarray(self.devices, dtype=float).tolist()
            if self.regions is not None:
                header["regions"] = [int(r) for r in self.regions]
            fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "EpisodeTrace":
        header, records = {}, []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                if "header" in obj:
                    header = obj["header"]
                else:
                    records.append(SlotRecord.from_json(obj))
        devices = np.asarray(header["devices"], dtype=float) if "devices" in header else None
        regions = np.asarray(header["regions"], dtype=int) if "regions" in header else None
        return cls(num_slots=int(header.get("num_slots", len(records))), records=records,
                   devices=devices, regions=regions)
