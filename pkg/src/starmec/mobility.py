"""UAV kinematics at fixed altitude: displacement clamping and flight energy."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np


class Position3(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class FlightPlanState:
    current: Position3
    start: Position3
    slot_duration: float
    max_speed: float
    kappa: float
    slots_total: int
    slot_index: int = 0
    area_size: float = 100.0
    return_guard: bool = False

    def __post_init__(self):
        if not self.slot_duration > 0:
            raise ValueError("slot_duration must be > 0")
        if not self.max_speed > 0:
            raise ValueError("max_speed must be > 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")
        if not 0 <= self.slot_index <= self.slots_total:
            raise ValueError("slot_index out of range")


def clamp_step(current, target, max_step: float, area_size: float,
               home=None, home_radius=None) -> np.ndarray:
    """Project proposed 2D positions onto the feasible set of the next slot.

    The step from ``current`` is first scaled radially to ``max_step``, then
    the point is clipped to the square service area. With ``home`` and
    ``home_radius`` given, the result is additionally pulled into the disc of
    that radius around ``home`` so the UAV can still make it back in the
    remaining slots. Arrays of shape (..., 2) are handled row-wise.
    """
    current = np.asarray(current, dtype=float)
    step = np.asarray(target, dtype=float) - current
    norm = np.hypot(step[..., 0], step[..., 1])
    over = norm > max_step
    scale = np.divide(max_step, norm, out=np.ones_like(norm), where=over)
    new = np.clip(current + step * scale[..., None], 0.0, area_size)
    if home is None or home_radius is None:
        return new
    home = np.broadcast_to(np.asarray(home, dtype=float), new.shape)
    offset = new - home
    dist = np.hypot(offset[..., 0], offset[..., 1])
    outside = dist > home_radius
    if not np.any(outside):
        return new
    projected = home + offset * (home_radius / np.where(outside, dist, 1.0))[..., None]
    proj_step = np.hypot(*np.moveaxis(projected - current, -1, 0))
    # where the radial projection is out of reach, take the point on the line home
    back = home - current
    back_len = np.hypot(back[..., 0], back[..., 1])
    travel = np.maximum(0.0, back_len - home_radius) / np.where(back_len > 0, back_len, 1.0)
    along = current + back * travel[..., None]
    fallback = proj_step > max_step * (1 + 1e-12)
    fixed = np.where(fallback[..., None], along, projected)
    return np.where(outside[..., None], fixed, new)


def apply_displacement(state: FlightPlanState, delta: Sequence[float]) -> FlightPlanState:
    """Move the UAV by ``delta`` (metres, x/y) subject to the speed limit.

    The displacement is radially scaled so that the speed never exceeds
    ``max_speed``; the resulting position is clipped to the service area.
    Altitude is untouched. With ``return_guard`` the position is also kept
    within reach of the start point given the slots left after this move.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (2,) or not np.all(np.isfinite(delta)):
        raise ValueError("invalid action: displacement must be two finite numbers")
    cur = np.array([state.current.x, state.current.y])
    max_step = state.max_speed * state.slot_duration
    home = home_radius = None
    if state.return_guard:
        home = np.array([state.start.x, state.start.y])
        moves_left = max(state.slots_total - 1 - (state.slot_index + 1), 0)
        home_radius = moves_left * max_step
    new = clamp_step(cur, cur + delta, max_step, state.area_size, home, home_radius)
    pos = Position3(float(new[0]), float(new[1]), state.current.z)
    return replace(state, current=pos, slot_index=min(state.slot_index + 1, state.slots_total))


def flight_energy(prev, nxt, slot_duration: float, kappa: float, exponent: int = 1) -> float:
    """Flight energy of one slot, ``kappa * (distance / slot_duration) ** exponent``."""
    if not slot_duration > 0:
        raise ValueError("slot_duration must be > 0")
    dist = math.dist(tuple(prev), tuple(nxt))
    if dist == 0.0:
        return 0.0
    return kappa * (dist / slot_duration) ** exponent


def path_length(positions) -> float:
    pts = np.asarray(positions, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def check_return_constraint(positions, tol: float = 1.0, slots_total: int | None = None) -> bool:
    """True when the last position is within ``tol`` metres of the first.

    ``positions`` is the per-slot UAV track (or an object with a
    ``positions`` attribute, such as an episode trace). When ``slots_total``
    is given the track must have exactly that many entries.
    """
    pts = getattr(positions, "positions", positions)
    pts = np.asarray(pts, dtype=float)
    expected = slots_total if slots_total is not None else getattr(positions, "num_slots", None)
    if pts.ndim != 2 or len(pts) == 0 or (expected is not None and len(pts) != expected):
        raise ValueError("incomplete trace: cannot check the return constraint")
    return bool(np.linalg.norm(pts[-1] - pts[0]) <= tol)
