"""Comparison policies and the common policy interface used by the harness.

A policy has ``reset(env)`` (called right after ``env.reset``) and
``act(obs)`` returning either a (B, d) array of normalised actions or a
batched :class:`~starmec.env.ControlAction`.
"""

from __future__ import annotations

import numpy as np

from .agent.ppo import PolicyParams, greedy_action, sample_action
from .config import SystemConfig
from .env import ControlAction, VecStarMecEnv


def nearest_neighbor_tour(start_xy, points_xy) -> np.ndarray:
    """Greedy tour from ``start_xy`` through every point and back; rows are waypoints."""
    start = np.asarray(start_xy, dtype=float)
    todo = [np.asarray(p, dtype=float) for p in points_xy]
    tour, here = [], start
    while todo:
        i = int(np.argmin([np.hypot(*(p - here)) for p in todo]))
        here = todo.pop(i)
        tour.append(here)
    tour.append(start)
    return np.array(tour)


class FixedTrajectoryPolicy:
    """Nearest-neighbour tour at full speed with fixed radio and offload settings.

    Settings are held at ``lam``, ``p_max * power_frac``, zero phases and
    reflection share ``beta_r``. The UAV heads home early when the
    remaining slots would not otherwise suffice to close the loop.
    """

    def __init__(self, lam: float = 0.5, power_frac: float = 0.5, beta_r: float = 0.5):
        self.lam, self.power_frac, self.beta_r = lam, power_frac, beta_r
        self.env: VecStarMecEnv | None = None

    def reset(self, env: VecStarMecEnv) -> None:
        if env.config.action_update_mode != "additive":
            raise ValueError("the fixed trajectory needs additive position and phase updates")
        self.env = env
        s = env.state
        self.tours = [nearest_neighbor_tour(s.start[:2], s.devices[i][:, :2]) for i in range(env.num_envs)]
        self.cursor = np.zeros(env.num_envs, dtype=int)

    def _waypoint_steps(self) -> np.ndarray:
        env, s = self.env, self.env.state
        c = env.config
        max_step = c.max_step_distance
        moves_after = max(c.num_slots - 1 - s.slot, 0)
        steps = np.zeros((env.num_envs, 2))
        for i in range(env.num_envs):
            here = s.position[i, :2]
            tour = self.tours[i]
            # a waypoint already reached hands over to the next one
            while self.cursor[i] < len(tour) - 1 and np.hypot(*(tour[self.cursor[i]] - here)) < 1e-9:
                self.cursor[i] += 1
            target = tour[self.cursor[i]]
            step = target - here
            if np.hypot(*step) > max_step:
                step *= max_step / np.hypot(*step)
            home = s.start[:2]
            if np.hypot(*(here + step - home)) > moves_after * max_step + 1e-9:
                self.cursor[i] = len(tour) - 1
                step = home - here
                dist = np.hypot(*step)
                if dist > max_step:
                    step *= max_step / dist
            steps[i] = step
        return steps

    @staticmethod
    def _power_step(target, current, c):
        if c.power_update == "multiplicative" or c.action_update_mode == "hadamard":
            return target / current
        return target - current

    def act(self, obs) -> ControlAction:
        env, s = self.env, self.env.state
        c = env.config
        B, K, M = env.num_envs, env.K, env.M
        dphi_r = -np.angle(np.exp(1j * s.coeffs.phi_r))
        dphi_t = -np.angle(np.exp(1j * s.coeffs.phi_t))
        return ControlAction(
            lam=np.full((B, K), self.lam),
            dq=self._waypoint_steps(),
            dbeta_r=np.full((B, M), self.beta_r) - s.coeffs.beta_r,
            dphi_r=dphi_r, dphi_t=dphi_t,
            dp=self._power_step(np.full((B, K), c.p_max * self.power_frac), s.power, c),
        )


def conventional_ris_mode(config: SystemConfig) -> SystemConfig:
    """Config variant where every element reflects or transmits, never both.

    The amplitude action disappears and the split follows the side of the
    area the UAV is over.
    """
    return config.replace(conventional_ris=True).validate()


class PpoPolicy:
    """Trained actor; greedy (tanh of the mean) unless ``stochastic``."""

    def __init__(self, params: PolicyParams, stochastic: bool = False, seed: int = 0):
        self.params = params
        self.stochastic = stochastic
        self.rng = np.random.default_rng(seed)

    def reset(self, env) -> None:
        pass

    def act(self, obs) -> np.ndarray:
        if self.stochastic:
            return sample_action(self.params, obs, self.rng)[0]
        return greedy_action(self.params, obs)


class FullOffloadPolicy:
    """Sends every task to the MEC server; other controls come from ``base``.

    Without a base policy the UAV hovers and the radio keeps fixed defaults.
    """

    def __init__(self, base=None):
        self.base = base if base is not None else FixedTrajectoryPolicy()
        self.hover = base is None

    def reset(self, env) -> None:
        self.env = env
        self.base.reset(env)

    def act(self, obs):
        out = self.base.act(obs)
        if isinstance(out, ControlAction):
            out.lam = np.ones_like(np.asarray(out.lam, dtype=float))
            if self.hover:
                out.dq = np.zeros_like(out.dq)
            return out
        out = np.array(out, dtype=float, copy=True)
        out[..., self.env.action_layout["lam"]] = 1.0
        return out


class RandomPolicy:
    """Uniform actions in ``[-1, 1]^d`` from a seeded generator."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def reset(self, env) -> None:
        self.shape = (env.num_envs, env.action_dim)

    def act(self, obs) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=self.shape)


def rollout(env: VecStarMecEnv, policy, seeds):
    """One episode per instance; returns ``(episodic_rewards, energies)`` arrays."""
    obs = env.reset(seeds)
    policy.reset(env)
    total_r = np.zeros(env.num_envs)
    energy = np.zeros(env.num_envs)
    done = False
    while not done:
        obs, r, done, info = env.step(policy.act(obs))
        total_r += r
        energy += info["energy_total"]
    return total_r, energy
