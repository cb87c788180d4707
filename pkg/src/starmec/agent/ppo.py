"""Proximal policy optimisation with a tanh-squashed Gaussian policy.

Actor and critic are separate MLPs. The actor outputs the mean of a
Gaussian over pre-squash actions ``u``; the spread is a learned,
state-independent ``log_std`` per action dimension, and the environment
receives ``tanh(u)``. Rollouts store ``u`` so log-probabilities are exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .mlp import MlpParams, init_mlp, mlp_backward, mlp_forward

LOG_2PI = math.log(2.0 * math.pi)
CHECKPOINT_MAGIC = "starmec-policy"
CHECKPOINT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    """A loss or gradient became non-finite during an update."""


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 2
    minibatch_size: int = 64
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    hidden: tuple[int, ...] = (128, 128)
    init_log_std: float = -1.0
    reward_clip: float | None = 10.0  # learner-side bound on per-step rewards
    target_kl: float | None = None     # stop the epoch loop once KL exceeds 1.5x this
    num_envs: int = 16
    seed: int = 0

    def validate(self) -> "PpoConfig":
        bad = {}
        if not 0 < self.clip_eps < 1:
            bad["clip_eps"] = "must lie in (0, 1)"
        if not 0 < self.discount < 1:
            bad["discount"] = "must lie in (0, 1)"
        if not 0 <= self.gae_lambda <= 1:
            bad["gae_lambda"] = "must lie in [0, 1]"
        for name in ("epochs", "minibatch_size", "num_envs"):
            if not (isinstance(getattr(self, name), int) and getattr(self, name) >= 1):
                bad[name] = "must be an integer >= 1"
        for name in ("actor_lr", "critic_lr", "max_grad_norm"):
            if not getattr(self, name) > 0:
                bad[name] = "must be > 0"
        if self.reward_clip is not None and not self.reward_clip > 0:
            bad["reward_clip"] = "must be > 0 or null"
        if self.target_kl is not None and not self.target_kl > 0:
            bad["target_kl"] = "must be > 0 or null"
        if self.entropy_coef < 0:
            bad["entropy_coef"] = "must be >= 0"
        if bad:
            from ..config import ConfigError
            raise ConfigError({f"ppo.{k}": v for k, v in bad.items()})
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "PpoConfig":
        data = dict(data or {})
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            from ..config import ConfigError
            raise ConfigError({f"ppo.{n}": "unknown field" for n in unknown})
        if "hidden" in data:
            data["hidden"] = tuple(int(h) for h in data["hidden"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        return out


# ------------------------------------------------------------------ policy
@dataclass
class PolicyParams:
    actor: MlpParams
    critic: MlpParams
    log_std: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.actor.sizes[0]

    @property
    def action_dim(self) -> int:
        return self.actor.sizes[-1]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.actor.copy(), self.critic.copy(), self.log_std.copy())

    def actor_arrays(self) -> list[np.ndarray]:
        return self.actor.arrays() + [self.log_std]

    def critic_arrays(self) -> list[np.ndarray]:
        return self.critic.arrays()


def init_policy(obs_dim: int, action_dim: int, cfg: PpoConfig, rng: np.random.Generator) -> PolicyParams:
    actor = init_mlp([obs_dim, *cfg.hidden, action_dim], rng, out_scale=0.01)
    critic = init_mlp([obs_dim, *cfg.hidden, 1], rng, out_scale=1.0)
    return PolicyParams(actor, critic, np.full(action_dim, float(cfg.init_log_std)))


def policy_forward(params: PolicyParams, obs):
    """Pre-squash mean, per-dimension std and value estimate for a batch of observations."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != params.obs_dim:
        raise ValueError(f"observation has size {obs.shape[-1]}, policy expects {params.obs_dim}")
    mean = mlp_forward(params.actor, obs)
    value = mlp_forward(params.critic, obs)[..., 0]
    return mean, np.exp(params.log_std), value


def log_one_minus_tanh_sq(u):
    """``log(1 - tanh(u)^2)`` without cancellation for large ``|u|``."""
    u = np.asarray(u, dtype=float)
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def gaussian_logp(u, mean, log_std):
    z = (u - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def squashed_logp(u, mean, log_std):
    """Log-density of ``a = tanh(u)`` at the action produced by ``u``."""
    return gaussian_logp(u, mean, log_std) - np.sum(log_one_minus_tanh_sq(u), axis=-1)


def gaussian_entropy(log_std) -> float:
    """Entropy of the pre-squash Gaussian (used as the exploration bonus)."""
    return float(np.sum(log_std + 0.5 + 0.5 * LOG_2PI))


def sample_action(params: PolicyParams, obs, rng: np.random.Generator):
    """Returns ``(action, u, logp, value)``."""
    mean, std, value = policy_forward(params, obs)
    u = mean + std * rng.standard_normal(mean.shape)
    return np.tanh(u), u, squashed_logp(u, mean, params.log_std), value


def greedy_action(params: PolicyParams, obs) -> np.ndarray:
    mean, _, _ = policy_forward(params, obs)
    return np.tanh(mean)


# ------------------------------------------------------------------ rollouts
@dataclass
class RolloutBuffer:
    """Time-major rollout storage; per-step arrays have shape (T, B, ...)."""

    obs: np.ndarray
    u: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    last_value: np.ndarray
    advantages: np.ndarray | None = None
    raw_advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __post_init__(self):
        T = len(self.rewards)
        for name in ("obs", "u", "logp", "values", "dones"):
            if len(getattr(self, name)) != T:
                raise ValueError(f"buffer field {name} has length {len(getattr(self, name))}, expected {T}")

    def __len__(self) -> int:
        return int(np.prod(np.shape(self.rewards)))

    def flat(self) -> dict[str, np.ndarray]:
        if self.advantages is None:
            raise RuntimeError("compute advantages before flattening the buffer")
        n = len(self)
        return {
            "obs": self.obs.reshape(n, -1), "u": self.u.reshape(n, -1),
            "logp": self.logp.reshape(n), "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
        }


def compute_returns_and_advantages(buf: RolloutBuffer, cfg: PpoConfig) -> RolloutBuffer:
    """GAE advantages and discounted returns; advantages are normalised over the batch."""
    if len(buf) == 0:
        raise ValueError("empty rollout buffer")
    r = np.asarray(buf.rewards, dtype=float)
    v = np.asarray(buf.values, dtype=float)
    notdone = 1.0 - np.asarray(buf.dones, dtype=float)
    next_v = np.asarray(buf.last_value, dtype=float)
    adv = np.zeros_like(r)
    running = np.zeros_like(r[0])
    for t in range(len(r) - 1, -1, -1):
        delta = r[t] + cfg.discount * next_v * notdone[t] - v[t]
        running = delta + cfg.discount * cfg.gae_lambda * notdone[t] * running
        adv[t] = running
        next_v = v[t]
    buf.raw_advantages = adv
    buf.returns = adv + v
    std = adv.std()
    buf.advantages = (adv - adv.mean()) / (std if std > 1e-8 else 1.0)
    return buf


# ------------------------------------------------------------------ losses
def clipped_surrogate_loss(new_logp, old_logp, advantages, eps: float) -> float:
    ratio = np.exp(np.asarray(new_logp) - np.asarray(old_logp))
    adv = np.asarray(advantages, dtype=float)
    obj = np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)
    return float(-np.mean(obj))


def _surrogate_grad(ratio, adv, eps):
    """d(loss)/d(new_logp) per sample: the unclipped branch carries gradient when it is the min."""
    active = ratio * adv <= np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    return -np.where(active, ratio * adv, 0.0) / len(ratio)


def actor_loss_and_grads(params: PolicyParams, obs, u, old_logp, adv, cfg: PpoConfig):
    """Clipped surrogate minus entropy bonus, with gradients for (actor arrays..., log_std)."""
    mean, cache = mlp_forward(params.actor, obs, cache=True)
    log_std = params.log_std
    new_logp = squashed_logp(u, mean, log_std)
    ratio = np.exp(new_logp - old_logp)
    surrogate = clipped_surrogate_loss(new_logp, old_logp, adv, cfg.clip_eps)
    entropy = gaussian_entropy(log_std)
    loss = surrogate - cfg.entropy_coef * entropy
    dl_dlogp = _surrogate_grad(ratio, adv, cfg.clip_eps)
    inv_std = np.exp(-log_std)
    z = (u - mean) * inv_std
    g_mean = dl_dlogp[:, None] * z * inv_std
    g_log_std = np.sum(dl_dlogp[:, None] * (z * z - 1.0), axis=0) - cfg.entropy_coef
    grads = mlp_backward(params.actor, obs, g_mean, cache) + [g_log_std]
    stats = {
        "ratio": ratio, "surrogate": surrogate, "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        "kl": float(np.mean((ratio - 1.0) - (new_logp - old_logp))),
    }
    return loss, grads, stats


def critic_loss_and_grads(params: PolicyParams, obs, returns):
    value, cache = mlp_forward(params.critic, obs, cache=True)
    err = value[:, 0] - returns
    loss = float(np.mean(err * err))
    grads = mlp_backward(params.critic, obs, (2.0 * err / len(err))[:, None], cache)
    return loss, grads


def global_norm(grads) -> float:
    return float(math.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    """Adam with bias correction, updating a list of arrays in place."""

    def __init__(self, arrays, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class PpoLearner:
    """Parameters plus optimiser state; :meth:`update` is the only writer."""

    params: PolicyParams
    cfg: PpoConfig
    rng: np.random.Generator
    actor_opt: Adam = field(init=False)
    critic_opt: Adam = field(init=False)

    def __post_init__(self):
        self.actor_opt = Adam(self.params.actor_arrays(), self.cfg.actor_lr)
        self.critic_opt = Adam(self.params.critic_arrays(), self.cfg.critic_lr)

    def update(self, buf: RolloutBuffer) -> dict[str, float]:
        """Several epochs of minibatch steps on the clipped surrogate and the value MSE."""
        if buf.advantages is None:
            raise RuntimeError("compute advantages before calling update()")
        data = buf.flat()
        n = len(data["logp"])
        cfg = self.cfg
        sums = {"actor_loss": 0.0, "critic_loss": 0.0, "entropy": 0.0, "kl": 0.0, "clip_fraction": 0.0}
        first_ratio_dev = 0.0
        steps = 0
        for epoch in range(cfg.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                obs, u = data["obs"][idx], data["u"][idx]
                a_loss, a_grads, st = actor_loss_and_grads(
                    self.params, obs, u, data["logp"][idx], data["advantages"][idx], cfg)
                c_loss, c_grads = critic_loss_and_grads(self.params, obs, data["returns"][idx])
                if not (math.isfinite(a_loss) and math.isfinite(c_loss)):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, minibatch {start // cfg.minibatch_size}: "
                        f"actor={a_loss}, critic={c_loss}, log_std range "
                        f"[{self.params.log_std.min():.3g}, {self.params.log_std.max():.3g}]")
                if epoch == 0 and start == 0:
                    # no step taken yet, so this measures the behaviour snapshot
                    first_ratio_dev = float(np.max(np.abs(st["ratio"] - 1.0)))
                a_grads, _ = clip_by_global_norm(a_grads, cfg.max_grad_norm)
                c_grads, _ = clip_by_global_norm(c_grads, cfg.max_grad_norm)
                self.actor_opt.step(self.params.actor_arrays(), a_grads)
                self.critic_opt.step(self.params.critic_arrays(), c_grads)
                sums["actor_loss"] += a_loss
                sums["critic_loss"] += c_loss
                sums["entropy"] += st["entropy"]
                sums["kl"] += st["kl"]
                sums["clip_fraction"] += st["clip_fraction"]
                steps += 1
            if cfg.target_kl is not None:
                mean = mlp_forward(self.params.actor, data["obs"])
                log_ratio = squashed_logp(data["u"], mean, self.params.log_std) - data["logp"]
                if np.mean(np.expm1(log_ratio) - log_ratio) > 1.5 * cfg.target_kl:
                    break
        if not (self.params.actor.is_finite() and self.params.critic.is_finite()
                and np.all(np.isfinite(self.params.log_std))):
            raise TrainingDiverged("parameters became non-finite after the update")
        stats = {k: v / steps for k, v in sums.items()}
        stats["first_pass_ratio_dev"] = first_ratio_dev
        return stats


def update(learner: PpoLearner, buf: RolloutBuffer):
    """Functional-style alias: returns ``(params, stats)``."""
    stats = learner.update(buf)
    return learner.params, stats


# ------------------------------------------------------------------ training
def collect_rollout(env, params: PolicyParams, seeds, rng: np.random.Generator):
    """Run one full episode in every instance of a vectorised env.

    Returns the buffer plus per-instance episodic rewards and energies.
    """
    obs = env.reset(seeds)
    T = env.config.num_slots
    B = env.num_envs
    store = {k: [] for k in ("obs", "u", "logp", "rewards", "values", "dones")}
    energy = np.zeros(B)
    for _ in range(T):
        action, u, logp, value = sample_action(params, obs, rng)
        next_obs, rewards, done, info = env.step(action)
        for key, val in (("obs", obs), ("u", u), ("logp", logp), ("rewards", rewards),
                         ("values", value), ("dones", np.full(B, float(done)))):
            store[key].append(val)
        energy += info["energy_total"]
        obs = next_obs
    buf = RolloutBuffer(**{k: np.array(v) for k, v in store.items()}, last_value=np.zeros(B))
    return buf, buf.rewards.sum(axis=0), energy


def run_policy(env, act: Callable[[np.ndarray], np.ndarray], seeds):
    """Roll out a deterministic action function; returns episodic rewards and energies."""
    obs = env.reset(seeds)
    total_r = np.zeros(env.num_envs)
    energy = np.zeros(env.num_envs)
    for _ in range(env.config.num_slots):
        obs, r, _, info = env.step(act(obs))
        total_r += r
        energy += info["energy_total"]
    return total_r, energy


CURVE_COLUMNS = ("iteration", "mean_reward", "mean_energy_J", "clip_fraction", "kl")


@dataclass
class TrainResult:
    params: PolicyParams
    curve: list[dict]


def train(env_factory: Callable[[int], object], cfg: PpoConfig, iterations: int,
          curve_path: str | Path | None = None, checkpoint_path: str | Path | None = None,
          checkpoint_every: int = 0, log: Callable[[str], None] | None = None) -> TrainResult:
    """PPO training loop.

    ``env_factory(num_envs)`` must return a vectorised environment. Every
    iteration runs one episode per instance with fresh seeds drawn from the
    master seed, so two runs with the same ``cfg.seed`` are identical.
    """
    cfg.validate()
    env = env_factory(cfg.num_envs)
    ss = np.random.SeedSequence(cfg.seed)
    init_ss, act_ss, upd_ss, ep_ss = ss.spawn(4)
    params = init_policy(env.obs_dim, env.action_dim, cfg, np.random.default_rng(init_ss))
    learner = PpoLearner(params, cfg, np.random.default_rng(upd_ss))
    act_rng = np.random.default_rng(act_ss)
    ep_rng = np.random.default_rng(ep_ss)
    curve: list[dict] = []
    for it in range(1, iterations + 1):
        seeds = ep_rng.integers(0, 2**31 - 1, size=cfg.num_envs)
        buf, ep_rewards, ep_energy = collect_rollout(env, params, seeds, act_rng)
        if cfg.reward_clip is not None:
            buf.rewards = np.clip(buf.rewards, -cfg.reward_clip, cfg.reward_clip)
        compute_returns_and_advantages(buf, cfg)
        stats = learner.update(buf)
        row = {"iteration": it, "mean_reward": float(ep_rewards.mean()),
               "mean_energy_J": float(ep_energy.mean()),
               "clip_fraction": stats["clip_fraction"], "kl": stats["kl"]}
        curve.append(row)
        if log is not None and (it == 1 or it % 50 == 0 or it == iterations):
            log(f"iter {it:5d}  reward {row['mean_reward']:9.3f}  energy {row['mean_energy_J']:.4f} J  "
                f"kl {row['kl']:.2e}  clip {row['clip_fraction']:.3f}")
        if checkpoint_path and checkpoint_every and it % checkpoint_every == 0:
            save_checkpoint(params, checkpoint_path)
    if curve_path:
        write_curve(curve, curve_path)
    if checkpoint_path:
        save_checkpoint(params, checkpoint_path)
    return TrainResult(params, curve)


def write_curve(curve: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in curve:
            writer.writerow({k: (row[k] if k == "iteration" else repr(float(row[k]))) for k in CURVE_COLUMNS})


# ------------------------------------------------------------------ checkpoints
def _write_net(fh, name: str, net: MlpParams) -> None:
    fh.write(f"net {name} {net.activation} {len(net.weights)}\n")
    for w, b in zip(net.weights, net.biases):
        fh.write(f"layer {w.shape[0]} {w.shape[1]}\n")
        fh.write(" ".join(repr(float(x)) for x in w.ravel()) + "\n")
        fh.write(" ".join(repr(float(x)) for x in b) + "\n")


def save_checkpoint(params: PolicyParams, path: str | Path) -> None:
    """Text checkpoint.

    Layout (one item per line)::

        starmec-policy 1
        net actor <activation> <num_layers>
        layer <in> <out>
        <in*out weights, row-major, space separated>
        <out biases>
        ... (remaining layers, then the same block for ``net critic``)
        log_std <dim>
        <dim values>

    Floats are written with ``repr`` so a round trip is exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        _write_net(fh, "actor", params.actor)
        _write_net(fh, "critic", params.critic)
        fh.write(f"log_std {len(params.log_std)}\n")
        fh.write(" ".join(repr(float(x)) for x in params.log_std) + "\n")


def _floats(line: str, count: int) -> np.ndarray:
    vals = np.array(line.split(), dtype=float)
    if vals.size != count:
        raise ValueError(f"checkpoint: expected {count} numbers, found {vals.size}")
    return vals


def load_checkpoint(path: str | Path) -> PolicyParams:
    with open(path, "r", encoding="utf-8") as fh:
        lines = iter(fh.read().splitlines())
    header = next(lines, "").split()
    if len(header) != 2 or header[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a policy checkpoint")
    if int(header[1]) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header[1]}")
    nets = {}
    for expected in ("actor", "critic"):
        tag, name, activation, count = next(lines).split()
        if tag != "net" or name != expected:
            raise ValueError(f"checkpoint: expected net {expected}, found {tag} {name}")
        weights, biases = [], []
        for _ in range(int(count)):
            _, n_in, n_out = next(lines).split()
            n_in, n_out = int(n_in), int(n_out)
            weights.append(_floats(next(lines), n_in * n_out).reshape(n_in, n_out))
            biases.append(_floats(next(lines), n_out))
        nets[name] = MlpParams(weights, biases, activation)
    tag, dim = next(lines).split()
    if tag != "log_std":
        raise ValueError("checkpoint: missing log_std block")
    log_std = _floats(next(lines), int(dim))
    return PolicyParams(nets["actor"], nets["critic"], log_std)
