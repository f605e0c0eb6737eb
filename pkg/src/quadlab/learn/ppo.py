"""PPO with GAE on top of the hand-differentiated MLPs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .mlp import MLP, Adam, GaussianPolicy, gaussian_log_prob, gaussian_sample


@dataclass
class PpoConfig:
    batch_size: int = 4096
    minibatch: int = 128
    epochs: int = 10
    clip: float = 0.2
    entropy_coef: float = 0.01
    gamma: float = 0.99
    lam: float = 0.95
    desired_kl: float = 0.01
    lr: float = 1e-4
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "tanh"
    value_coef: float = 1.0
    num_envs: int = 64

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not self.hidden or any(h <= 0 for h in self.hidden):
            raise ValueError("hidden sizes must be a non-empty list of positive integers")
        for name in ("batch_size", "minibatch", "epochs", "num_envs"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gamma", "lam", "desired_kl"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0 or self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("lr, entropy_coef and value_coef must be non-negative")
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if self.batch_size % self.num_envs:
            raise ValueError("batch_size must be a multiple of num_envs")
        if self.activation not in ("tanh", "elu"):
            raise ValueError(f"unknown activation '{self.activation}'")

    @property
    def steps_per_env(self) -> int:
        return self.batch_size // self.num_envs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class RolloutBuffer:
    """Flat, time-major-per-env arrays; ``dones`` mark the last step of an episode."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    next_values: np.ndarray  # V(s_{t+1}); ignored where done
    advantages: np.ndarray = field(default=None)
    returns: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.obs)
        for name in ("actions", "log_probs", "rewards", "values", "dones", "next_values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"buffer field '{name}' length differs from observations")

    def __len__(self) -> int:
        return len(self.obs)


def gae(rewards, values, dones, gamma: float, lam: float, next_values=None):
    """Generalized advantage estimation over one trajectory stream.

    ``next_values[t]`` is V(s_{t+1}); by default values shifted by one with a
    zero after the last step. Advantages reset wherever ``dones`` is set.
    Returns (advantages, returns).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=bool)
    if not (len(r) == len(v) == len(d)):
        raise ValueError("rewards, values and dones must have equal lengths")
    if next_values is None:
        nv = np.append(v[1:], 0.0)
    else:
        nv = np.asarray(next_values, dtype=float)
    adv = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        live = 0.0 if d[t] else 1.0
        delta = r[t] + gamma * nv[t] * live - v[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv, adv + v


class ActorCritic:
    """Gaussian policy and a separate value network; both see (obs - obs_offset) * obs_scale."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(256, 256), activation: str = "tanh", rng=None,
                 obs_offset=None, obs_scale=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.activation = activation
        self.pi = GaussianPolicy(obs_dim, act_dim, hidden, activation, rng)
        self.vf = MLP([obs_dim, *hidden, 1], activation, rng)
        self.obs_offset = np.zeros(obs_dim) if obs_offset is None else np.asarray(obs_offset, dtype=float)
        self.obs_scale = np.ones(obs_dim) if obs_scale is None else np.asarray(obs_scale, dtype=float)

    def params(self) -> dict[str, np.ndarray]:
        out = {f"pi.{k}": v for k, v in self.pi.net.params.items()}
        out["pi.log_std"] = self.pi.log_std
        out.update({f"vf.{k}": v for k, v in self.vf.params.items()})
        return out

    def normalize(self, obs):
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"expected observation dim {self.obs_dim}, got {obs.shape[-1]}")
        return (obs - self.obs_offset) * self.obs_scale

    def act(self, obs, rng, deterministic: bool = False):
        """Returns (raw action, log-prob, value)."""
        x = self.normalize(obs)
        mean = self.pi.mean(x)
        value = self.vf.forward(x)[..., 0]
        if deterministic:
            return mean, gaussian_log_prob(mean, self.pi.log_std, mean), value
        a, lp = gaussian_sample(mean, self.pi.log_std, rng)
        return a, lp, value

    def value(self, obs):
        return self.vf.forward(self.normalize(obs))[..., 0]


def surrogate(ratio, adv, clip: float):
    """Per-sample clipped surrogate min(rho A, clip(rho, 1-eps, 1+eps) A)."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)


def policy_objective(ac: ActorCritic, obs, actions, old_log_probs, adv, cfg: PpoConfig) -> float:
    """Mean clipped surrogate plus entropy bonus at the current parameters."""
    lp = ac.pi.log_prob(ac.normalize(obs), actions)
    return float(surrogate(np.exp(lp - old_log_probs), adv, cfg.clip).mean() + cfg.entropy_coef * ac.pi.entropy())


def _minibatch_grads(ac: ActorCritic, x, actions, old_lp, adv, ret, cfg: PpoConfig):
    b = len(x)
    mean = ac.pi.net.forward(x)
    log_std = ac.pi.log_std
    std = np.exp(log_std)
    z = (actions - mean) / std
    lp = -0.5 * np.sum(z * z, -1) - np.sum(log_std) - 0.5 * mean.shape[-1] * np.log(2 * np.pi)
    ratio = np.exp(lp - old_lp)
    active = ~(((adv > 0) & (ratio > 1 + cfg.clip)) | ((adv < 0) & (ratio < 1 - cfg.clip)))
    g = np.where(active, ratio * adv, 0.0) / b  # d(mean surrogate)/d logp_i
    grads = {f"pi.{k}": -v for k, v in ac.pi.net.backward(g[:, None] * z / std).items()}
    grads["pi.log_std"] = -(g[:, None] * (z * z - 1.0)).sum(0) - cfg.entropy_coef
    v = ac.vf.forward(x)[:, 0]
    grads.update({f"vf.{k}": val for k, val in ac.vf.backward((cfg.value_coef * (v - ret) / b)[:, None]).items()})
    stats = {
        "surrogate": float(surrogate(ratio, adv, cfg.clip).mean()),
        "value_loss": float(0.5 * np.mean((v - ret) ** 2)),
    }
    return grads, stats


def approx_kl(ac: ActorCritic, obs, actions, old_log_probs):
    lp = ac.pi.log_prob(ac.normalize(obs), actions)
    log_ratio = lp - old_log_probs
    ratio = np.exp(log_ratio)
    return float(np.mean((ratio - 1.0) - log_ratio)), ratio


def ppo_update(ac: ActorCritic, opt: Adam, buf: RolloutBuffer, cfg: PpoConfig, rng) -> dict:
    """Clipped-surrogate epochs over shuffled minibatches.

    The epoch loop stops early once the batch-mean KL to the rollout policy
    exceeds 1.5 times ``desired_kl``. Advantages are normalized per batch.
    """
    if buf.advantages is None:
        raise ValueError("compute advantages before the update")
    n = len(buf)
    x = ac.normalize(buf.obs)
    adv = buf.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    params = ac.params()
    opt.lr = cfg.lr
    stats = {"surrogate": 0.0, "value_loss": 0.0, "kl": 0.0, "clip_fraction": 0.0, "epochs": 0}
    n_mb = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            grads, s = _minibatch_grads(ac, x[idx], buf.actions[idx], buf.log_probs[idx], adv[idx],
                                        buf.returns[idx], cfg)
            opt.step(params, grads)
            ac.pi.clamp()
            stats["surrogate"] += s["surrogate"]
            stats["value_loss"] += s["value_loss"]
            n_mb += 1
        stats["epochs"] += 1
        kl, ratio = approx_kl(ac, buf.obs, buf.actions, buf.log_probs)
        stats["kl"] = kl
        stats["clip_fraction"] = float(np.mean(np.abs(ratio - 1.0) > cfg.clip))
        if kl > 1.5 * cfg.desired_kl:
            break
    stats["surrogate"] /= max(n_mb, 1)
    stats["value_loss"] /= max(n_mb, 1)
    return stats
