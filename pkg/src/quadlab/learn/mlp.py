"""Small fully connected networks with hand-written backprop, plus Adam."""
from __future__ import annotations

import numpy as np

LOG_STD_BOUNDS = (-4.0, 1.0)


def _act(name: str, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    raise ValueError(f"unknown activation '{name}'")


def _act_grad(name: str, z, a):
    if name == "tanh":
        return 1.0 - a * a
    return np.where(z > 0, 1.0, a + 1.0)


class MLP:
    """Dense layers with a linear output; ``forward`` caches what ``backward`` needs."""

    def __init__(self, sizes, activation: str = "tanh", rng=None, out_scale: float = 1.0):
        _act(activation, np.zeros(1))
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        rng = np.random.default_rng(0) if rng is None else rng
        self.activation = activation
        self.sizes = [int(s) for s in sizes]
        self.params: dict[str, np.ndarray] = {}
        n = len(sizes) - 1
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_scale if i == n - 1 else 1.0
            self.params[f"W{i}"] = rng.normal(size=(a, b)) * gain * np.sqrt(1.0 / a)
            self.params[f"b{i}"] = np.zeros(b)
        self._cache = None

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        cache = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                h = _act(self.activation, z)
                cache.append((z, h))
            else:
                h = z
        self._cache = cache
        return h

    __call__ = forward

    def backward(self, grad_out) -> dict[str, np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. every parameter, from the last forward."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        g = np.asarray(grad_out, dtype=float)
        grads = {}
        for i in reversed(range(self.n_layers)):
            h_in = self._cache[0] if i == 0 else self._cache[i][1]
            grads[f"W{i}"] = h_in.T @ g
            grads[f"b{i}"] = g.sum(0)
            if i > 0:
                z, a = self._cache[i]
                g = (g @ self.params[f"W{i}"].T) * _act_grad(self.activation, z, a)
        return grads


class GaussianPolicy:
    """Mean network plus a state-independent log standard deviation."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), activation: str = "tanh", rng=None):
        self.net = MLP([obs_dim, *hidden, act_dim], activation, rng, out_scale=0.01)
        self.log_std = np.zeros(act_dim)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {**self.net.params, "log_std": self.log_std}

    def clamp(self):
        np.clip(self.log_std, *LOG_STD_BOUNDS, out=self.log_std)

    def mean(self, obs):
        return self.net.forward(obs)

    def sample(self, obs, rng):
        mu = self.mean(obs)
        return gaussian_sample(mu, self.log_std, rng)

    def log_prob(self, obs, actions):
        return gaussian_log_prob(self.mean(obs), self.log_std, actions)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * np.log(2 * np.pi * np.e)))


def gaussian_sample(mean, log_std, rng):
    """Returns (action, log_prob)."""
    mean = np.asarray(mean, dtype=float)
    a = mean + np.exp(log_std) * rng.normal(size=mean.shape)
    return a, gaussian_log_prob(mean, log_std, a)


def gaussian_log_prob(mean, log_std, actions):
    z = (np.asarray(actions) - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * np.log(2 * np.pi)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """In-place descent step on ``params``."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state_dict(self) -> dict:
        out = {"t": np.array(self.t)}
        out.update({f"m.{k}": v for k, v in self.m.items()})
        out.update({f"v.{k}": v for k, v in self.v.items()})
        return out

    def load_state_dict(self, d: dict):
        self.t = int(d["t"])
        for k in self.m:
            self.m[k] = np.array(d[f"m.{k}"], dtype=float)
            self.v[k] = np.array(d[f"v.{k}"], dtype=float)
