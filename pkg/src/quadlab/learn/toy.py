"""One-dimensional point mass that must track a random target velocity.

v' = v + 0.5 a with a clipped to [-1, 1]; reward 1 - (v' - v*)^2 per step,
v* ~ U[-1, 1], v starts at 0 and episodes last 20 steps. The optimal policy
moves at full authority until the target is reached, so the optimal return
is 20 - max(|v*| - 0.5, 0)^2, averaging 20 - 1/24 over targets.
"""
from __future__ import annotations

import numpy as np

GAIN = 0.5
HORIZON = 20


def optimal_return(target) -> np.ndarray:
    t = np.abs(np.asarray(target, dtype=float))[..., None]
    k = np.arange(1, HORIZON + 1)
    return HORIZON - np.sum(np.maximum(t - GAIN * k, 0.0) ** 2, axis=-1)


EXPECTED_OPTIMAL_RETURN = HORIZON - 1.0 / 24.0


class ToyVelocityEnv:
    """Vectorized, auto-resetting; same step signature as the quadruped env."""

    obs_dim = 2
    act_dim = 1

    def __init__(self, num_envs: int = 1, seed: int = 0, auto_reset: bool = True):
        self.n = num_envs
        self.auto_reset = auto_reset
        self.rngs = [np.random.default_rng([seed, i]) for i in range(num_envs)]
        self.v = np.zeros(num_envs)
        self.target = np.zeros(num_envs)
        self.steps = np.zeros(num_envs, dtype=np.int64)
        for i in range(num_envs):
            self._reset_index(i)

    def _reset_index(self, i: int):
        self.v[i] = 0.0
        self.target[i] = self.rngs[i].uniform(-1.0, 1.0)
        self.steps[i] = 0

    def observe(self) -> np.ndarray:
        return np.stack([self.v, self.target], axis=-1)

    def step(self, raw_action):
        a = np.clip(np.nan_to_num(np.asarray(raw_action, dtype=float).reshape(self.n, -1)[:, 0]), -1.0, 1.0)
        self.v = self.v + GAIN * a
        reward = 1.0 - (self.v - self.target) ** 2
        self.steps += 1
        terminated = self.steps >= HORIZON
        truncated = np.zeros(self.n, dtype=bool)
        obs = self.observe()
        info = {}
        if self.auto_reset and terminated.any():
            info["final_obs"] = obs.copy()
            for i in np.flatnonzero(terminated):
                self._reset_index(i)
            obs = self.observe()
        return obs, reward, terminated, truncated, info

    def state_dict(self) -> dict:
        return {"v": self.v.copy(), "target": self.target.copy(), "steps": self.steps.copy(),
                "rngs": [r.bit_generator.state for r in self.rngs]}

    def load_state_dict(self, d: dict):
        self.v = np.array(d["v"], dtype=float)
        self.target = np.array(d["target"], dtype=float)
        self.steps = np.array(d["steps"], dtype=np.int64)
        for r, s in zip(self.rngs, d["rngs"]):
            r.bit_generator.state = s


def evaluate_toy(policy, targets) -> np.ndarray:
    """Deterministic returns of ``policy(obs) -> raw action`` for each target."""
    targets = np.asarray(targets, dtype=float)
    v = np.zeros_like(targets)
    ret = np.zeros_like(targets)
    for _ in range(HORIZON):
        a = np.clip(np.asarray(policy(np.stack([v, targets], -1)))[..., 0], -1.0, 1.0)
        v = v + GAIN * a
        ret += 1.0 - (v - targets) ** 2
    return ret
