"""Rollout collection, the PPO training loop, and checkpoint files.

Checkpoint layout (format ``quadlab-checkpoint`` version 1): a single
``.npz`` archive. Network weights, Adam moments and array-valued environment
state are stored as named arrays; everything else (layer sizes, activation,
PPO config, action spec, observation config, RNG states, learning curve) is a
JSON document under the ``__meta__`` key. Arrays nested in the JSON are
referenced as ``{"__array__": name}``.
"""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from .mlp import Adam
from .ppo import ActorCritic, PpoConfig, RolloutBuffer, gae, ppo_update

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "quadlab-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack(obj, name: str, arrays: dict):
    if isinstance(obj, np.ndarray):
        arrays[name] = obj
        return {"__array__": name}
    if isinstance(obj, dict):
        return {k: _pack(v, f"{name}.{k}", arrays) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pack(v, f"{name}.{i}", arrays) for i, v in enumerate(obj)]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _unpack(obj, arrays):
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            return np.array(arrays[obj["__array__"]])
        return {k: _unpack(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unpack(v, arrays) for v in obj]
    return obj


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_json_safe(v) for v in x]
    return x


class Trainer:
    """PPO state that can be stepped one update at a time and saved or resumed exactly."""

    def __init__(self, env, cfg: PpoConfig, seed: int = 0, obs_offset=None, obs_scale=None, meta: dict | None = None):
        if env.n != cfg.num_envs:
            raise ValueError(f"environment count {env.n} differs from config num_envs {cfg.num_envs}")
        self.env = env
        self.cfg = cfg
        self.seed = seed
        self.meta = dict(meta or {})
        self.rng = np.random.default_rng(seed)
        self.ac = ActorCritic(env.obs_dim, env.act_dim, cfg.hidden, cfg.activation, self.rng, obs_offset, obs_scale)
        self.opt = Adam(self.ac.params(), lr=cfg.lr)
        self.updates = 0
        self.samples = 0
        self.ep_return = np.zeros(env.n)
        self.curve: list[dict] = []

    # rollout ----------------------------------------------------------------
    def collect(self) -> tuple[RolloutBuffer, dict]:
        cfg, env = self.cfg, self.env
        T, n = cfg.steps_per_env, env.n
        obs_b = np.zeros((T, n, env.obs_dim))
        act_b = np.zeros((T, n, env.act_dim))
        lp_b, rew_b, val_b = np.zeros((T, n)), np.zeros((T, n)), np.zeros((T, n))
        done_b = np.zeros((T, n), dtype=bool)
        finished, successes, discarded = [], [], 0
        obs = env.observe()
        for t in range(T):
            a, lp, v = self.ac.act(obs, self.rng)
            nobs, r, term, trunc, info = env.step(a)
            r = np.asarray(r, dtype=float)
            done = np.asarray(term) | np.asarray(trunc)
            boot = r.copy()
            if np.any(trunc):
                final = info.get("final_obs", nobs)
                boot[trunc] += cfg.gamma * self.ac.value(final[trunc])
            self.ep_return += r
            reasons = info.get("terminated_reason")
            for i in np.flatnonzero(done):
                if reasons is not None and reasons[i] == "diverged":
                    discarded += 1
                    log.warning("episode in environment %d diverged; excluded from statistics", i)
                else:
                    finished.append(self.ep_return[i])
                    if "success" in info:
                        successes.append(float(info["success"][i]))
                self.ep_return[i] = 0.0
            obs_b[t], act_b[t], lp_b[t], rew_b[t], val_b[t], done_b[t] = obs, a, lp, boot, v, done
            obs = nobs
        last_v = self.ac.value(obs)
        next_v = np.concatenate([val_b[1:], last_v[None]], axis=0)
        adv = np.zeros((T, n))
        ret = np.zeros((T, n))
        for i in range(n):
            adv[:, i], ret[:, i] = gae(rew_b[:, i], val_b[:, i], done_b[:, i], cfg.gamma, cfg.lam, next_v[:, i])

        def flat(x):  # environment-major order
            return np.swapaxes(x, 0, 1).reshape(n * T, *x.shape[2:])

        buf = RolloutBuffer(flat(obs_b), flat(act_b), flat(lp_b), flat(rew_b), flat(val_b), flat(done_b),
                            flat(next_v), flat(adv), flat(ret))
        stats = {
            "mean_return": float(np.mean(finished)) if finished else float("nan"),
            "episodes": len(finished),
            "success": float(np.mean(successes)) if successes else float("nan"),
            "mean_reward": float(rew_b.mean()),
            "discarded": discarded,
        }
        return buf, stats

    def update(self, eval_fn=None) -> dict:
        buf, stats = self.collect()
        stats.update(ppo_update(self.ac, self.opt, buf, self.cfg, self.rng))
        self.updates += 1
        self.samples += len(buf)
        row = {"update": self.updates, "samples": self.samples, **stats}
        if eval_fn is not None:
            row.update(eval_fn(self.ac))
        self.curve.append(row)
        return row

    # persistence --------------------------------------------------------------
    def save(self, path) -> Path:
        arrays: dict[str, np.ndarray] = {}
        for k, v in self.ac.params().items():
            arrays[f"param.{k}"] = v
        for k, v in self.opt.state_dict().items():
            arrays[f"adam.{k}"] = np.asarray(v)
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "obs_dim": self.ac.obs_dim,
            "act_dim": self.ac.act_dim,
            "layer_sizes": [self.ac.obs_dim, *self.cfg.hidden, self.ac.act_dim],
            "activation": self.cfg.activation,
            "ppo": self.cfg.to_dict(),
            "seed": self.seed,
            "updates": self.updates,
            "samples": self.samples,
            "rng": self.rng.bit_generator.state,
            "env": _pack(self.env.state_dict(), "env", arrays),
            "curve": _json_safe(self.curve),
            **self.meta,
        }
        arrays["obs_offset"] = self.ac.obs_offset
        arrays["obs_scale"] = self.ac.obs_scale
        arrays["ep_return"] = self.ep_return
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
        return path

    @classmethod
    def load(cls, path, env) -> "Trainer":
        meta, arrays = read_checkpoint(path)
        cfg = PpoConfig(**meta["ppo"])
        extra = {k: v for k, v in meta.items() if k not in _CORE_KEYS}
        tr = cls(env, cfg, meta["seed"], arrays["obs_offset"], arrays["obs_scale"], extra)
        load_params(tr.ac, arrays)
        tr.opt.load_state_dict({k[5:]: v for k, v in arrays.items() if k.startswith("adam.")})
        tr.rng.bit_generator.state = meta["rng"]
        env.load_state_dict(_unpack(meta["env"], arrays))
        tr.updates = meta["updates"]
        tr.samples = meta["samples"]
        tr.ep_return = np.array(arrays["ep_return"])
        tr.curve = [{k: (float("nan") if v is None else v) for k, v in row.items()} for row in meta["curve"]]
        return tr


_CORE_KEYS = {"format", "version", "obs_dim", "act_dim", "layer_sizes", "activation", "ppo", "seed", "updates",
              "samples", "rng", "env", "curve"}


def read_checkpoint(path) -> tuple[dict, dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise CheckpointError(f"{path} is not a checkpoint (no metadata)")
    meta = json.loads(str(arrays.pop("__meta__")))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    return meta, arrays


def load_params(ac: ActorCritic, arrays: dict):
    params = ac.params()
    for k, v in params.items():
        src = arrays[f"param.{k}"]
        if src.shape != v.shape:
            raise CheckpointError(f"parameter {k}: shape {src.shape} does not match {v.shape}")
        v[...] = src


def load_policy(path) -> tuple[ActorCritic, dict]:
    """Frozen actor-critic and metadata from a checkpoint."""
    meta, arrays = read_checkpoint(path)
    ac = ActorCritic(meta["obs_dim"], meta["act_dim"], meta["layer_sizes"][1:-1], meta["activation"],
                     obs_offset=arrays["obs_offset"], obs_scale=arrays["obs_scale"])
    load_params(ac, arrays)
    return ac, meta


def train(env, cfg: PpoConfig, seed: int, updates: int, eval_fn=None, checkpoint_dir=None,
          checkpoint_every: int = 0, trainer: Trainer | None = None, obs_offset=None, obs_scale=None,
          meta: dict | None = None, progress=None) -> Trainer:
    """Run PPO until ``updates`` total updates; pass ``trainer`` to continue a resumed run."""
    tr = trainer or Trainer(env, cfg, seed, obs_offset, obs_scale, meta)
    while tr.updates < updates:
        row = tr.update(eval_fn)
        if progress is not None:
            progress(row)
        if checkpoint_dir is not None and checkpoint_every and tr.updates % checkpoint_every == 0:
            tr.save(Path(checkpoint_dir) / f"ckpt_{tr.updates:06d}.npz")
    return tr
