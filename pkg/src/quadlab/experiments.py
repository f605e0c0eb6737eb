"""Experiment building blocks shared by the CLI: controllers, evaluation, training and sweeps."""
from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np

from .episode import EpisodeLog, QuadrupedVecEnv, Scenario, run_episode
from .learn.ppo import ActorCritic, PpoConfig
from .learn.toy import ToyVelocityEnv, evaluate_toy, optimal_return
from .learn.train import Trainer, load_policy, train
from .metrics import MetricError, compute_report, cost_of_transport, fit_quadratic, mean_velocity
from .reward import LEVELS, case_index
from .scripted import ConstantDrive, GapSchedule
from .sensing import CASES, observation_scales, preset, preset_coupling
from .world import FALL_HEIGHT


def episode_seed(seed: int, index: int) -> int:
    return 1000 * int(seed) + int(index)


class PolicyController:
    """Deterministic (mean) action of a frozen actor-critic."""

    def __init__(self, ac: ActorCritic):
        self.ac = ac

    def __call__(self, obs):
        mean, _, _ = self.ac.act(np.asarray(obs)[None, :], None, deterministic=True)
        return mean[0]


def make_controller(kind: str, scenario: Scenario, mu=1.5, omega=12.0, v_des=1.0, checkpoint=None):
    spec = scenario.action
    if kind == "open-loop":
        return ConstantDrive(spec, mu=mu, omega=omega, v_des=v_des)
    if kind == "zero":
        zero = np.zeros(spec.dim)
        return lambda obs: zero
    if kind == "gap-schedule":
        try:
            return GapSchedule(scenario.observation, spec)
        except KeyError as exc:
            raise ValueError(f"gap-schedule controller needs observation feature {exc}") from None
    if kind == "checkpoint":
        ac, _ = load_policy(checkpoint)
        if ac.obs_dim != scenario.observation.dim or ac.act_dim != spec.dim:
            raise ValueError(f"checkpoint dims ({ac.obs_dim}, {ac.act_dim}) do not match the scenario "
                             f"({scenario.observation.dim}, {spec.dim})")
        return PolicyController(ac)
    raise ValueError(f"unknown controller kind '{kind}'")


def evaluate_episodes(controller_factory, scenario: Scenario, seeds) -> list[EpisodeLog]:
    """One logged episode per seed; the factory is called per episode so scripted state starts fresh."""
    return [run_episode(controller_factory(), scenario, s) for s in seeds]


def aggregate_reports(logs) -> dict:
    reports = [compute_report(lg).to_dict() for lg in logs]
    keys = reports[0].keys() if reports else []
    mean = {}
    for k in keys:
        vals = [r[k] for r in reports if r[k] is not None]
        mean[k] = float(np.mean(vals)) if vals else None
    return {"episodes": reports, "mean": mean}


# training ---------------------------------------------------------------------------

def policy_success(ac: ActorCritic, scenario: Scenario, episodes: int, seed: int) -> float:
    """Deterministic-policy success over ``episodes`` parallel attempts (gap crossings, or survival on flat)."""
    env = QuadrupedVecEnv(scenario, episodes, seed, auto_reset=False)
    obs = env.observe()
    alive = np.ones(episodes, dtype=bool)
    for _ in range(scenario.n_control_steps):
        a, _, _ = ac.act(obs, None, deterministic=True)
        obs, _, term, _, _ = env.step(a)
        alive &= ~term
        if not alive.any():
            break
    if scenario.max_gaps:
        return float(env.gap_results().mean())
    return float(alive.mean())


def make_trainer(scenario: Scenario | None, cfg: PpoConfig, seed: int, env_kind: str = "quadruped",
                 meta: dict | None = None) -> Trainer:
    if env_kind == "toy":
        return Trainer(ToyVelocityEnv(cfg.num_envs, seed), cfg, seed, meta=meta)
    env = QuadrupedVecEnv(scenario, cfg.num_envs, seed)
    off, sc = observation_scales(scenario.observation)
    return Trainer(env, cfg, seed, off, sc, meta)


def make_env(scenario: Scenario | None, cfg: PpoConfig, seed: int, env_kind: str):
    if env_kind == "toy":
        return ToyVelocityEnv(cfg.num_envs, seed)
    return QuadrupedVecEnv(scenario, cfg.num_envs, seed)


TOY_EVAL_TARGETS = np.linspace(-1.0, 1.0, 101)


def toy_eval(ac: ActorCritic) -> dict:
    ret = evaluate_toy(lambda o: ac.act(o, None, deterministic=True)[0], TOY_EVAL_TARGETS)
    return {"eval_return": float(ret.mean()),
            "eval_fraction_of_optimum": float(ret.mean() / optimal_return(TOY_EVAL_TARGETS).mean())}


def quadruped_eval(scenario: Scenario, episodes: int, seed: int, every: int):
    counter = {"n": 0}

    def fn(ac):
        counter["n"] += 1
        if episodes <= 0 or every <= 0 or counter["n"] % every:
            return {"eval_success": float("nan")}
        return {"eval_success": policy_success(ac, scenario, episodes, seed + 7919)}
    return fn


def updates_for(samples: int, cfg: PpoConfig) -> int:
    return max(1, math.ceil(samples / cfg.batch_size))


def train_cell(scenario: Scenario, cfg: PpoConfig, seed: int, samples: int, eval_episodes: int) -> dict:
    """Train from scratch, then measure deterministic success before (untrained) and after."""
    tr = make_trainer(scenario, cfg, seed)
    before = policy_success(tr.ac, scenario, eval_episodes, seed + 7919)
    train(tr.env, cfg, seed, updates_for(samples, cfg), trainer=tr)
    after = policy_success(tr.ac, scenario, eval_episodes, seed + 7919)
    return {"trainer": tr, "success_before": before, "success_after": after, "samples": tr.samples}


def policy_metrics(ac: ActorCritic, scenario: Scenario, seeds) -> dict:
    logs = evaluate_episodes(lambda: PolicyController(ac), scenario, seeds)
    return aggregate_reports(logs)["mean"]


# sweeps ------------------------------------------------------------------------------

def reward_cases(selected=None) -> list[int]:
    cases = list(range(1, 28)) if not selected else sorted(set(selected))
    for c in cases:
        if not 1 <= c <= 27:
            raise ValueError(f"reward case {c} outside 1..27")
    return cases


def reward_label(case: int) -> tuple[str, str, str]:
    v, rest = divmod(case - 1, 9)
    c, f = divmod(rest, 3)
    assert case_index(LEVELS[v], LEVELS[c], LEVELS[f]) == case
    return LEVELS[v], LEVELS[c], LEVELS[f]


def reward_sweep_row(base: Scenario, case: int, cfg: PpoConfig, seed: int, samples: int, episodes: int) -> dict:
    sc = dataclasses.replace(base, reward="gap", reward_case=case)
    res = train_cell(sc, cfg, seed, samples, episodes)
    m = policy_metrics(res["trainer"].ac, sc, [episode_seed(seed, k) for k in range(episodes)])
    v, c, f = reward_label(case)
    return {"case": case, "viability": v, "cot_level": c, "force_level": f, "samples": res["samples"],
            "success_rate": m["success_rate"], "cot": m["cot"], "excess_peak_force": m["excess_peak_force"]}


def observation_cases(selected=None) -> list[str]:
    if not selected:
        return list(CASES)
    out = []
    for c in selected:
        if not 1 <= c <= len(CASES):
            raise ValueError(f"observation case {c} outside 1..{len(CASES)}")
        out.append(CASES[c - 1])
    return out


def observation_scenario(base: Scenario, name: str) -> Scenario:
    return dataclasses.replace(base, observation=preset(name, base.action.dim), gait=preset_coupling(name))


def observation_sweep_row(base: Scenario, name: str, cfg: PpoConfig, seed: int, samples: int, episodes: int) -> dict:
    sc = observation_scenario(base, name)
    res = train_cell(sc, cfg, seed, samples, episodes)
    m = policy_metrics(res["trainer"].ac, sc, [episode_seed(seed, k) for k in range(episodes)])
    return {"case": CASES.index(name) + 1, "name": name, "coupling": sc.gait, "samples": res["samples"],
            "success_rate": m["success_rate"], "mean_abs_angular_velocity": m["mean_abs_angular_velocity"],
            "cv_stride_duration": m["cv_stride_duration"], "cv_stride_length": m["cv_stride_length"],
            "cot": m["cot"], "mean_abs_lateral_dcm_offset": m["mean_abs_lateral_dcm_offset"]}


def extended_gait_points(ac: ActorCritic, base: Scenario, scales, seeds) -> list[dict]:
    """(scale, mean velocity, CoT, viable) per L_step scale; falls and zero strides are non-viable."""
    rows = []
    for s in scales:
        sc = dataclasses.replace(base, l_step_scale=float(s))
        vs, cots, note = [], [], ""
        for seed in seeds:
            lg = run_episode(PolicyController(ac), sc, seed)
            if lg.terminal_reason is not None or np.min(lg.p[:, 2]) < FALL_HEIGHT:
                note = "fall"
                break
            try:
                vs.append(mean_velocity(lg))
                cots.append(cost_of_transport(lg, sc.model.mass, sc.contact.g))
            except MetricError as exc:
                note = str(exc)
                break
        if s == 0:
            note = note or "zero stride"
        viable = not note
        rows.append({"scale": float(s), "mean_velocity": float(np.mean(vs)) if vs else float("nan"),
                     "cot": float(np.mean(cots)) if cots else float("nan"), "viable": viable, "note": note})
    return rows


def fit_extended(rows) -> list[float] | None:
    pts = [(r["mean_velocity"], r["cot"]) for r in rows if r["viable"]]
    try:
        return [float(c) for c in fit_quadratic(pts)]
    except MetricError:
        return None


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
