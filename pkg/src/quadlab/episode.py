"""Scenario definition, vectorized environment and 100 Hz episode logs.

One control step runs ten 1 kHz inner steps of oscillators, pattern formation
and world dynamics. ``QuadrupedVecEnv`` steps N independent environments in
one numpy pass; ``run_episode`` drives a single environment with a controller
callback and records an ``EpisodeLog``.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cpg import LIMBS, CpgDrives, CpgParams, CpgState, build_coupling, phase_velocity, step_cpg, template_phases
from .learn.actions import ActionSpec, action_to_drives
from .pattern import FootTrajectoryParams, JointState, joint_targets
from .reward import RewardWeightsFlat, RewardWeightsGap, TransitionData, grid_case, reward_flat, reward_gap
from .sensing import ObservationConfig, Snapshot, assemble_observation
from .terrain import Terrain, gap_mask, generate_gaps
from .world import (
    FALL_HEIGHT, ContactConfig, ContactRecord, RobotModel, SimulationDiverged, TrunkState, finite_mask,
    foot_kinematics, quat_to_rpy, step_world,
)

log = logging.getLogger(__name__)

CONTROL_DT = 0.01
INNER_STEPS = 10
SETTLE_DEPTH = 0.05  # a foot this far below support inside a gap has stepped into it


@dataclass
class Scenario:
    terrain: str = "flat"  # flat | gaps
    gap_count: int = 4
    gap_width_range: tuple[float, float] = (0.14, 0.20)
    beam_width: float = 0.14
    first_gap_start: float = 0.6
    gap_floor_z: float = -1.0
    terrain_seed: int | None = None  # fixed terrain when set, else drawn per episode
    gait: str = "trot"
    action: ActionSpec = field(default_factory=ActionSpec)
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    reward: str = "flat"  # flat | gap
    reward_case: int = 19
    horizon: float = 10.0
    v_des_range: tuple[float, float] = (1.0, 1.0)
    l_step_scale: float = 1.0
    foot: FootTrajectoryParams = field(default_factory=FootTrajectoryParams)
    model: RobotModel = field(default_factory=RobotModel)
    contact: ContactConfig = field(default_factory=ContactConfig)
    cpg: CpgParams = field(default_factory=CpgParams)

    def __post_init__(self):
        if self.terrain not in ("flat", "gaps"):
            raise ValueError(f"unknown terrain '{self.terrain}'")
        if self.reward not in ("flat", "gap"):
            raise ValueError(f"unknown reward '{self.reward}'")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.l_step_scale < 0:
            raise ValueError("l_step_scale must be non-negative")
        if self.observation.action_dim != self.action.dim:
            raise ValueError("observation action_dim does not match the action spec")
        lo, hi = self.v_des_range
        if lo > hi:
            raise ValueError("v_des_range must be ordered")
        if self.action.scenario == "flat":
            vlo, vhi = self.action.v_range
            if lo < vlo - 1e-12 or hi > vhi + 1e-12:
                raise ValueError(f"v_des_range must lie within [{vlo}, {vhi}] for flat actions")
        build_coupling(self.gait)
        if self.reward == "gap":
            grid_case(self.reward_case)

    @property
    def n_control_steps(self) -> int:
        return int(round(self.horizon / CONTROL_DT))

    @property
    def max_gaps(self) -> int:
        return self.gap_count if self.terrain == "gaps" else 0

    def reward_weights(self):
        return RewardWeightsFlat() if self.reward == "flat" else grid_case(self.reward_case)

    def fixed_terrain(self) -> Terrain | None:
        if self.terrain == "flat":
            return Terrain()
        if self.terrain_seed is None:
            return None
        return self.draw_terrain(np.random.default_rng(self.terrain_seed))

    def draw_terrain(self, rng: np.random.Generator) -> Terrain:
        if self.terrain == "flat":
            return Terrain()
        return generate_gaps(rng, self.gap_count, self.first_gap_start, self.gap_width_range,
                             self.beam_width, self.gap_floor_z)


class QuadrupedVecEnv:
    """N independent quadrupeds stepped together; environment i owns RNG seed (seed, i)."""

    def __init__(self, scenario: Scenario, num_envs: int = 1, seed: int = 0, auto_reset: bool = True):
        self.sc = scenario
        self.n = num_envs
        self.seed = seed
        self.auto_reset = auto_reset
        self.coupling = build_coupling(scenario.gait)
        self.weights = scenario.reward_weights()
        self.fixed = scenario.fixed_terrain()
        self.rngs = [np.random.default_rng([seed, i]) for i in range(num_envs)]
        g = scenario.max_gaps
        self.starts = np.full((num_envs, g), np.inf)
        self.ends = np.full((num_envs, g), np.inf)
        self.terrains: list[Terrain] = [Terrain()] * num_envs
        self.v_des = np.zeros(num_envs)
        self.episode_id = np.zeros(num_envs, dtype=np.int64)
        self._alloc()
        for i in range(num_envs):
            self._reset_index(i)

    @property
    def obs_dim(self) -> int:
        return self.sc.observation.dim

    @property
    def act_dim(self) -> int:
        return self.sc.action.dim

    # state -----------------------------------------------------------------
    def _alloc(self):
        n = self.n
        self.trunk = TrunkState.at_rest(self.sc.foot.h, (n,))
        self.js = JointState(np.zeros((n, 12)), np.zeros((n, 12)))
        self.cpg_state = CpgState.zeros((n,))
        self.contact = ContactRecord.empty((n,))
        self.prev_action = np.zeros((n, self.sc.action.dim))
        self.prev_qd = np.zeros((n, 12))
        self.theta_dot = np.zeros((n, 4))
        self.steps = np.zeros(n, dtype=np.int64)
        self.passed = np.zeros((n, max(self.sc.max_gaps, 1)), dtype=bool)
        self.settled = np.zeros((n, max(self.sc.max_gaps, 1)), dtype=bool)

    def _reset_index(self, i: int):
        sc = self.sc
        rng = self.rngs[i]
        t = self.fixed if self.fixed is not None else sc.draw_terrain(rng)
        self.terrains[i] = t
        if sc.max_gaps:
            s, e = t.edges(sc.max_gaps)
            self.starts[i], self.ends[i] = s, e
        lo, hi = sc.v_des_range
        self.v_des[i] = lo if hi == lo else rng.uniform(lo, hi)
        theta = template_phases(sc.gait)
        r = np.zeros(4)
        q = joint_targets(theta, r, self._foot_params(np.zeros(4)), sc.model.geom)
        self.trunk.p[i] = (0.0, 0.0, sc.foot.h)
        self.trunk.quat[i] = (1.0, 0.0, 0.0, 0.0)
        self.trunk.v[i] = 0.0
        self.trunk.w[i] = 0.0
        self.js.q[i] = q
        self.js.q_dot[i] = 0.0
        self.cpg_state.theta[i] = theta
        self.cpg_state.r[i] = 0.0
        self.cpg_state.r_dot[i] = 0.0
        self.contact.in_contact[i] = False
        self.contact.normal_force[i] = 0.0
        self.contact.anchor[i] = np.nan
        self.prev_action[i] = 0.0
        self.prev_qd[i] = 0.0
        self.theta_dot[i] = 0.0
        self.steps[i] = 0
        self.passed[i] = False
        self.settled[i] = False
        self.episode_id[i] += 1

    def _foot_params(self, x_off) -> FootTrajectoryParams:
        f = self.sc.foot
        return FootTrajectoryParams(L_step=f.L_step * self.sc.l_step_scale, h=f.h, L_clrnc=f.L_clrnc,
                                    L_pntr=f.L_pntr, x_off=np.clip(x_off, -0.07, 0.07))

    def terrain_arrays(self):
        return self.starts, self.ends, self.sc.gap_floor_z

    # observation -----------------------------------------------------------
    def observe(self) -> np.ndarray:
        foot_p, *_ = foot_kinematics(self.trunk, self.js, self.sc.model)
        snap = Snapshot(self.trunk.p, self.trunk.quat, self.trunk.v, self.trunk.w, self.js.q, self.js.q_dot,
                        self.contact.in_contact, foot_p, self.theta_dot, self.prev_action, self.v_des)
        return assemble_observation(snap, self.cpg_state, self.terrain_arrays(), self.sc.observation)

    # stepping --------------------------------------------------------------
    def step(self, raw_action):
        """Advance one control period.

        Returns (obs, reward, terminated, truncated, info). With auto_reset,
        finished environments are reset and ``info['final_obs']`` holds their
        last observation.
        """
        sc = self.sc
        raw = np.asarray(raw_action, dtype=float).reshape(self.n, sc.action.dim)
        bad = ~np.isfinite(raw)
        clipped = np.clip(np.where(bad, 0.0, raw), -1.0, 1.0)
        clamped = bad.any(-1) | (clipped != raw).any(-1)
        drives, x_off = action_to_drives(clipped, sc.action, self.v_des if sc.action.scenario == "flat" else None)
        params = self._foot_params(np.zeros((self.n, 4)) if x_off is None else x_off)
        terrain = self.terrain_arrays()
        x_before = self.trunk.p[:, 0].copy()
        peak = np.zeros((self.n, 4))
        ok = np.ones(self.n, dtype=bool)
        tau = np.zeros((self.n, 12))
        with np.errstate(invalid="ignore", over="ignore"):
            for _ in range(INNER_STEPS):
                self.cpg_state = step_cpg(self.cpg_state, drives, self.coupling, sc.cpg) if ok.all() else \
                    _masked_cpg_step(self.cpg_state, drives, self.coupling, sc.cpg, ok)
                q_des = joint_targets(self.cpg_state.theta, self.cpg_state.r, params, sc.model.geom)
                self.trunk, self.js, self.contact, tau = step_world(
                    self.trunk, self.js, q_des, sc.model, terrain, sc.contact, sc.cpg.dt, self.contact, check=False)
                ok &= finite_mask(self.trunk, self.js)
                peak = np.maximum(peak, np.nan_to_num(self.contact.normal_force))
                if sc.max_gaps:
                    self._track_gaps()
        self.theta_dot = phase_velocity(self.cpg_state, drives, self.coupling)
        self.steps += 1
        diverged = ~ok
        if diverged.any():
            self._sanitize(diverged)
        rpy = quat_to_rpy(self.trunk.quat)
        f_x = self.trunk.p[:, 0] - x_before
        td = TransitionData(f_x=f_x, v_des=self.v_des, v_real=f_x / CONTROL_DT, tau=tau, q_dot_now=self.js.q_dot,
                            q_dot_prev=self.prev_qd, orientation=rpy, normal_forces=peak)
        if sc.reward == "flat":
            reward, terms = reward_flat(td, self.weights)
        else:
            reward, terms = reward_gap(td, self.weights)
        reward = np.where(diverged, 0.0, reward)
        self.prev_qd = self.js.q_dot.copy()
        self.prev_action = clipped
        fell = (self.trunk.p[:, 2] < FALL_HEIGHT) & ~diverged
        terminated = fell | diverged
        truncated = (self.steps >= sc.n_control_steps) & ~terminated
        record = {
            "tau": tau, "peak_force": peak, "reward_terms": terms, "clamped": clamped, "action": clipped,
            "fell": fell, "diverged": diverged, "x_before": x_before,
        }
        self.last_record = record
        obs = self.observe()
        info = {"terminated_reason": np.where(diverged, "diverged", np.where(fell, "fall", "")),
                "success": self.success_fraction(), "episode_id": self.episode_id.copy()}
        done = terminated | truncated
        if self.auto_reset and done.any():
            info["final_obs"] = obs.copy()
            for i in np.flatnonzero(done):
                if diverged[i]:
                    log.warning("environment %d diverged; episode discarded", i)
                self._reset_index(i)
            obs = self.observe()
        return obs, reward, terminated, truncated, info

    def _sanitize(self, mask):
        # keep non-finite values out of observations; the episode ends this step
        for arr in (self.trunk.p, self.trunk.v, self.trunk.w, self.js.q, self.js.q_dot,
                    self.cpg_state.theta, self.cpg_state.r, self.cpg_state.r_dot, self.theta_dot):
            arr[mask] = np.nan_to_num(arr[mask], nan=0.0, posinf=0.0, neginf=0.0)
        self.trunk.quat[mask] = (1.0, 0.0, 0.0, 0.0)

    def _track_gaps(self):
        foot_p, *_ = foot_kinematics(self.trunk, self.js, self.sc.model)
        inside = gap_mask(foot_p[..., 0], self.starts, self.ends)  # (n, 4, G)
        deep = (foot_p[..., 2] < -SETTLE_DEPTH)[..., None]
        self.settled |= (inside & deep).any(axis=1)
        alive = self.trunk.p[:, 2] >= FALL_HEIGHT
        self.passed |= (self.trunk.p[:, 0, None] > self.ends) & alive[:, None] & ~self.passed

    def gap_results(self) -> np.ndarray:
        """(n, G) crossed flags for the current episodes so far."""
        if not self.sc.max_gaps:
            return np.zeros((self.n, 0), dtype=bool)
        return self.passed & ~self.settled

    def success_fraction(self) -> np.ndarray:
        if not self.sc.max_gaps:
            return (self.trunk.p[:, 2] >= FALL_HEIGHT).astype(float)
        return self.gap_results().mean(axis=1)

    # checkpointing ---------------------------------------------------------
    def state_dict(self) -> dict:
        return {
            "trunk": [self.trunk.p.copy(), self.trunk.quat.copy(), self.trunk.v.copy(), self.trunk.w.copy()],
            "js": [self.js.q.copy(), self.js.q_dot.copy()],
            "cpg": [self.cpg_state.theta.copy(), self.cpg_state.r.copy(), self.cpg_state.r_dot.copy()],
            "contact": [self.contact.in_contact.copy(), self.contact.normal_force.copy(), self.contact.anchor.copy()],
            "prev_action": self.prev_action.copy(), "prev_qd": self.prev_qd.copy(),
            "theta_dot": self.theta_dot.copy(), "steps": self.steps.copy(), "passed": self.passed.copy(),
            "settled": self.settled.copy(), "starts": self.starts.copy(), "ends": self.ends.copy(),
            "v_des": self.v_des.copy(), "episode_id": self.episode_id.copy(),
            "terrains": [t.to_dict() for t in self.terrains],
            "rngs": [r.bit_generator.state for r in self.rngs],
        }

    def load_state_dict(self, d: dict):
        self.trunk = TrunkState(*[np.array(a) for a in d["trunk"]])
        self.js = JointState(*[np.array(a) for a in d["js"]])
        self.cpg_state = CpgState(*[np.array(a) for a in d["cpg"]])
        ic, nf, an = d["contact"]
        self.contact = ContactRecord(np.array(ic, dtype=bool), np.array(nf), np.array(an))
        for k in ("prev_action", "prev_qd", "theta_dot", "starts", "ends", "v_des"):
            setattr(self, k, np.array(d[k], dtype=float))
        self.steps = np.array(d["steps"], dtype=np.int64)
        self.episode_id = np.array(d["episode_id"], dtype=np.int64)
        self.passed = np.array(d["passed"], dtype=bool)
        self.settled = np.array(d["settled"], dtype=bool)
        self.terrains = [Terrain.from_dict(t) for t in d["terrains"]]
        for r, s in zip(self.rngs, d["rngs"]):
            r.bit_generator.state = s


def _masked_cpg_step(state, drives, coupling, params, ok):
    safe = CpgState(np.where(ok[:, None], state.theta, 0.0), np.where(ok[:, None], state.r, 0.0),
                    np.where(ok[:, None], state.r_dot, 0.0))
    return step_cpg(safe, drives, coupling, params)


# ---------------------------------------------------------------------------
# logs

def log_columns(action_dim: int) -> list[str]:
    cols = ["time", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"]
    joints = [f"{leg}_{j}" for leg in LIMBS for j in ("roll", "pitch", "knee")]
    cols += [f"q_{j}" for j in joints] + [f"qd_{j}" for j in joints] + [f"tau_{j}" for j in joints]
    cols += [f"contact_{leg}" for leg in LIMBS] + [f"fn_{leg}" for leg in LIMBS]
    cols += [f"foot_{leg}_{a}" for leg in LIMBS for a in "xyz"]
    cols += [f"cpg_{k}_{leg}" for k in ("r", "rdot", "theta", "thetadot") for leg in LIMBS]
    cols += [f"action_{i}" for i in range(action_dim)] + ["action_clamped"]
    cols += ["reward"] + [f"r_{t}" for t in REWARD_TERMS]
    cols += [f"peak_fn_{leg}" for leg in LIMBS] + [f"settled_{leg}" for leg in LIMBS] + ["terminal"]
    return cols


REWARD_TERMS = ("progress", "tracking", "peak_force", "power", "orientation")
REQUIRED_COLUMNS = ("time", "px", "py", "pz", "vx", "vy", "wx", "wy", "wz") + tuple(
    f"{p}_{leg}_{j}" for p in ("qd", "tau") for leg in LIMBS for j in ("roll", "pitch", "knee")
) + tuple(f"contact_{leg}" for leg in LIMBS) + tuple(f"fn_{leg}" for leg in LIMBS) + tuple(
    f"foot_{leg}_{a}" for leg in LIMBS for a in "xyz")


class LogFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class EpisodeLog:
    """100 Hz time series of one episode. ``data`` maps column name to a 1-D array."""

    data: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.data["time"])

    def __getitem__(self, key: str) -> np.ndarray:
        return self.data[key]

    def has(self, key: str) -> bool:
        return key in self.data

    def block(self, prefix: str, names) -> np.ndarray:
        return np.stack([self.data[f"{prefix}{n}"] for n in names], axis=-1)

    @property
    def time(self):
        return self.data["time"]

    @property
    def p(self):
        return self.block("p", "xyz")

    @property
    def v(self):
        return self.block("v", "xyz")

    @property
    def w(self):
        return self.block("w", "xyz")

    def joints(self, prefix: str) -> np.ndarray:
        return self.block(prefix, [f"{leg}_{j}" for leg in LIMBS for j in ("roll", "pitch", "knee")])

    @property
    def contacts(self):
        return self.block("contact_", LIMBS).astype(bool)

    @property
    def normal_forces(self):
        return self.block("fn_", LIMBS)

    @property
    def peak_forces(self):
        return self.block("peak_fn_", LIMBS) if self.has("peak_fn_FL") else self.normal_forces

    @property
    def foot_positions(self):
        return np.stack([self.block(f"foot_{leg}_", "xyz") for leg in LIMBS], axis=1)

    @property
    def terminal_reason(self) -> str | None:
        return self.meta.get("terminal_reason")

    @property
    def terrain(self) -> Terrain:
        t = self.meta.get("terrain")
        return Terrain.from_dict(t) if t else Terrain()

    def to_csv(self, path, columns: list[str] | None = None):
        path = Path(path)
        cols = columns or list(self.data)
        arr = np.stack([np.asarray(self.data[c], dtype=float) for c in cols], axis=1)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in arr:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        meta_path = path.with_suffix(".meta.json")
        meta_path.write_text(json.dumps(self.meta, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "EpisodeLog":
        path = Path(path)
        try:
            fh = open(path, encoding="utf-8", newline="")
        except OSError as exc:
            raise LogFormatError(f"cannot open {path}: {exc}") from exc
        with fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise LogFormatError("empty file", 1) from None
            missing = [c for c in REQUIRED_COLUMNS if c not in header]
            if missing:
                raise LogFormatError(f"missing required columns {missing}", 1)
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise LogFormatError(f"expected {len(header)} fields, found {len(row)}", lineno)
                try:
                    rows.append([float(x) for x in row])
                except ValueError as exc:
                    raise LogFormatError(str(exc), lineno) from None
        if not rows:
            raise LogFormatError("no data rows", 2)
        arr = np.array(rows)
        data = {c: arr[:, k] for k, c in enumerate(header)}
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
        return cls(data, meta)


def _fmt(x: float) -> str:
    if np.isfinite(x) and x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def gap_outcomes(log: EpisodeLog, terrain: Terrain | None = None) -> list[bool]:
    """Per-gap crossed flags.

    A gap is crossed when the trunk x passes its end strictly before any fall
    terminal and no foot ever sank more than SETTLE_DEPTH into that gap.
    """
    terrain = terrain or log.terrain
    if terrain.kind != "gaps":
        raise ValueError("gap outcomes need a gaps terrain")
    x = log.data["px"]
    t = log.time
    fall_time = t[-1] if log.terminal_reason in ("fall", "diverged") else np.inf
    feet = log.foot_positions if all(log.has(f"foot_{leg}_x") for leg in LIMBS) else None
    out = []
    for k, (start, end) in enumerate(zip(terrain.starts, terrain.ends)):
        past = np.flatnonzero(x > end)
        crossed = past.size > 0 and t[past[0]] < fall_time
        if crossed and log.has("settled_FL"):
            flags = log.block("settled_", LIMBS)
            crossed = not np.any(flags == k + 1)
        elif crossed and feet is not None:
            fx, fz = feet[..., 0], feet[..., 2]
            crossed = not np.any((fx > start) & (fx < end) & (fz < -SETTLE_DEPTH))
        out.append(bool(crossed))
    return out


# ---------------------------------------------------------------------------
# single-episode runner

def run_episode(controller, scenario: Scenario, seed: int = 0) -> EpisodeLog:
    """Run one episode with ``controller(observation) -> raw action``.

    Raises SimulationDiverged when the state becomes non-finite.
    """
    env = QuadrupedVecEnv(scenario, 1, seed, auto_reset=False)
    terrain = env.terrains[0]
    cols = log_columns(scenario.action.dim)
    rows = []
    obs = env.observe()[0]
    reason = None
    settled_prev = np.zeros(4, dtype=np.int64)
    for k in range(scenario.n_control_steps):
        action = np.asarray(controller(obs), dtype=float)
        settled_before = env.settled[0].copy()
        obs_all, reward, term, trunc, info = env.step(action[None, :])
        rec = env.last_record
        if rec["diverged"][0]:
            raise SimulationDiverged(f"non-finite state at t = {(k + 1) * CONTROL_DT:.2f} s")
        obs = obs_all[0]
        settled_row = _settled_row(env, settled_before, settled_prev)
        settled_prev = settled_row
        rows.append(_log_row(env, k, rec, reward[0], settled_row, bool(term[0])))
        if term[0]:
            reason = str(info["terminated_reason"][0])
            break
        if trunc[0]:
            break
    arr = np.array(rows)
    data = {c: arr[:, i] for i, c in enumerate(cols)}
    meta = {
        "seed": seed, "terrain": terrain.to_dict(), "mass": scenario.model.mass, "g": scenario.contact.g,
        "h": scenario.foot.h, "terminal_reason": reason, "v_des": float(env.v_des[0]),
        "action_dim": scenario.action.dim, "gait": scenario.gait, "l_step_scale": scenario.l_step_scale,
    }
    out = EpisodeLog(data, meta)
    if terrain.kind == "gaps":
        out.meta["gap_outcomes"] = gap_outcomes(out, terrain)
    return out


def _settled_row(env: QuadrupedVecEnv, before, prev) -> np.ndarray:
    # per-leg index (1-based) of a gap that newly registered a settled foot, else 0
    row = np.zeros(4)
    if not env.sc.max_gaps:
        return row
    newly = env.settled[0] & ~before
    if newly.any():
        foot_p, *_ = foot_kinematics(env.trunk, env.js, env.sc.model)
        g = int(np.flatnonzero(newly)[0])
        inside = gap_mask(foot_p[0, :, 0], env.starts[0], env.ends[0])[:, g]
        legs = np.flatnonzero(inside) if inside.any() else np.array([int(np.argmin(foot_p[0, :, 2]))])
        row[legs] = g + 1
    return row


def _log_row(env: QuadrupedVecEnv, k: int, rec: dict, reward: float, settled, terminal: bool) -> list[float]:
    i = 0
    tr, js, cpg = env.trunk, env.js, env.cpg_state
    foot_p, *_ = foot_kinematics(tr, js, env.sc.model)
    terms = rec["reward_terms"]
    rterms = [float(terms[t][i]) if t in terms else 0.0 for t in REWARD_TERMS]
    return (
        [(k + 1) / 100.0] + list(tr.p[i]) + list(tr.quat[i]) + list(tr.v[i]) + list(tr.w[i])
        + list(js.q[i]) + list(js.q_dot[i]) + list(rec["tau"][i])
        + list(env.contact.in_contact[i].astype(float)) + list(env.contact.normal_force[i])
        + list(foot_p[i].reshape(-1))
        + list(cpg.r[i]) + list(cpg.r_dot[i]) + list(cpg.theta[i]) + list(env.theta_dot[i])
        + list(rec["action"][i]) + [float(rec["clamped"][i])]
        + [float(reward)] + rterms
        + list(rec["peak_force"][i]) + list(settled) + [float(terminal)]
    )
