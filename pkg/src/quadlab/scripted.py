"""Hand-written controllers that act through the same observation/action interface as a policy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cpg import GAIT_OFFSETS, wrap_pi
from .learn.actions import ActionSpec, drives_to_action
from .sensing import ObservationConfig


def feature_slice(cfg: ObservationConfig, name: str) -> slice:
    start = 0
    for feat, width in cfg.layout():
        if feat == name:
            return slice(start, start + width)
        start += width
    raise KeyError(f"feature '{name}' is not enabled")


class ConstantDrive:
    """Open-loop constant drives (the flat-terrain viability check uses mu 1.5, omega 12)."""

    def __init__(self, spec: ActionSpec, mu: float = 1.5, omega: float = 12.0, v_des: float = 1.0, x_off=0.0):
        self.action = drives_to_action(mu, omega, spec, v_des=v_des, x_off=x_off)

    def __call__(self, obs):
        return self.action


@dataclass
class PronkGains:
    """Pronk drives with pitch and velocity feedback; front limbs get +, hind limbs - corrections."""

    mu: float = 2.1266
    omega: float = 20.8015
    omega_pitch: float = 20.0329  # rad/s per rad of pitch
    omega_pitch_rate: float = -1.1489  # rad/s per rad/s
    mu_pitch: float = 2.68
    x_off_front: float = 0.0143
    x_off_hind: float = -0.0376
    x_off_velocity: float = 0.1528  # m per m/s of speed error
    x_off_pitch: float = -0.2718
    v_target: float = 0.601
    yaw_gain: float = 3.4455  # left/right amplitude split per rad of yaw


class GapSchedule:
    """Trot until the next gap start comes within ``switch_distance`` of the base, then pronk.

    Oscillators are left uncoupled; inter-limb phases are steered onto the
    active template by per-limb frequency corrections computed from the CPG
    phases in the observation. The pronk adds pitch and forward-speed feedback
    on amplitudes, frequencies and foot offsets. Both gaits steer
    heading by splitting left and right amplitudes in proportion to yaw. Needs the orientation,
    linear/angular velocity, ``cpg_states`` and ``base_gap`` features and a
    gap action spec. Gains were tuned by a small cross-entropy search on
    seeded 2-gap terrains.
    """

    SIDE = np.array([1.0, 1.0, -1.0, -1.0])
    LEFT = np.array([1.0, -1.0, 1.0, -1.0])

    def __init__(self, cfg: ObservationConfig, spec: ActionSpec, pronk: PronkGains | None = None,
                 trot_mu: float = 1.5, trot_omega: float = 12.0, switch_distance: float = 0.7059,
                 sync_gain: float = 8.0, trot_yaw_gain: float = 3.5085):
        if spec.scenario != "gap":
            raise ValueError("the gap schedule needs a gap action spec")
        self.spec = spec
        self.s_rpy = feature_slice(cfg, "orientation")
        self.s_v = feature_slice(cfg, "linear_velocity")
        self.s_w = feature_slice(cfg, "angular_velocity")
        self.s_cpg = feature_slice(cfg, "cpg_states")
        self.s_base = feature_slice(cfg, "base_gap")
        self.pronk = pronk or PronkGains()
        self.trot_mu = trot_mu
        self.trot_omega = trot_omega
        self.switch_distance = switch_distance
        self.sync_gain = sync_gain
        self.trot_yaw_gain = trot_yaw_gain
        self.mode = "trot"
        self.switch_step: int | None = None
        self.steps = 0

    def __call__(self, obs):
        obs = np.asarray(obs)
        if self.mode == "trot" and obs[self.s_base][0] < self.switch_distance:
            self.mode = "pronk"
            self.switch_step = self.steps
        self.steps += 1
        theta = obs[self.s_cpg][8:12]
        a, b, c = GAIT_OFFSETS[self.mode]
        aligned = theta + np.array([0.0, a, b, c])
        sync = self.sync_gain * np.clip(wrap_pi(aligned[0] - aligned), -1.0, 1.0)
        yaw = obs[self.s_rpy][2]
        if self.mode == "trot":
            mu = self.trot_mu + self.trot_yaw_gain * yaw * self.LEFT
            omega = self.trot_omega + sync
            x_off = np.zeros(4)
        else:
            g = self.pronk
            pitch = obs[self.s_rpy][1]
            pitch_rate = obs[self.s_w][1]
            vx = obs[self.s_v][0]
            mu = g.mu + g.mu_pitch * pitch * self.SIDE + g.yaw_gain * yaw * self.LEFT
            omega = g.omega + (g.omega_pitch * pitch + g.omega_pitch_rate * pitch_rate) * self.SIDE + sync
            x_off = np.where(self.SIDE > 0, g.x_off_front, g.x_off_hind)
            x_off = x_off + g.x_off_velocity * (vx - g.v_target) + g.x_off_pitch * pitch
        mu = np.clip(mu, *self.spec.mu_bounds)
        omega = np.clip(omega, *self.spec.omega_bounds)
        x_off = np.clip(x_off, *self.spec.x_off_bounds)
        return drives_to_action(mu, omega, self.spec, x_off=x_off)


def gap_schedule_observation() -> ObservationConfig:
    """Blind features plus base and feet distances to the next gap."""
    return ObservationConfig(feet_gap=True, base_gap=True, action_dim=12)
