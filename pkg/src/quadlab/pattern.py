"""Pattern formation: oscillator state -> foot targets -> joint angles -> PD torques.

Leg frames are aligned with the trunk frame and centred on the hip-roll axis.
Joint order per leg is (hip roll about x, hip pitch about y, knee about y);
positive pitch swings the foot backwards. The 12-joint vector is the four
legs concatenated in FL, FR, HL, HR order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LATERAL_SIGN = np.array([1.0, -1.0, 1.0, -1.0])


@dataclass
class FootTrajectoryParams:
    L_step: float = 0.04
    h: float = 0.25
    L_clrnc: float = 0.05
    L_pntr: float = 0.01
    x_off: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.x_off = np.asarray(self.x_off, dtype=float)
        if not self.h > 0:
            raise ValueError("nominal leg length h must be positive")
        if self.L_clrnc < 0 or self.L_pntr < 0:
            raise ValueError("clearance and penetration must be non-negative")
        if np.any(np.abs(self.x_off) > 0.07 + 1e-12):
            raise ValueError("|x_off| must not exceed 0.07 m")


@dataclass
class LegGeometry:
    l_hip: float = 0.0838
    l_thigh: float = 0.20
    l_calf: float = 0.20
    hip_positions: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.18, 0.047, 0.0], [0.18, -0.047, 0.0], [-0.18, 0.047, 0.0], [-0.18, -0.047, 0.0]]
        )
    )
    lateral_sign: np.ndarray = field(default_factory=lambda: LATERAL_SIGN.copy())

    def __post_init__(self):
        if min(self.l_hip, self.l_thigh, self.l_calf) <= 0:
            raise ValueError("link lengths must be positive")


@dataclass
class JointState:
    q: np.ndarray
    q_dot: np.ndarray

    def copy(self) -> "JointState":
        return JointState(self.q.copy(), self.q_dot.copy())


@dataclass
class PdGains:
    kp: float = 100.0
    kd: float = 2.0
    tau_max: float = 33.5

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise ValueError("PD gains must be non-negative")
        if not self.tau_max > 0:
            raise ValueError("tau_max must be positive")


class WorkspaceError(ValueError):
    """Foot target outside the reachable workspace of a leg."""

    def __init__(self, message: str, bound: float, value: float):
        super().__init__(message)
        self.bound = bound
        self.value = value


def foot_target(theta, r, params: FootTrajectoryParams, leg_index=None, geom: LegGeometry | None = None):
    """Foot position in the hip frame for oscillator phase/amplitude.

    With ``leg_index`` None, ``theta`` and ``r`` are (..., 4) arrays and the
    result is (..., 4, 3); otherwise they are per-leg and the result is (..., 3).
    ``params.x_off`` broadcasts against the limb axis.
    """
    geom = geom or LegGeometry()
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("oscillator amplitude must be non-negative")
    if leg_index is None:
        x_off = params.x_off
        sign = geom.lateral_sign
    else:
        x_off = np.asarray(params.x_off)[..., leg_index]
        sign = geom.lateral_sign[leg_index]
    s = np.sin(theta)
    x = x_off - params.L_step * r * np.cos(theta)
    z = np.where(s > 0, -params.h + params.L_clrnc * s, -params.h + params.L_pntr * s)
    y = np.broadcast_to(sign * geom.l_hip, x.shape)
    return np.stack([x, y, z], axis=-1)


def _split(q_leg):
    q_leg = np.asarray(q_leg, dtype=float)
    return q_leg[..., 0], q_leg[..., 1], q_leg[..., 2]


def _sign(geom: LegGeometry, leg_index):
    return geom.lateral_sign if leg_index is None else geom.lateral_sign[leg_index]


def leg_fk(q_leg, geom: LegGeometry, leg_index=None) -> np.ndarray:
    """Hip-frame foot position for joint angles (..., 3) (or (..., 4, 3) with leg_index None)."""
    q0, q1, q2 = _split(q_leg)
    s = _sign(geom, leg_index)
    l1, l2 = geom.l_thigh, geom.l_calf
    # sagittal chain in the rolled frame
    xs = -l1 * np.sin(q1) - l2 * np.sin(q1 + q2)
    zs = -l1 * np.cos(q1) - l2 * np.cos(q1 + q2)
    ys = s * geom.l_hip
    c0, s0 = np.cos(q0), np.sin(q0)
    y = ys * c0 - zs * s0
    z = ys * s0 + zs * c0
    return np.stack([xs, np.broadcast_to(y, xs.shape), z], axis=-1)


def leg_jacobian(q_leg, geom: LegGeometry, leg_index=None) -> np.ndarray:
    """d(foot position)/d(q_leg), shape (..., 3, 3) with columns per joint."""
    q0, q1, q2 = _split(q_leg)
    s = _sign(geom, leg_index)
    l1, l2 = geom.l_thigh, geom.l_calf
    c0, s0 = np.cos(q0), np.sin(q0)
    xs = -l1 * np.sin(q1) - l2 * np.sin(q1 + q2)
    zs = -l1 * np.cos(q1) - l2 * np.cos(q1 + q2)
    ys = np.broadcast_to(s * geom.l_hip, xs.shape)
    # d(xs, zs)/dq1 and /dq2 in the rolled frame
    dx1, dz1 = zs, -xs
    dx2 = -l2 * np.cos(q1 + q2)
    dz2 = l2 * np.sin(q1 + q2)
    y = ys * c0 - zs * s0
    z = ys * s0 + zs * c0
    zero = np.zeros_like(xs)
    col0 = np.stack([zero, -z, y], axis=-1)
    col1 = np.stack([dx1, -dz1 * s0, dz1 * c0], axis=-1)
    col2 = np.stack([dx2, -dz2 * s0, dz2 * c0], axis=-1)
    return np.stack([col0, col1, col2], axis=-1)


def leg_ik(p, geom: LegGeometry, leg_index=None, eps: float = 1e-9) -> np.ndarray:
    """Closed-form joint angles for a hip-frame foot target, knee-backward branch.

    Raises WorkspaceError when any target is out of reach.
    """
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    s = _sign(geom, leg_index)
    l1, l2, lh = geom.l_thigh, geom.l_calf, geom.l_hip
    d_yz2 = y * y + z * z
    if np.any(d_yz2 < lh * lh):
        raise WorkspaceError("target lies inside the hip offset cylinder", bound=lh, value=float(np.sqrt(d_yz2.min())))
    zr = -np.sqrt(d_yz2 - lh * lh)
    d = np.sqrt(x * x + zr * zr)
    lo, hi = abs(l1 - l2) + eps, l1 + l2 - eps
    if np.any(d > hi):
        raise WorkspaceError(f"target distance exceeds {hi:.6f} m", bound=hi, value=float(d.max()))
    if np.any(d < lo):
        raise WorkspaceError(f"target distance below {lo:.6f} m", bound=lo, value=float(d.min()))
    q0 = np.arctan2(z, y) - np.arctan2(zr, s * lh)
    q0 = np.pi - np.mod(np.pi - q0, 2.0 * np.pi)
    cos_knee = np.clip((d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    q2 = -np.arccos(cos_knee)
    ax = -l2 * np.sin(q2)
    az = -l1 - l2 * np.cos(q2)
    q1 = np.arctan2(az, ax) - np.arctan2(zr, x)
    q1 = np.pi - np.mod(np.pi - q1, 2.0 * np.pi)
    return np.stack([q0, q1, q2], axis=-1)


def project_to_workspace(p, geom: LegGeometry, margin: float = 1e-3) -> np.ndarray:
    """Pull hip-frame targets (..., 4, 3) radially into the reachable shell."""
    p = np.array(p, dtype=float)
    lh = geom.l_hip
    y, z = p[..., 1], p[..., 2]
    d_yz = np.sqrt(y * y + z * z)
    degenerate = d_yz < 1e-9
    if np.any(degenerate):
        # no radial direction; fall back to a point below the hip
        p[..., 1] = np.where(degenerate, _lateral_for(p, geom) * lh, y)
        p[..., 2] = np.where(degenerate, -margin, z)
        y, z = p[..., 1], p[..., 2]
        d_yz = np.sqrt(y * y + z * z)
    small = d_yz < lh + margin
    if np.any(small):
        scale = np.where(small, (lh + margin) / np.maximum(d_yz, 1e-12), 1.0)
        p[..., 1] *= scale
        p[..., 2] *= scale
        y, z = p[..., 1], p[..., 2]
    zr = np.sqrt(np.maximum(y * y + z * z - lh * lh, 0.0))
    d = np.sqrt(p[..., 0] ** 2 + zr * zr)
    hi = geom.l_thigh + geom.l_calf - margin
    lo = abs(geom.l_thigh - geom.l_calf) + margin
    target = np.clip(d, lo, hi)
    if np.any(target != d):
        # rescale x and the sagittal depth together, then rebuild (y, z)
        f = np.where(d > 0, target / np.maximum(d, 1e-12), 1.0)
        new_zr = zr * f
        ang = np.arctan2(z, y) - np.arctan2(-zr, _lateral_for(p, geom) * lh)
        ys, zs = _lateral_for(p, geom) * lh, -new_zr
        p[..., 0] = p[..., 0] * f
        p[..., 1] = ys * np.cos(ang) - zs * np.sin(ang)
        p[..., 2] = ys * np.sin(ang) + zs * np.cos(ang)
    return p


def _lateral_for(p, geom: LegGeometry):
    return np.broadcast_to(geom.lateral_sign, p.shape[:-1])


def pd_torque(q_des, js: JointState, gains: PdGains) -> np.ndarray:
    """Joint PD torques toward q_des with zero desired velocity, saturated at tau_max."""
    tau = gains.kp * (np.asarray(q_des) - js.q) - gains.kd * js.q_dot
    return np.clip(tau, -gains.tau_max, gains.tau_max)


def joint_targets(theta, r, params: FootTrajectoryParams, geom: LegGeometry) -> np.ndarray:
    """Oscillator states (..., 4) -> desired joint angles (..., 12)."""
    feet = project_to_workspace(foot_target(theta, r, params, geom=geom), geom)
    q = leg_ik(feet, geom)
    return q.reshape(*q.shape[:-2], 12)
