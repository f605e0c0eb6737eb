"""Rigid-trunk quadruped with massless legs and spring-damper ground contact.

Legs carry no mass; each joint integrates a reflected rotor inertia driven by
its PD torque plus the contact load mapped through the leg Jacobian. The trunk
receives the contact forces at the world-frame foot points. All functions
accept leading batch dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pattern import JointState, LegGeometry, PdGains, leg_fk, leg_jacobian, pd_torque
from .terrain import Terrain, gap_mask

FALL_HEIGHT = 0.15


class SimulationDiverged(RuntimeError):
    pass


# quaternions are (w, x, y, z)
def quat_mul(a, b):
    aw, ax, ay, az = np.moveaxis(np.asarray(a), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_from_rotvec(v):
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1)
    half = 0.5 * angle
    # sin(half)/angle, with the series limit near zero
    k = np.where(angle > 1e-8, np.sin(half) / np.where(angle > 1e-8, angle, 1.0), 0.5 - angle**2 / 48.0)
    return np.concatenate([np.cos(half)[..., None], v * k[..., None]], axis=-1)


def quat_to_rot(q):
    w, x, y, z = np.moveaxis(np.asarray(q), -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def quat_to_rpy(q):
    w, x, y, z = np.moveaxis(np.asarray(q), -1, 0)
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.stack([roll, pitch, yaw], axis=-1)


def rpy_to_quat(rpy):
    rpy = np.asarray(rpy, dtype=float)
    cr, sr = np.cos(rpy[..., 0] / 2), np.sin(rpy[..., 0] / 2)
    cp, sp = np.cos(rpy[..., 1] / 2), np.sin(rpy[..., 1] / 2)
    cy, sy = np.cos(rpy[..., 2] / 2), np.sin(rpy[..., 2] / 2)
    return np.stack(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ],
        axis=-1,
    )


@dataclass
class TrunkState:
    p: np.ndarray
    quat: np.ndarray
    v: np.ndarray
    w: np.ndarray  # body frame

    @classmethod
    def at_rest(cls, height: float, batch: tuple[int, ...] = ()) -> "TrunkState":
        p = np.zeros((*batch, 3))
        p[..., 2] = height
        quat = np.zeros((*batch, 4))
        quat[..., 0] = 1.0
        return cls(p, quat, np.zeros((*batch, 3)), np.zeros((*batch, 3)))

    def copy(self) -> "TrunkState":
        return TrunkState(self.p.copy(), self.quat.copy(), self.v.copy(), self.w.copy())

    @property
    def R(self) -> np.ndarray:
        return quat_to_rot(self.quat)

    @property
    def rpy(self) -> np.ndarray:
        return quat_to_rpy(self.quat)


@dataclass
class RobotModel:
    mass: float = 12.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.13, 0.25, 0.30]))
    geom: LegGeometry = field(default_factory=LegGeometry)
    gains: PdGains = field(default_factory=PdGains)
    joint_reflected_inertia: float = 0.05
    body_length: float = 0.36

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T) or np.any(np.linalg.eigvalsh(self.inertia) <= 0):
            raise ValueError("inertia must be symmetric positive definite")
        if not self.joint_reflected_inertia > 0:
            raise ValueError("joint_reflected_inertia must be positive")


@dataclass
class ContactConfig:
    k_n: float = 1e4
    d_n: float = 200.0
    k_t: float = 5e3
    d_t: float = 50.0
    mu_f: float = 0.8
    g: float = 9.81


@dataclass
class ContactRecord:
    in_contact: np.ndarray
    normal_force: np.ndarray
    anchor: np.ndarray  # (..., 4, 2); NaN while unanchored

    @classmethod
    def empty(cls, batch: tuple[int, ...] = ()) -> "ContactRecord":
        return cls(np.zeros((*batch, 4), dtype=bool), np.zeros((*batch, 4)), np.full((*batch, 4, 2), np.nan))

    def copy(self) -> "ContactRecord":
        return ContactRecord(self.in_contact.copy(), self.normal_force.copy(), self.anchor.copy())


def _terrain_arrays(terrain):
    if isinstance(terrain, Terrain):
        s, e = terrain.edges()
        return s, e, terrain.gap_floor_z
    return terrain  # already (starts, ends, floor)


def contact_forces(foot_p, foot_v, anchor, terrain, cfg: ContactConfig):
    """Batched contact model for feet (..., K, 3).

    ``terrain`` is a Terrain or a (starts, ends, floor_z) tuple with starts and
    ends shaped (..., G). Returns (force (..., K, 3), in_contact, normal_force,
    anchor, tangential (..., K, 2)).
    """
    starts, ends, floor = _terrain_arrays(terrain)
    x, z = foot_p[..., 0], foot_p[..., 2]
    v = foot_v
    force = np.zeros(foot_p.shape)
    if starts.shape[-1]:
        inside = gap_mask(x, starts, ends)
        in_gap = inside.any(axis=-1)
        ground = np.where(in_gap, floor, 0.0)
        xs = x[..., None]
        d_left = np.where(np.asarray(ends)[..., None, :] <= xs, xs - np.asarray(ends)[..., None, :], np.inf).min(axis=-1)
        d_right = np.where(np.asarray(starts)[..., None, :] >= xs, np.asarray(starts)[..., None, :] - xs, np.inf).min(axis=-1)
    else:
        in_gap = np.zeros(x.shape, dtype=bool)
        ground = np.zeros(x.shape)
        d_left = d_right = np.full(x.shape, np.inf)
    depth = ground - z
    anchored = ~np.isnan(anchor[..., 0])
    d_wall = np.minimum(d_left, d_right)
    wall = (~in_gap) & (depth > 0) & (d_wall < depth) & ~anchored
    vertical = (depth > 0) & ~wall

    fn = np.where(vertical, np.maximum(0.0, cfg.k_n * depth - cfg.d_n * v[..., 2]), 0.0)
    pxy = foot_p[..., :2]
    anchor = np.where((vertical & ~anchored)[..., None], pxy, anchor)
    anchor = np.where(vertical[..., None], anchor, np.nan)
    ft = np.where(vertical[..., None], -cfg.k_t * (pxy - anchor) - cfg.d_t * v[..., :2], 0.0)
    ft = np.nan_to_num(ft)
    mag = np.linalg.norm(ft, axis=-1)
    limit = cfg.mu_f * fn
    slip = mag > limit
    scale = np.where(slip, limit / np.where(mag > 0, mag, 1.0), 1.0)
    ft = ft * scale[..., None]
    slipped_anchor = pxy + (ft + cfg.d_t * v[..., :2]) / cfg.k_t
    anchor = np.where((slip & vertical)[..., None], slipped_anchor, anchor)

    normal_dir = np.where(d_left < d_right, -1.0, 1.0)
    fw = np.where(wall, np.maximum(0.0, cfg.k_n * d_wall - cfg.d_n * v[..., 0] * normal_dir), 0.0)

    force[..., 0] = ft[..., 0] + fw * normal_dir
    force[..., 1] = ft[..., 1]
    force[..., 2] = fn
    normal = fn + fw
    return force, vertical | wall, normal, anchor, ft


def contact_force(foot_p, foot_v, rec: ContactRecord, leg: int, t: Terrain, cfg: ContactConfig):
    """Single-foot contact force in world frame and the updated record slot."""
    anchor = rec.anchor[..., leg : leg + 1, :]
    f, inc, fn, anc, _ = contact_forces(
        np.asarray(foot_p, dtype=float)[..., None, :], np.asarray(foot_v, dtype=float)[..., None, :], anchor, t, cfg
    )
    out = rec.copy()
    out.in_contact[..., leg] = inc[..., 0]
    out.normal_force[..., leg] = fn[..., 0]
    out.anchor[..., leg, :] = anc[..., 0, :]
    return f[..., 0, :], out


def foot_kinematics(trunk: TrunkState, js: JointState, model: RobotModel):
    """World foot positions/velocities (..., 4, 3), body-frame offsets, Jacobians, rotation."""
    batch = js.q.shape[:-1]
    q_leg = js.q.reshape(*batch, 4, 3)
    qd_leg = js.q_dot.reshape(*batch, 4, 3)
    R = quat_to_rot(trunk.quat)
    r_b = model.geom.hip_positions + leg_fk(q_leg, model.geom)
    J = leg_jacobian(q_leg, model.geom)
    vel_b = np.cross(trunk.w[..., None, :], r_b) + np.einsum("...kij,...kj->...ki", J, qd_leg)
    foot_p = trunk.p[..., None, :] + np.einsum("...ij,...kj->...ki", R, r_b)
    foot_v = trunk.v[..., None, :] + np.einsum("...ij,...kj->...ki", R, vel_b)
    return foot_p, foot_v, r_b, J, R


def step_world(trunk: TrunkState, js: JointState, q_des, model: RobotModel, terrain,
               cfg: ContactConfig, dt: float = 1e-3, contact: ContactRecord | None = None,
               check: bool = True):
    """Advance trunk and joints by dt.

    Returns (trunk, joints, contact record, applied torques). With ``check``
    False non-finite results are returned rather than raised.
    """
    batch = js.q.shape[:-1]
    if contact is None:
        contact = ContactRecord.empty(batch)
    foot_p, foot_v, r_b, J, R = foot_kinematics(trunk, js, model)
    force, in_contact, normal, anchor, _ = contact_forces(foot_p, foot_v, contact.anchor, terrain, cfg)

    tau = pd_torque(q_des, js, model.gains)
    f_body = np.einsum("...ji,...kj->...ki", R, force)
    tau_ext = np.einsum("...kji,...kj->...ki", J, f_body).reshape(*batch, 12)
    q_ddot = (tau + tau_ext) / model.joint_reflected_inertia
    q_dot = js.q_dot + dt * q_ddot
    q = js.q + dt * q_dot

    g_vec = np.array([0.0, 0.0, -cfg.g])
    v = trunk.v + dt * (force.sum(axis=-2) / model.mass + g_vec)
    # constant gravity enters the position update exactly
    p = trunk.p + dt * v - 0.5 * dt * dt * g_vec

    I = model.inertia
    I_inv = np.linalg.inv(I)
    torque_w = np.cross(foot_p - trunk.p[..., None, :], force).sum(axis=-2)
    L = np.einsum("...ij,jk,...k->...i", R, I, trunk.w) + dt * torque_w
    w_mid = np.einsum("ij,...kj,...k->...i", I_inv, R, L)
    quat = quat_mul(trunk.quat, quat_from_rotvec(w_mid * dt))
    quat = quat / np.linalg.norm(quat, axis=-1, keepdims=True)
    w = np.einsum("ij,...kj,...k->...i", I_inv, quat_to_rot(quat), L)

    new_trunk = TrunkState(p, quat, v, w)
    new_js = JointState(q, q_dot)
    rec = ContactRecord(in_contact, normal, anchor)
    if check:
        for name, arr in (("p", p), ("quat", quat), ("v", v), ("w", w), ("q", q), ("q_dot", q_dot)):
            if not np.all(np.isfinite(arr)):
                raise SimulationDiverged(f"non-finite trunk/joint state '{name}'")
    return new_trunk, new_js, rec, tau


def finite_mask(trunk: TrunkState, js: JointState) -> np.ndarray:
    ok = np.isfinite(trunk.p).all(-1) & np.isfinite(trunk.quat).all(-1) & np.isfinite(trunk.v).all(-1)
    ok &= np.isfinite(trunk.w).all(-1) & np.isfinite(js.q).all(-1) & np.isfinite(js.q_dot).all(-1)
    return ok


def check_termination(trunk: TrunkState, support_level: float = 0.0):
    """'fall' when the base is strictly below 15 cm above the support level, else None."""
    return "fall" if float(trunk.p[..., 2]) - support_level < FALL_HEIGHT else None


def fallen(trunk: TrunkState, support_level: float = 0.0) -> np.ndarray:
    return trunk.p[..., 2] - support_level < FALL_HEIGHT


def mechanical_energy(trunk: TrunkState, model: RobotModel, g: float = 9.81) -> np.ndarray:
    ke = 0.5 * model.mass * np.sum(trunk.v**2, axis=-1)
    ke_rot = 0.5 * np.einsum("...i,ij,...j->...", trunk.w, model.inertia, trunk.w)
    return ke + ke_rot + model.mass * g * trunk.p[..., 2]
