"""Observation assembly: blind proprioceptive/vestibular features plus
exteroceptive gap features, rays and heightmaps.

Feature order (only enabled features appear, always in this order):

    orientation        3   roll, pitch, yaw
    linear_velocity    3   body frame
    angular_velocity   3   body frame
    joint_positions   12
    joint_velocities  12
    contacts           4
    previous_action    action_dim (raw, in [-1, 1])
    cpg_states        16   r, r_dot, theta wrapped to [0, 2pi), theta_dot
    desired_velocity   1
    feet_gap           8   per foot (to start, to end) of the next gap, FL..HR
    front_feet_gap     4   FL, FR only
    hind_feet_gap      4   HL, HR only
    base_gap           2
    penetration        4   foot below support level inside a gap
    rays               n_rays
    heightmap          rows * cols, row-major, rows run forward
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .cpg import CpgState
from .terrain import Terrain, gap_mask, height_from_edges
from .world import quat_to_rot, quat_to_rpy

FEATURES = (
    "orientation", "linear_velocity", "angular_velocity", "joint_positions", "joint_velocities",
    "contacts", "previous_action", "cpg_states", "desired_velocity", "feet_gap", "front_feet_gap",
    "hind_feet_gap", "base_gap", "penetration", "rays", "heightmap",
)
BLIND = ("orientation", "linear_velocity", "angular_velocity", "joint_positions", "joint_velocities",
         "contacts", "previous_action", "cpg_states", "desired_velocity")


@dataclass
class RayConfig:
    angles_deg: tuple[float, ...] = (20.0, 35.0, 50.0)
    origin: tuple[float, float, float] = (0.22, 0.0, 0.0)  # body frame
    max_range: float = 2.0


@dataclass
class ObservationConfig:
    orientation: bool = True
    linear_velocity: bool = True
    angular_velocity: bool = True
    joint_positions: bool = True
    joint_velocities: bool = True
    contacts: bool = True
    previous_action: bool = True
    cpg_states: bool = True
    desired_velocity: bool = True
    feet_gap: bool = False
    front_feet_gap: bool = False
    hind_feet_gap: bool = False
    base_gap: bool = False
    penetration: bool = False
    rays: bool = False
    heightmap: bool = False
    action_dim: int = 8
    horizon: float = 1.0
    heightmap_rows: int = 10
    heightmap_cols: int = 6
    heightmap_spacing: float = 0.05
    ray: RayConfig = field(default_factory=RayConfig)

    def __post_init__(self):
        if isinstance(self.ray, dict):
            self.ray = RayConfig(**self.ray)
        if not any(getattr(self, f) for f in FEATURES):
            raise ValueError("observation config enables no features")
        if self.action_dim <= 0 or self.horizon <= 0:
            raise ValueError("action_dim and horizon must be positive")

    def widths(self) -> dict[str, int]:
        return {
            "orientation": 3, "linear_velocity": 3, "angular_velocity": 3, "joint_positions": 12,
            "joint_velocities": 12, "contacts": 4, "previous_action": self.action_dim, "cpg_states": 16,
            "desired_velocity": 1, "feet_gap": 8, "front_feet_gap": 4, "hind_feet_gap": 4, "base_gap": 2,
            "penetration": 4, "rays": len(self.ray.angles_deg),
            "heightmap": self.heightmap_rows * self.heightmap_cols,
        }

    def layout(self) -> list[tuple[str, int]]:
        w = self.widths()
        return [(f, w[f]) for f in FEATURES if getattr(self, f)]

    @property
    def dim(self) -> int:
        return sum(w for _, w in self.layout())

    def enabled(self) -> frozenset[str]:
        return frozenset(f for f in FEATURES if getattr(self, f))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "ray"}
        d["ray"] = {"angles_deg": list(self.ray.angles_deg), "origin": list(self.ray.origin),
                    "max_range": self.ray.max_range}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationConfig":
        d = dict(d)
        ray = d.pop("ray", None)
        cfg = cls(**d)
        if ray is not None:
            cfg.ray = RayConfig(tuple(ray["angles_deg"]), tuple(ray["origin"]), ray["max_range"])
        return cfg


def _blind(**extra) -> dict:
    base = {f: True for f in BLIND}
    base.update(extra)
    return base


# name -> (feature flags, CPG coupling the case trains with)
PRESETS: dict[str, tuple[dict, str]] = {
    "case-01-feet-dist": (_blind(feet_gap=True), "uncoupled"),
    "case-02-front-feet-dist": (_blind(front_feet_gap=True), "uncoupled"),
    "case-03-lidar": (_blind(rays=True), "uncoupled"),
    "case-04-no-contacts": (_blind(feet_gap=True, contacts=False), "uncoupled"),
    "case-05-no-proprio": (_blind(feet_gap=True, joint_positions=False, joint_velocities=False), "uncoupled"),
    "case-06-no-front-feet-dist": (_blind(hind_feet_gap=True), "uncoupled"),
    "case-07-no-vestibular": (
        _blind(feet_gap=True, orientation=False, linear_velocity=False, angular_velocity=False), "uncoupled"),
    "case-08-base-dist": (_blind(base_gap=True), "uncoupled"),
    "case-09-penetration": (_blind(penetration=True), "uncoupled"),
    "case-10-blind": (_blind(), "uncoupled"),
    "case-11-walk-coupling": (_blind(feet_gap=True), "walk"),
    "case-12-trot-coupling": (_blind(feet_gap=True), "trot"),
    "case-13-bound-coupling": (_blind(feet_gap=True), "bound"),
    "blind": (_blind(), "trot"),
    "heightmap": (_blind(heightmap=True), "uncoupled"),
}
CASES = tuple(k for k in PRESETS if k.startswith("case-"))


def preset(name: str, action_dim: int = 12) -> ObservationConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown observation preset '{name}'")
    flags, _ = PRESETS[name]
    off = {f: False for f in FEATURES}
    off.update(flags)
    return ObservationConfig(**off, action_dim=action_dim)


def preset_coupling(name: str) -> str:
    return PRESETS[name][1]


def _edges(terrain):
    if isinstance(terrain, Terrain):
        s, e = terrain.edges()
        return s, e, terrain.gap_floor_z
    return terrain


def gap_distances(x, terrain, horizon: float = 1.0) -> np.ndarray:
    """(to start, to end) of the nearest gap whose end lies ahead of x; shape (..., K, 2)."""
    starts, ends, _ = _edges(terrain)
    x = np.asarray(x, dtype=float)
    ends_b = np.asarray(ends)[..., None, :]
    ahead = ends_b > x[..., None]
    key = np.where(ahead, ends_b, np.inf)
    if key.shape[-1] == 0:
        return np.full((*x.shape, 2), horizon)
    idx = np.argmin(key, axis=-1)
    found = np.take_along_axis(ahead, idx[..., None], axis=-1)[..., 0]
    s = np.take_along_axis(np.broadcast_to(np.asarray(starts)[..., None, :], key.shape), idx[..., None], -1)[..., 0]
    e = np.take_along_axis(key, idx[..., None], -1)[..., 0]
    d_start = np.where(found, np.clip(s - x, 0.0, horizon), horizon)
    d_end = np.where(found, np.clip(e - x, 0.0, horizon), horizon)
    return np.stack([d_start, d_end], axis=-1)


def feet_gap_distances(foot_xy, t, horizon: float = 1.0) -> np.ndarray:
    """8-array (start, end) distances per foot along x, saturated at ``horizon``."""
    foot_xy = np.asarray(foot_xy, dtype=float)
    d = gap_distances(foot_xy[..., 0], t, horizon)
    return d.reshape(*d.shape[:-2], -1)


def penetration_flags(foot_p, terrain) -> np.ndarray:
    starts, ends, _ = _edges(terrain)
    foot_p = np.asarray(foot_p)
    if np.asarray(starts).shape[-1] == 0:
        return np.zeros(foot_p.shape[:-1], dtype=bool)
    return gap_mask(foot_p[..., 0], starts, ends).any(-1) & (foot_p[..., 2] < 0.0)


def ray_scan(t, sensor_pose, n_channels: int = 3, cfg: RayConfig | None = None) -> np.ndarray:
    """Distances along downward-pitched rays to the terrain profile.

    ``sensor_pose`` is (p, quat) of the trunk; rays start at ``cfg.origin`` in
    the body frame and point forward, pitched down by ``cfg.angles_deg``.
    """
    cfg = cfg or RayConfig()
    if len(cfg.angles_deg) != n_channels:
        cfg = replace(cfg, angles_deg=tuple(np.linspace(20.0, 50.0, n_channels)))
    starts, ends, floor = _edges(t)
    p, quat = sensor_pose
    R = quat_to_rot(quat)
    origin = np.asarray(p) + R @ np.asarray(cfg.origin) if R.ndim == 2 else (
        np.asarray(p) + np.einsum("...ij,j->...i", R, np.asarray(cfg.origin)))
    a = np.deg2rad(np.asarray(cfg.angles_deg))
    dirs_b = np.stack([np.cos(a), np.zeros_like(a), -np.sin(a)], axis=-1)  # (n, 3)
    dirs = np.einsum("...ij,nj->...ni", R, dirs_b)
    ox = origin[..., None, 0]
    oz = origin[..., None, 2]
    dx, dz = dirs[..., 0], dirs[..., 2]
    far = cfg.max_range
    down = dz < -1e-12
    safe_dz = np.where(down, dz, -1.0)
    s_plane = np.where(down & (oz >= 0), -oz / safe_dz, np.inf)
    s_plane = np.where(oz < 0, 0.0, s_plane)
    x_hit = ox + np.where(np.isfinite(s_plane), s_plane, 0.0) * dx
    st = np.asarray(starts)[..., None, :]
    en = np.asarray(ends)[..., None, :]
    if st.shape[-1]:
        inside = (x_hit[..., None] > st) & (x_hit[..., None] < en)
        in_gap = inside.any(-1) & np.isfinite(s_plane)
        g_start = np.where(inside, st, 0.0).sum(-1)
        g_end = np.where(inside, en, 0.0).sum(-1)
    else:
        in_gap = np.zeros_like(s_plane, dtype=bool)
        g_start = g_end = np.zeros_like(s_plane)
    # inside a gap the ray meets a side wall or the floor
    wall_x = np.where(dx > 0, g_end, g_start)
    safe_dx = np.where(np.abs(dx) > 1e-12, dx, 1.0)
    s_wall = np.where(np.abs(dx) > 1e-12, (wall_x - ox) / safe_dx, np.inf)
    z_wall = oz + s_wall * dz
    s_floor = np.where(down, (floor - oz) / safe_dz, np.inf)
    s_gap = np.where(np.isfinite(s_wall) & (z_wall >= floor), s_wall, s_floor)
    s = np.where(in_gap, s_gap, s_plane)
    return np.minimum(s, far)


def heightmap_query(t, base_pose, rows: int = 10, cols: int = 6, spacing: float = 0.05,
                    front_offset: float = 0.18) -> np.ndarray:
    """Terrain heights on a yaw-aligned grid starting under the front hips, row-major."""
    starts, ends, floor = _edges(t)
    p, quat = base_pose
    yaw = quat_to_rpy(quat)[..., 2]
    fwd = front_offset + spacing * np.arange(rows)
    lat = spacing * (np.arange(cols) - 0.5 * (cols - 1))
    F, L = np.meshgrid(fwd, lat, indexing="ij")
    c, s = np.cos(yaw)[..., None, None], np.sin(yaw)[..., None, None]
    x = np.asarray(p)[..., 0, None, None] + F * c - L * s
    flat = x.reshape(*x.shape[:-2], rows * cols)
    if np.asarray(starts).shape[-1] == 0:
        return np.zeros(flat.shape)
    return height_from_edges(flat, starts, ends, floor)


@dataclass
class Snapshot:
    """Everything observable at one control instant (optionally batched)."""

    p: np.ndarray
    quat: np.ndarray
    v: np.ndarray  # world frame
    w: np.ndarray  # body frame
    q: np.ndarray
    q_dot: np.ndarray
    contacts: np.ndarray
    foot_p: np.ndarray  # world frame (..., 4, 3)
    theta_dot: np.ndarray
    prev_action: np.ndarray
    v_des: np.ndarray | float


def assemble_observation(snap: Snapshot, cpg: CpgState, t, cfg: ObservationConfig) -> np.ndarray:
    batch = np.asarray(snap.p).shape[:-1]
    parts = []
    R = None
    for name, width in cfg.layout():
        if name == "orientation":
            parts.append(quat_to_rpy(snap.quat))
        elif name == "linear_velocity":
            R = quat_to_rot(snap.quat) if R is None else R
            parts.append(np.einsum("...ji,...j->...i", R, snap.v))
        elif name == "angular_velocity":
            parts.append(np.asarray(snap.w))
        elif name == "joint_positions":
            parts.append(np.asarray(snap.q))
        elif name == "joint_velocities":
            parts.append(np.asarray(snap.q_dot))
        elif name == "contacts":
            parts.append(np.asarray(snap.contacts, dtype=float))
        elif name == "previous_action":
            parts.append(np.asarray(snap.prev_action, dtype=float))
        elif name == "cpg_states":
            parts.append(np.concatenate([cpg.r, cpg.r_dot, cpg.wrapped_theta(), snap.theta_dot], axis=-1))
        elif name == "desired_velocity":
            parts.append(np.broadcast_to(np.asarray(snap.v_des, dtype=float), batch)[..., None])
        elif name == "feet_gap":
            parts.append(feet_gap_distances(snap.foot_p[..., :2], t, cfg.horizon))
        elif name == "front_feet_gap":
            parts.append(feet_gap_distances(snap.foot_p[..., :2, :2], t, cfg.horizon))
        elif name == "hind_feet_gap":
            parts.append(feet_gap_distances(snap.foot_p[..., 2:, :2], t, cfg.horizon))
        elif name == "base_gap":
            parts.append(gap_distances(np.asarray(snap.p)[..., None, 0], t, cfg.horizon)[..., 0, :])
        elif name == "penetration":
            parts.append(penetration_flags(snap.foot_p, t).astype(float))
        elif name == "rays":
            parts.append(ray_scan(t, (snap.p, snap.quat), len(cfg.ray.angles_deg), cfg.ray))
        elif name == "heightmap":
            parts.append(heightmap_query(t, (snap.p, snap.quat), cfg.heightmap_rows, cfg.heightmap_cols,
                                         cfg.heightmap_spacing))
        if parts[-1].shape[-1] != width:
            raise ValueError(f"feature '{name}' produced width {parts[-1].shape[-1]}, expected {width}")
    return np.concatenate([np.broadcast_to(x, (*batch, x.shape[-1])) for x in parts], axis=-1)


_SCALES = {
    "orientation": (0.0, 1.0), "linear_velocity": (0.0, 1.0), "angular_velocity": (0.0, 0.25),
    "joint_positions": (0.0, 1.0), "joint_velocities": (0.0, 0.05), "contacts": (0.5, 2.0),
    "previous_action": (0.0, 1.0), "desired_velocity": (1.0, 1.0), "feet_gap": (0.5, 2.0),
    "front_feet_gap": (0.5, 2.0), "hind_feet_gap": (0.5, 2.0), "base_gap": (0.5, 2.0),
    "penetration": (0.5, 2.0), "rays": (0.5, 1.0), "heightmap": (0.0, 2.0),
}


def observation_scales(cfg: ObservationConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fixed (offset, scale) per entry; the network sees (obs - offset) * scale."""
    off, sc = [], []
    for name, width in cfg.layout():
        if name == "cpg_states":
            off += [2.0] * 4 + [0.0] * 4 + [np.pi] * 4 + [20.0] * 4
            sc += [0.5] * 4 + [0.05] * 4 + [1.0 / np.pi] * 4 + [0.05] * 4
        else:
            o, s = _SCALES[name]
            off += [o] * width
            sc += [s] * width
    return np.array(off), np.array(sc)
