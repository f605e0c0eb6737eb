"""Affine mapping from raw policy outputs in [-1, 1] to CPG drives.

Flat layout (8): mu FL..HR, omega FL..HR.
Gap layout (12): mu, omega, x_off, each FL..HR.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cpg import CpgDrives

MU_BOUNDS = (0.5, 4.0)
GAP_OMEGA_BOUNDS = (0.0, 40.0)
X_OFF_BOUNDS = (-0.07, 0.07)

# (omega_max1, omega_max2, v_min, v_max)
FREQUENCY_BOUNDS = {
    "walk": (23.0, 60.0, 0.3, 1.0),
    "trot": (30.0, 70.0, 0.9, 2.1),
}


def frequency_bound(v_des, gait: str = "trot"):
    """Upper frequency bound f(v_des), linear in the desired velocity."""
    w1, w2, v_min, v_max = FREQUENCY_BOUNDS[gait]
    return (w2 - w1) / (v_max - v_min) * (np.asarray(v_des, dtype=float) - v_min) + w1


@dataclass
class ActionSpec:
    scenario: str = "flat"
    flat_gait: str = "trot"  # which f(v_des) parameterization bounds omega
    mu_bounds: tuple[float, float] = MU_BOUNDS
    omega_bounds: tuple[float, float] = GAP_OMEGA_BOUNDS  # gap only; flat upper bound is f(v_des)
    x_off_bounds: tuple[float, float] = X_OFF_BOUNDS

    def __post_init__(self):
        if self.scenario not in ("flat", "gap"):
            raise ValueError(f"unknown action scenario '{self.scenario}'")
        if self.flat_gait not in FREQUENCY_BOUNDS:
            raise ValueError(f"unknown frequency-bound gait '{self.flat_gait}'")
        for name in ("mu_bounds", "omega_bounds", "x_off_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: lower bound must be below upper bound")
            setattr(self, name, (float(lo), float(hi)))

    @property
    def dim(self) -> int:
        return 8 if self.scenario == "flat" else 12

    @property
    def v_range(self) -> tuple[float, float]:
        _, _, lo, hi = FREQUENCY_BOUNDS[self.flat_gait]
        return lo, hi

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "flat_gait": self.flat_gait, "mu_bounds": list(self.mu_bounds),
                "omega_bounds": list(self.omega_bounds), "x_off_bounds": list(self.x_off_bounds)}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSpec":
        return cls(d["scenario"], d["flat_gait"], tuple(d["mu_bounds"]), tuple(d["omega_bounds"]),
                   tuple(d["x_off_bounds"]))


def _affine(raw, lo, hi):
    return lo + 0.5 * (raw + 1.0) * (hi - lo)


def action_to_drives(raw, spec: ActionSpec, v_des=None):
    """Map raw actions (..., dim) to (CpgDrives, x_off or None); raw is clamped first."""
    raw = np.clip(np.asarray(raw, dtype=float), -1.0, 1.0)
    if raw.shape[-1] != spec.dim:
        raise ValueError(f"expected action dim {spec.dim}, got {raw.shape[-1]}")
    mu = _affine(raw[..., 0:4], *spec.mu_bounds)
    if spec.scenario == "flat":
        if v_des is None:
            raise ValueError("flat actions need v_des")
        v_lo, v_hi = spec.v_range
        v = np.asarray(v_des, dtype=float)
        if np.any(v < v_lo - 1e-12) or np.any(v > v_hi + 1e-12):
            raise ValueError(f"v_des outside [{v_lo}, {v_hi}] for the {spec.flat_gait} frequency bound")
        upper = frequency_bound(v, spec.flat_gait)[..., None]
        omega = _affine(raw[..., 4:8], 0.0, upper)
        return CpgDrives(mu=mu, omega=omega), None
    omega = _affine(raw[..., 4:8], *spec.omega_bounds)
    x_off = _affine(raw[..., 8:12], *spec.x_off_bounds)
    return CpgDrives(mu=mu, omega=omega), x_off


def drives_to_action(mu, omega, spec: ActionSpec, v_des=None, x_off=None) -> np.ndarray:
    """Inverse of action_to_drives; handy for scripted controllers."""
    def inv(val, lo, hi):
        return 2.0 * (np.asarray(val, dtype=float) - lo) / (hi - lo) - 1.0

    mu = np.broadcast_to(mu, (4,)) if np.ndim(mu) == 0 else np.asarray(mu)
    omega = np.broadcast_to(omega, (4,)) if np.ndim(omega) == 0 else np.asarray(omega)
    parts = [inv(mu, *spec.mu_bounds)]
    if spec.scenario == "flat":
        parts.append(inv(omega, 0.0, frequency_bound(v_des, spec.flat_gait)))
    else:
        parts.append(inv(omega, *spec.omega_bounds))
        xo = np.zeros(4) if x_off is None else np.broadcast_to(x_off, (4,))
        parts.append(inv(xo, *spec.x_off_bounds))
    return np.concatenate(parts, axis=-1)
