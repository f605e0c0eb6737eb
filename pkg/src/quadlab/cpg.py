"""Rhythm generator: four amplitude-controlled phase oscillators, one per limb.

Limb order is fixed everywhere in the package as FL, FR, HL, HR. All arrays
may carry leading batch dimensions; the last axis always indexes the limb.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LIMBS = ("FL", "FR", "HL", "HR")
TWO_PI = 2.0 * np.pi

# unordered limb pairs reported by phase_differences, in this order
PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
PAIR_NAMES = tuple(f"{LIMBS[i]}-{LIMBS[j]}" for i, j in PAIRS)

# (A, B, C): phase of FL minus phase of FR, HL, HR respectively
GAIT_OFFSETS = {
    "walk": (np.pi, 1.5 * np.pi, 0.5 * np.pi),
    "trot": (np.pi, np.pi, 0.0),
    "bound": (0.0, np.pi, np.pi),
    "pronk": (0.0, 0.0, 0.0),
    "uncoupled": (0.0, 0.0, 0.0),
}


def _check_finite(**arrays):
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in CPG field '{name}'")


@dataclass
class CpgState:
    theta: np.ndarray
    r: np.ndarray
    r_dot: np.ndarray

    @classmethod
    def zeros(cls, batch: tuple[int, ...] = ()) -> "CpgState":
        shape = (*batch, 4)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def wrapped_theta(self) -> np.ndarray:
        """Phases mapped into [0, 2pi)."""
        th = np.mod(self.theta, TWO_PI)
        # mod can round up to exactly 2pi for tiny negative inputs
        return np.where(th >= TWO_PI, 0.0, th)

    def copy(self) -> "CpgState":
        return CpgState(self.theta.copy(), self.r.copy(), self.r_dot.copy())


@dataclass
class CpgDrives:
    mu: np.ndarray
    omega: np.ndarray


@dataclass
class CpgParams:
    alpha: float = 50.0
    dt: float = 1e-3

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class CouplingSpec:
    w: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    phi: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))


def coupling_matrix(a: float, b: float, c: float) -> np.ndarray:
    """Phase-bias matrix for FR/HL/HR offsets (a, b, c) relative to FL."""
    return np.array(
        [
            [0.0, -a, -b, -c],
            [a, 0.0, a - b, a - c],
            [b, b - a, 0.0, b - c],
            [c, c - a, c - b, 0.0],
        ]
    )


def build_coupling(gait: str, offsets: tuple[float, float, float] | None = None) -> CouplingSpec:
    """Coupling for a named gait template.

    ``offsets`` overrides the template's (A, B, C). ``uncoupled`` gives zero
    coupling strength; every other template couples all limb pairs with unit
    strength.
    """
    if gait not in GAIT_OFFSETS:
        raise ValueError(f"unknown gait '{gait}', expected one of {sorted(GAIT_OFFSETS)}")
    a, b, c = GAIT_OFFSETS[gait] if offsets is None else offsets
    phi = coupling_matrix(a, b, c)
    w = np.zeros((4, 4)) if gait == "uncoupled" else np.ones((4, 4)) - np.eye(4)
    return CouplingSpec(w=w, phi=phi)


def template_phases(gait: str, theta_fl: float = 0.0) -> np.ndarray:
    """Initial phases that sit exactly on a gait template's locked pattern."""
    a, b, c = GAIT_OFFSETS["trot" if gait == "uncoupled" else gait]
    return np.array([theta_fl, theta_fl - a, theta_fl - b, theta_fl - c])


def phase_velocity(state: CpgState, drives: CpgDrives, coupling: CouplingSpec) -> np.ndarray:
    """theta_dot_i = omega_i + sum_j r_j w_ij sin(theta_j - theta_i - phi_ij)."""
    th = state.theta
    diff = th[..., None, :] - th[..., :, None] - coupling.phi
    return drives.omega + np.sum(state.r[..., None, :] * coupling.w * np.sin(diff), axis=-1)


def step_cpg(state: CpgState, drives: CpgDrives, coupling: CouplingSpec, params: CpgParams) -> CpgState:
    """Advance the oscillators by one dt.

    The amplitude equation is linear and critically damped, so (r, r_dot) is
    propagated with its exact zero-order-hold solution over the step. Phases
    then take a semi-implicit Euler step that sees the updated amplitudes.
    """
    _check_finite(theta=state.theta, r=state.r, r_dot=state.r_dot, mu=drives.mu, omega=drives.omega)
    if params.dt > 2.0 / params.alpha:
        raise ValueError(f"dt={params.dt} exceeds the stability bound 2/alpha={2.0 / params.alpha}")
    k = 0.5 * params.alpha
    dt = params.dt
    decay = np.exp(-k * dt)
    e0 = state.r - drives.mu
    c = state.r_dot + k * e0
    r = drives.mu + (e0 + c * dt) * decay
    r_dot = (state.r_dot - k * c * dt) * decay
    moved = CpgState(state.theta, r, r_dot)
    theta_dot = phase_velocity(moved, drives, coupling)
    return CpgState(theta=state.theta + dt * theta_dot, r=r, r_dot=r_dot)


def wrap_pi(x):
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)


def phase_differences(state: CpgState) -> np.ndarray:
    """theta_i - theta_j wrapped to (-pi, pi] for the pairs in ``PAIRS``."""
    th = state.theta
    return np.stack([wrap_pi(th[..., i] - th[..., j]) for i, j in PAIRS], axis=-1)


def amplitude_closed_form(t, mu: float, r0: float, alpha: float) -> np.ndarray:
    """r(t) for the uncoupled amplitude ODE started at rest from r0."""
    k = 0.5 * alpha
    t = np.asarray(t, dtype=float)
    return mu + (r0 - mu) * (1.0 + k * t) * np.exp(-k * t)
