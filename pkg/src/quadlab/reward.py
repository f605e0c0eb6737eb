"""Per-control-cycle rewards for flat locomotion (r1) and gap crossing (r2)."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

LEVELS = ("low", "medium", "high")
VIABILITY = {"low": 0.1, "medium": 4.0, "high": 8.0}
PEAK_FORCE = {"low": -0.0001, "medium": -0.001, "high": -0.01}
POWER = {"low": -0.00001, "medium": -0.0001, "high": -0.001}
ORIENTATION_GAP = -0.25
F_C_MAX = 180.0
D_MAX = 0.01  # 1 m/s cap times the 10 ms control period


@dataclass(frozen=True)
class RewardWeightsFlat:
    a1: float = 0.03
    a2: float = 0.03
    a3: float = -0.00001
    a4: float = -0.02


@dataclass(frozen=True)
class RewardWeightsGap:
    a1: float = VIABILITY["high"]
    a2: float = PEAK_FORCE["low"]
    a3: float = POWER["low"]
    a4: float = ORIENTATION_GAP
    f_c_max: float = F_C_MAX
    label: str = ""


@dataclass
class TransitionData:
    """One control cycle; arrays may carry a leading batch axis."""

    f_x: np.ndarray | float
    v_des: np.ndarray | float
    v_real: np.ndarray | float
    tau: np.ndarray
    q_dot_now: np.ndarray
    q_dot_prev: np.ndarray
    orientation: np.ndarray  # roll, pitch, yaw relative to level
    normal_forces: np.ndarray
    d_max: float = D_MAX


def _common(td: TransitionData):
    progress = np.minimum(np.asarray(td.f_x, dtype=float), td.d_max)
    power = np.abs(np.sum(np.asarray(td.tau) * (np.asarray(td.q_dot_now) - np.asarray(td.q_dot_prev)), axis=-1))
    orient = np.linalg.norm(np.asarray(td.orientation, dtype=float), axis=-1)
    return progress, power, orient


def reward_flat(td: TransitionData, w: RewardWeightsFlat = RewardWeightsFlat()):
    """r1 and its breakdown (progress, tracking, power, orientation)."""
    progress, power, orient = _common(td)
    dv = np.asarray(td.v_des, dtype=float) - np.asarray(td.v_real, dtype=float)
    terms = {
        "progress": w.a1 * progress,
        "tracking": w.a2 * np.exp(-(dv * dv) / 0.25),
        "power": w.a3 * power,
        "orientation": w.a4 * orient,
    }
    total = terms["progress"] + terms["tracking"] + terms["power"] + terms["orientation"]
    return total, terms


def excess_force(normal_forces, f_c_max: float = F_C_MAX):
    return np.sum(np.maximum(0.0, np.asarray(normal_forces, dtype=float) - f_c_max), axis=-1)


def reward_gap(td: TransitionData, w: RewardWeightsGap = RewardWeightsGap()):
    """r2 and its breakdown (progress, peak_force, power, orientation)."""
    progress, power, orient = _common(td)
    terms = {
        "progress": w.a1 * progress,
        "peak_force": w.a2 * excess_force(td.normal_forces, w.f_c_max),
        "power": w.a3 * power,
        "orientation": w.a4 * orient,
    }
    total = terms["progress"] + terms["peak_force"] + terms["power"] + terms["orientation"]
    return total, terms


def case_index(viability: str, cot: str, force: str) -> int:
    """Case number: viability is the slowest-varying level, peak force the fastest."""
    return 9 * LEVELS.index(viability) + 3 * LEVELS.index(cot) + LEVELS.index(force) + 1


def weight_grid() -> dict[int, RewardWeightsGap]:
    """All 27 (viability, CoT, peak force) level combinations keyed by case number.

    Case 1 is (low, low, low), case 12 (medium, low, high), case 19
    (high, low, low) and case 23 (high, medium, medium).
    """
    grid = {}
    for v, c, f in itertools.product(LEVELS, LEVELS, LEVELS):
        idx = case_index(v, c, f)
        grid[idx] = RewardWeightsGap(a1=VIABILITY[v], a2=PEAK_FORCE[f], a3=POWER[c], label=f"{v}-{c}-{f}")
    return dict(sorted(grid.items()))


def grid_case(index: int) -> RewardWeightsGap:
    grid = weight_grid()
    if index not in grid:
        raise ValueError(f"reward grid case must be in 1..27, got {index}")
    return grid[index]
