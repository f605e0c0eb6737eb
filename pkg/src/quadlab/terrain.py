"""Flat and gap terrains. Height depends on x only.

A gap is the open interval (start, start + width); its edges are support.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Terrain:
    kind: str = "flat"
    gaps: list[tuple[float, float]] = field(default_factory=list)  # (start_x, width)
    beam_width: float = 0.14
    gap_floor_z: float = -1.0

    def __post_init__(self):
        if self.kind not in ("flat", "gaps"):
            raise ValueError(f"unknown terrain kind '{self.kind}'")
        self.gaps = [(float(s), float(w)) for s, w in self.gaps]
        end = -np.inf
        for s, w in self.gaps:
            if w <= 0:
                raise ValueError("gap widths must be positive")
            if s < end:
                raise ValueError("gaps must be ascending and non-overlapping")
            end = s + w

    @property
    def starts(self) -> np.ndarray:
        return np.array([s for s, _ in self.gaps], dtype=float)

    @property
    def ends(self) -> np.ndarray:
        return np.array([s + w for s, w in self.gaps], dtype=float)

    def edges(self, max_gaps: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(starts, ends) padded with +inf to ``max_gaps`` entries."""
        n = len(self.gaps) if max_gaps is None else max_gaps
        starts = np.full(n, np.inf)
        ends = np.full(n, np.inf)
        k = len(self.gaps)
        if k > n:
            raise ValueError("terrain has more gaps than the padding allows")
        starts[:k] = self.starts
        ends[:k] = self.ends
        return starts, ends

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gaps": [list(g) for g in self.gaps],
            "beam_width": self.beam_width,
            "gap_floor_z": self.gap_floor_z,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Terrain":
        return cls(kind=d["kind"], gaps=[tuple(g) for g in d["gaps"]],
                   beam_width=d["beam_width"], gap_floor_z=d["gap_floor_z"])


def gap_mask(x, starts, ends) -> np.ndarray:
    """Boolean (..., K, G): x[..., k] strictly inside gap g.

    ``x`` is (..., K) and ``starts``/``ends`` are (..., G) with matching
    leading dimensions (or plain (G,) for a single terrain).
    """
    x = np.asarray(x, dtype=float)[..., :, None]
    return (x > np.asarray(starts)[..., None, :]) & (x < np.asarray(ends)[..., None, :])


def height_from_edges(x, starts, ends, gap_floor_z: float = -1.0) -> np.ndarray:
    inside = gap_mask(x, starts, ends).any(axis=-1)
    return np.where(inside, gap_floor_z, 0.0)


def terrain_height(t: Terrain, x, y=None) -> np.ndarray | float:
    """Ground height under (x, y); 0 on support, gap_floor_z inside a gap."""
    del y  # terrain is y-invariant
    x_arr = np.asarray(x, dtype=float)
    if t.kind == "flat" or not t.gaps:
        h = np.zeros_like(x_arr)
    else:
        flat = x_arr.reshape(-1)
        h = height_from_edges(flat, t.starts, t.ends, t.gap_floor_z).reshape(x_arr.shape)
    return float(h) if h.ndim == 0 else h


def generate_gaps(rng: np.random.Generator, count: int, first_start: float = 0.6,
                  width_range: tuple[float, float] = (0.14, 0.20), beam_width: float = 0.14,
                  gap_floor_z: float = -1.0) -> Terrain:
    """Consecutive gaps with uniformly random widths separated by fixed beams."""
    lo, hi = width_range
    if not 0 < lo <= hi:
        raise ValueError("invalid gap width range")
    gaps = []
    x = first_start
    for _ in range(count):
        w = float(rng.uniform(lo, hi))
        gaps.append((x, w))
        x += w + beam_width
    return Terrain(kind="gaps", gaps=gaps, beam_width=beam_width, gap_floor_z=gap_floor_z)
