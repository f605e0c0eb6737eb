"""Locomotion metrics computed from episode logs."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .reward import F_C_MAX


class MetricError(ValueError):
    pass


@dataclass
class StrideEvents:
    times: list[np.ndarray]  # per limb, touchdown times
    x: list[np.ndarray]  # per limb, touchdown foot x

    def durations(self) -> np.ndarray:
        return np.concatenate([np.diff(t) for t in self.times]) if self.times else np.zeros(0)

    def lengths(self) -> np.ndarray:
        return np.concatenate([np.diff(x) for x in self.x]) if self.x else np.zeros(0)

    def window(self, t0: float, t1: float) -> "StrideEvents":
        """Touchdowns inside [t0, t1), so strides are whole strides within the window."""
        keep = [(t >= t0) & (t < t1) for t in self.times]
        return StrideEvents([t[k] for t, k in zip(self.times, keep)], [x[k] for x, k in zip(self.x, keep)])


def detect_strides(contacts, foot_x, times=None, debounce: float = 0.01, dt: float = 0.01) -> StrideEvents:
    """Touchdowns are false->true contact transitions that stay true for at least ``debounce`` seconds.

    ``contacts`` and ``foot_x`` are (T, limbs). The hold time of a contact run
    is measured from its first sample to the first sample where contact is
    lost (or one sample period past the end of the log).
    """
    c = np.asarray(contacts, dtype=bool)
    fx = np.asarray(foot_x, dtype=float)
    if c.ndim == 1:
        c, fx = c[:, None], fx[:, None]
    n = c.shape[0]
    t = np.arange(1, n + 1) * dt if times is None else np.asarray(times, dtype=float)
    t_end = t[-1] + (t[-1] - t[-2] if n > 1 else dt)
    out_t, out_x = [], []
    for leg in range(c.shape[1]):
        col = c[:, leg]
        rises = np.flatnonzero(col[1:] & ~col[:-1]) + 1
        falls = np.flatnonzero(~col[1:] & col[:-1]) + 1
        tt, xx = [], []
        for i in rises:
            j = falls[falls > i]
            stop = t[j[0]] if j.size else t_end
            if stop - t[i] >= debounce - 1e-12:
                tt.append(t[i])
                xx.append(fx[i, leg])
        out_t.append(np.array(tt))
        out_x.append(np.array(xx))
    return StrideEvents(out_t, out_x)


def coefficient_of_variation(samples) -> float:
    """Population standard deviation over mean."""
    s = np.asarray(samples, dtype=float)
    if s.size < 2:
        raise MetricError("CV needs at least two samples")
    m = s.mean()
    if m == 0:
        raise MetricError("CV undefined for zero mean")
    return float(s.std() / m)


def mean_velocity(log) -> float:
    t = log.time
    if len(t) < 2:
        raise MetricError("need at least two samples for a velocity")
    return float((log["px"][-1] - log["px"][0]) / (t[-1] - t[0]))


def mechanical_power(log) -> np.ndarray:
    return np.sum(np.abs(log.joints("tau_") * log.joints("qd_")), axis=1)


def cost_of_transport(log, mass: float, g: float = 9.81) -> float:
    v = mean_velocity(log)
    if v <= 0:
        raise MetricError(f"CoT undefined for mean forward velocity {v:.4g} <= 0")
    return float(mechanical_power(log).mean() / (mass * g * v))


def mean_abs_angular_velocity(log) -> float:
    w = np.asarray(log.w if hasattr(log, "w") else log, dtype=float)
    return float(np.abs(w).sum() / (3 * len(w)))


def omega0(dz: float, g: float = 9.81) -> float:
    if dz <= 0:
        raise MetricError("LIPM height must be positive")
    return float(np.sqrt(g / dz))


def dcm(r_com, v_com, omega0: float) -> np.ndarray:
    if omega0 <= 0:
        raise MetricError("omega0 must be positive")
    return np.asarray(r_com, dtype=float) + np.asarray(v_com, dtype=float) / omega0


def dcm_offset(xi, cop) -> np.ndarray:
    return np.asarray(xi, dtype=float) - np.asarray(cop, dtype=float)


def cop_estimate(normal_force, foot_xy) -> np.ndarray:
    """Normal-force-weighted mean of foot positions; raises when nothing is loaded."""
    f = np.asarray(normal_force, dtype=float)
    total = f.sum()
    if not total > 0:
        raise MetricError("no stance feet: CoP undefined")
    return (f[:, None] * np.asarray(foot_xy, dtype=float)).sum(0) / total


def lipm_closed_form(x0, v0, cop, omega0: float, t):
    """Exact LIPM state for a constant CoP: returns (x(t), xi(t)).

    xi(t) = (xi0 - cop) e^{wt} + cop. The CoM is
    x(t) = cop + (xi0 - cop)/2 e^{wt} + (x0 - cop - (xi0 - cop)/2) e^{-wt},
    which reduces to (x0 - xi0) e^{-wt} + xi0 when xi0 = cop.
    """
    if omega0 <= 0:
        raise MetricError("omega0 must be positive")
    x0, v0, cop = (np.asarray(a, dtype=float) for a in (x0, v0, cop))
    t = np.asarray(t, dtype=float)
    xi0 = x0 + v0 / omega0
    b = xi0 - cop
    tt = t[..., None] if x0.ndim and t.ndim else t
    ep = np.exp(omega0 * tt)
    em = np.exp(-omega0 * tt)
    x = cop + 0.5 * b * ep + (x0 - cop - 0.5 * b) * em
    xi = b * ep + cop
    return x, xi


def froude(v: float, h: float = 0.30, g: float = 9.81) -> float:
    if h <= 0:
        raise MetricError("nominal height must be positive")
    return float(v * v / (g * h))


def fit_quadratic(points) -> np.ndarray:
    """Least-squares (c0, c1, c2) for CoT = c0 + c1 v + c2 v^2."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or np.unique(pts[:, 0]).size < 3:
        raise MetricError("quadratic fit needs at least three distinct velocities")
    A = np.vander(pts[:, 0], 3, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(A, pts[:, 1], rcond=None)
    if rank < 3:
        raise MetricError("degenerate quadratic fit")
    return coef


def eots(fit_walk, fit_trot, v_range=(0.0, np.inf)) -> float:
    """Speed where the walk and trot CoT fits cross with trot becoming cheaper."""
    d = np.asarray(fit_walk, dtype=float) - np.asarray(fit_trot, dtype=float)
    scale = max(np.abs(fit_walk).max(), np.abs(fit_trot).max(), 1.0)
    if np.all(np.abs(d) <= 1e-12 * scale):
        raise MetricError("identical fits: infinitely many intersections")
    lo, hi = v_range
    roots = np.roots(d[::-1]) if abs(d[2]) > 1e-15 * scale else (
        np.array([-d[0] / d[1]]) if abs(d[1]) > 1e-15 * scale else np.array([]))
    real = [float(r.real) for r in np.atleast_1d(roots) if abs(complex(r).imag) < 1e-12 and lo <= r.real <= hi]
    if not real:
        raise MetricError("no intersection of the CoT fits in the velocity range")
    if len(real) == 1:
        return real[0]
    slope = [d[1] + 2 * d[2] * r for r in real]
    rising = [r for r, s in zip(real, slope) if s > 0]
    return rising[0] if rising else real[0]


def excess_peak_force(log, f_c_max: float = F_C_MAX) -> float:
    """Mean over samples of the largest per-foot force excess above f_c_max."""
    f = log.peak_forces
    return float(np.maximum(0.0, f - f_c_max).max(axis=1).mean())


@dataclass
class MetricsReport:
    cot: float | None
    cv_stride_duration: float | None
    cv_stride_length: float | None
    mean_abs_angular_velocity: float
    mean_abs_lateral_dcm_offset: float | None
    mean_x_dcm_offset: float | None
    peak_force: float
    excess_peak_force: float
    success_rate: float
    froude: float
    mean_velocity: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def dcm_offsets(log, g: float = 9.81, window: float = 0.5) -> np.ndarray:
    """(T, 2) DCM offsets; rows without stance feet are NaN."""
    t = log.time
    p = log.p
    v = log.v
    fn = log.normal_forces
    feet = log.foot_positions[..., :2]
    out = np.full((len(t), 2), np.nan)
    csum = np.concatenate([[0.0], np.cumsum(p[:, 2])])
    dt = t[1] - t[0] if len(t) > 1 else 0.01
    k = max(1, int(round(window / dt)))
    for i in range(len(t)):
        j0 = max(0, i + 1 - k)
        dz = (csum[i + 1] - csum[j0]) / (i + 1 - j0)
        if fn[i].sum() <= 0 or dz <= 0:
            continue
        xi = dcm(p[i, :2], v[i, :2], omega0(dz, g))
        out[i] = dcm_offset(xi, cop_estimate(fn[i], feet[i]))
    return out


def success_rate(log) -> float:
    if log.terrain.kind == "gaps":
        from .episode import gap_outcomes

        outcomes = gap_outcomes(log)
        return float(np.mean(outcomes)) if outcomes else 0.0
    return 0.0 if log.terminal_reason in ("fall", "diverged") else 1.0


def stride_cvs(events: StrideEvents) -> tuple[float | None, float | None]:
    def safe(s):
        try:
            return coefficient_of_variation(s)
        except MetricError:
            return None
    return safe(events.durations()), safe(events.lengths())


def compute_report(log, mass: float | None = None, g: float | None = None, h: float | None = None) -> MetricsReport:
    mass = mass if mass is not None else log.meta.get("mass", 12.0)
    g = g if g is not None else log.meta.get("g", 9.81)
    h = h if h is not None else log.meta.get("h", 0.30)
    v = mean_velocity(log)
    try:
        cot = cost_of_transport(log, mass, g)
    except MetricError:
        cot = None
    ev = detect_strides(log.contacts, log.foot_positions[..., 0], log.time)
    cv_d, cv_l = stride_cvs(ev)
    off = dcm_offsets(log, g)
    ok = ~np.isnan(off[:, 0])
    return MetricsReport(
        cot=cot,
        cv_stride_duration=cv_d,
        cv_stride_length=cv_l,
        mean_abs_angular_velocity=mean_abs_angular_velocity(log.w),
        mean_abs_lateral_dcm_offset=float(np.abs(off[ok, 1]).mean()) if ok.any() else None,
        mean_x_dcm_offset=float(off[ok, 0].mean()) if ok.any() else None,
        peak_force=float(log.peak_forces.max()),
        excess_peak_force=excess_peak_force(log),
        success_rate=success_rate(log),
        froude=froude(max(v, 0.0), h, g),
        mean_velocity=v,
    )


def segment_metrics(log, t0: float, t1: float, mass: float | None = None, g: float | None = None) -> dict:
    """Stride CVs and CoT restricted to the time window [t0, t1)."""
    from .episode import EpisodeLog

    mass = mass if mass is not None else log.meta.get("mass", 12.0)
    g = g if g is not None else log.meta.get("g", 9.81)
    sel = (log.time >= t0) & (log.time < t1)
    sub = EpisodeLog({k: v[sel] for k, v in log.data.items()}, dict(log.meta))
    ev = detect_strides(log.contacts, log.foot_positions[..., 0], log.time).window(t0, t1)
    cv_d, cv_l = stride_cvs(ev)
    return {"cv_stride_duration": cv_d, "cv_stride_length": cv_l, "cot": cost_of_transport(sub, mass, g),
            "mean_velocity": mean_velocity(sub), "strides": int(ev.durations().size)}

