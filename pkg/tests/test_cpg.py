import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadlab.cpg import (
    GAIT_OFFSETS, PAIRS, CpgDrives, CpgParams, CpgState, amplitude_closed_form, build_coupling,
    coupling_matrix, phase_differences, phase_velocity, step_cpg, template_phases, wrap_pi,
)


def run(state, drives, coupling, params, n):
    for _ in range(n):
        state = step_cpg(state, drives, coupling, params)
    return state


def reference_rk4(theta, r, rd, mu, omega, w, phi, alpha, t_end, dt=1e-5):
    """Plain RK4 on the full oscillator ODE; independent of step_cpg."""
    def f(y):
        th, rr, rdd = y[:4], y[4:8], y[8:]
        dth = omega + np.array([sum(rr[j] * w[i, j] * np.sin(th[j] - th[i] - phi[i, j]) for j in range(4))
                                for i in range(4)])
        return np.concatenate([dth, rdd, alpha * (alpha / 4 * (mu - rr) - rdd)])

    y = np.concatenate([theta, r, rd]).astype(float)
    for _ in range(int(round(t_end / dt))):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def test_amplitude_matches_closed_form_from_rest():
    p = CpgParams(alpha=50.0, dt=1e-3)
    s = CpgState.zeros()
    d = CpgDrives(np.ones(4), np.zeros(4))
    s = run(s, d, build_coupling("uncoupled"), p, 1000)
    expected = 1.0 - (1.0 + 25.0) * np.exp(-25.0)
    assert np.allclose(s.r, expected, atol=1e-3)


def test_uncoupled_phase_advance_is_exact():
    p = CpgParams()
    s = CpgState(np.array([0.1, 0.2, 0.3, 0.4]), np.full(4, 0.7), np.zeros(4))
    d = CpgDrives(np.ones(4), np.full(4, 2 * np.pi))
    nxt = step_cpg(s, d, build_coupling("uncoupled"), p)
    assert np.allclose(nxt.theta - s.theta, 2 * np.pi * p.dt, rtol=0, atol=1e-15)


def test_two_oscillators_lock_to_anti_phase():
    # FL/FR pair only, with the rest decoupled
    w = np.zeros((4, 4))
    w[0, 1] = w[1, 0] = 1.0
    phi = np.zeros((4, 4))
    phi[0, 1], phi[1, 0] = -np.pi, np.pi
    from quadlab.cpg import CouplingSpec

    cs = CouplingSpec(w, phi)
    s = CpgState(np.array([0.0, 0.5, 0.0, 0.0]), np.ones(4), np.zeros(4))
    d = CpgDrives(np.ones(4), np.full(4, 6.0))
    s = run(s, d, cs, CpgParams(), 5000)
    assert abs(abs(wrap_pi(s.theta[0] - s.theta[1])) - np.pi) < 1e-2


def test_step_agrees_with_fine_reference_integrator():
    rng = np.random.default_rng(3)
    cs = build_coupling("walk")
    th0 = rng.uniform(0, 2 * np.pi, 4)
    mu = rng.uniform(0.5, 2.0, 4)
    om = rng.uniform(5, 15, 4)
    s = run(CpgState(th0, np.full(4, 0.3), np.zeros(4)), CpgDrives(mu, om), cs, CpgParams(), 200)
    ref = reference_rk4(th0, np.full(4, 0.3), np.zeros(4), mu, om, cs.w, cs.phi, 50.0, 0.2)
    assert np.allclose(s.r, ref[4:8], atol=1e-9)
    assert np.allclose(s.theta, ref[:4], atol=5e-3)


def test_build_coupling_templates():
    pronk = build_coupling("pronk")
    assert np.all(pronk.phi == 0)
    assert np.array_equal(pronk.w, np.ones((4, 4)) - np.eye(4))
    trot = build_coupling("trot")
    assert trot.phi[0, 1] == pytest.approx(-np.pi)
    assert trot.phi[2, 3] == pytest.approx(np.pi)
    assert np.all(build_coupling("uncoupled").w == 0)
    for gait in ("walk", "trot", "bound", "pronk"):
        phi = build_coupling(gait).phi
        assert np.all(np.diag(phi) == 0)
        assert np.allclose(wrap_pi(phi + phi.T), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        build_coupling("gallop")


def test_coupling_matrix_entries_are_relative_offsets():
    a, b, c = 0.3, 1.1, -0.4
    phi = coupling_matrix(a, b, c)
    offs = np.array([0.0, a, b, c])
    for i in range(4):
        for j in range(4):
            assert phi[i, j] == pytest.approx(offs[i] - offs[j])


def test_phase_differences_wrap_convention():
    s = CpgState(np.array([0.0, np.pi, np.pi, 0.0]), np.zeros(4), np.zeros(4))
    d = phase_differences(s)
    assert d[PAIRS.index((0, 1))] == pytest.approx(np.pi)
    assert d[PAIRS.index((0, 3))] == 0.0
    assert np.all(phase_differences(CpgState(np.full(4, 1.3), np.zeros(4), np.zeros(4))) == 0)


@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4))
def test_phase_differences_match_brute_force(th):
    th = np.array(th)
    d = phase_differences(CpgState(th, np.zeros(4), np.zeros(4)))
    for k, (i, j) in enumerate(PAIRS):
        x = (th[i] - th[j]) % (2 * np.pi)
        if x > np.pi:
            x -= 2 * np.pi
        assert -np.pi < d[k] <= np.pi
        assert abs(np.angle(np.exp(1j * (d[k] - x)))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(0.0, 4.0))
def test_amplitude_contracts_toward_mu(mu, r0):
    p = CpgParams()
    s = CpgState(np.zeros(4), np.full(4, r0), np.zeros(4))
    d = CpgDrives(np.full(4, mu), np.zeros(4))
    t = 0.0
    for t_check in (0.1, 0.5, 1.0):
        s = run(s, d, build_coupling("uncoupled"), p, int(round((t_check - t) / p.dt)))
        t = t_check
        bound = abs(r0 - mu) * (1 + 25 * t) * np.exp(-25 * t) + 1e-3
        assert np.all(np.abs(s.r - mu) <= bound)
        assert np.all(s.r >= 0)


def test_closed_form_helper_matches_stepper():
    p = CpgParams()
    s = CpgState(np.zeros(4), np.full(4, 3.0), np.zeros(4))
    s = run(s, CpgDrives(np.full(4, 1.0), np.zeros(4)), build_coupling("uncoupled"), p, 300)
    assert np.allclose(s.r, amplitude_closed_form(0.3, 1.0, 3.0, 50.0), atol=1e-12)


def test_frequency_fidelity_uncoupled():
    s = CpgState(np.random.default_rng(0).uniform(0, 6, 4), np.ones(4), np.zeros(4))
    d = CpgDrives(np.ones(4), np.array([3.0, 7.0, 11.0, 13.0]))
    th0 = s.theta.copy()
    s = run(s, d, build_coupling("uncoupled"), CpgParams(), 700)
    assert np.allclose((s.theta - th0) / 0.7, d.omega, atol=1e-9)


def test_phase_velocity_uncoupled_equals_omega():
    s = CpgState(np.arange(4.0), np.ones(4), np.zeros(4))
    d = CpgDrives(np.ones(4), np.array([1.0, 2.0, 3.0, 4.0]))
    assert np.array_equal(phase_velocity(s, d, build_coupling("uncoupled")), d.omega)


def test_rejects_non_finite_and_unstable_dt():
    s = CpgState.zeros()
    d = CpgDrives(np.ones(4), np.zeros(4))
    s.r[2] = np.nan
    with pytest.raises(ValueError, match="'r'"):
        step_cpg(s, d, build_coupling("trot"), CpgParams())
    with pytest.raises(ValueError, match="stability"):
        step_cpg(CpgState.zeros(), d, build_coupling("trot"), CpgParams(alpha=50, dt=0.05))
    with pytest.raises(ValueError):
        CpgParams(alpha=0)


def test_deterministic_and_batched():
    rng = np.random.default_rng(1)
    th = rng.uniform(0, 6, (5, 4))
    s = CpgState(th, rng.uniform(0, 2, (5, 4)), np.zeros((5, 4)))
    d = CpgDrives(rng.uniform(0.5, 4, (5, 4)), rng.uniform(0, 40, (5, 4)))
    cs = build_coupling("bound")
    a = step_cpg(s, d, cs, CpgParams())
    b = step_cpg(s, d, cs, CpgParams())
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.r, b.r)
    one = step_cpg(CpgState(th[2], s.r[2], s.r_dot[2]), CpgDrives(d.mu[2], d.omega[2]), cs, CpgParams())
    assert np.allclose(one.theta, a.theta[2], atol=1e-14)


def test_wrapped_theta_range_and_templates():
    s = CpgState(np.array([-1e-17, 2 * np.pi, -7.0, 20.0]), np.zeros(4), np.zeros(4))
    w = s.wrapped_theta()
    assert np.all((w >= 0) & (w < 2 * np.pi))
    for gait, (a, b, c) in GAIT_OFFSETS.items():
        if gait == "uncoupled":
            continue
        th = template_phases(gait, 0.4)
        assert np.allclose(wrap_pi(th[0] - th[1:] - np.array([a, b, c])), 0.0, atol=1e-12)
