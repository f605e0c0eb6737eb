import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadlab.cpg import CpgState
from quadlab.sensing import (
    CASES, FEATURES, ObservationConfig, RayConfig, Snapshot, assemble_observation, feet_gap_distances,
    gap_distances, heightmap_query, observation_scales, penetration_flags, preset, preset_coupling, ray_scan,
)
from quadlab.terrain import Terrain, terrain_height
from quadlab.world import rpy_to_quat

GAP = Terrain("gaps", [(0.60, 0.16)])
FLAT = Terrain()


def feet_at(xs):
    return np.column_stack([xs, np.zeros(len(xs))])


def test_feet_gap_examples():
    d = feet_gap_distances(feet_at([0.5, 0.70, 0.0, 0.9]), GAP).reshape(4, 2)
    assert np.allclose(d[0], (0.10, 0.26))
    assert np.allclose(d[1], (0.0, 0.06))
    # past the last gap and with no gap at all: saturated at the horizon
    assert np.allclose(d[3], (1.0, 1.0))
    assert np.allclose(feet_gap_distances(feet_at([0.5] * 4), FLAT), 1.0)
    assert feet_gap_distances(feet_at([0.5] * 4), FLAT).shape == (8,)


def test_gap_distances_saturate_and_pick_next_gap():
    t = Terrain("gaps", [(0.6, 0.16), (1.5, 0.2)])
    d = gap_distances(np.array([-3.0, 0.8, 1.6]), t)
    assert np.allclose(d[0], (1.0, 1.0))
    assert np.allclose(d[1], (0.7, 0.9))
    assert np.allclose(d[2], (0.0, 0.1))
    assert np.allclose(gap_distances(np.array([0.8]), t, horizon=2.0), [[0.7, 0.9]])


def test_penetration_flags():
    feet = np.array([[0.7, 0, -0.01], [0.7, 0, 0.01], [0.5, 0, -0.01], [0.75, 0, -0.5]])
    assert np.array_equal(penetration_flags(feet, GAP), [True, False, False, True])
    assert not penetration_flags(feet, FLAT).any()


def one_ray(t, z, deg, pitch=0.0, x=0.0):
    cfg = RayConfig(angles_deg=(deg,), origin=(0.0, 0.0, 0.0))
    return ray_scan(t, (np.array([x, 0.0, z]), rpy_to_quat(np.array([0.0, pitch, 0.0]))), 1, cfg)[0]


def test_ray_examples():
    assert one_ray(FLAT, 0.3, 45.0) == pytest.approx(0.3 * np.sqrt(2))
    assert one_ray(FLAT, 0.3, 0.0) == 2.0
    assert one_ray(FLAT, 0.3, 5.0) == 2.0
    assert one_ray(FLAT, 0.3, 10.0) == pytest.approx(0.3 / np.sin(np.deg2rad(10.0)))
    # nose-down pitch of 45 deg turns a horizontal ray into a 45 deg one
    assert one_ray(FLAT, 0.3, 0.0, pitch=np.pi / 4) == pytest.approx(0.3 * np.sqrt(2))


def march(t, origin, direction, far=2.0, ds=2e-5):
    """Brute-force ray march against the terrain profile."""
    for s in np.arange(0.0, far, ds):
        x, _, z = origin + s * direction
        if z <= terrain_height(t, x):
            return s
    return far


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 0.4), st.floats(15.0, 60.0), st.floats(-0.4, 0.9))
def test_ray_matches_brute_force_march(z, deg, x):
    d = one_ray(GAP, z, deg, x=x)
    a = np.deg2rad(deg)
    ref = march(GAP, np.array([x, 0.0, z]), np.array([np.cos(a), 0.0, -np.sin(a)]))
    assert d == pytest.approx(ref, abs=1e-4)


def test_heightmap_flat_and_cells():
    pose = (np.array([0.3, 0.0, 0.3]), rpy_to_quat(np.zeros(3)))
    assert np.all(heightmap_query(FLAT, pose) == 0)
    yaw = 0.3
    pose = (np.array([0.25, 0.1, 0.3]), rpy_to_quat(np.array([0.0, 0.0, yaw])))
    h = heightmap_query(GAP, pose, rows=10, cols=6, spacing=0.05)
    assert h.shape == (60,)
    k = 0
    for i in range(10):
        for j in range(6):
            f, l = 0.18 + 0.05 * i, 0.05 * (j - 2.5)
            x = 0.25 + f * np.cos(yaw) - l * np.sin(yaw)
            assert h[k] == terrain_height(GAP, x)
            k += 1
    assert (h == -1.0).any() and (h == 0.0).any()


def test_blind_length_and_case_widths():
    for a in (4, 8, 12):
        cfg = preset("case-10-blind", action_dim=a)
        assert cfg.dim == 3 + 3 + 3 + 12 + 12 + 4 + a + 16 + 1
    assert preset("case-01-feet-dist").dim - preset("case-07-no-vestibular").dim == 9
    assert preset("case-01-feet-dist").dim - preset("case-04-no-contacts").dim == 4
    assert preset("case-01-feet-dist").dim - preset("case-05-no-proprio").dim == 24


def test_presets_are_distinct():
    assert len(CASES) == 13
    seen = {(preset(c).enabled(), preset_coupling(c)) for c in CASES}
    assert len(seen) == 13
    with pytest.raises(ValueError):
        preset("case-99")


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        ObservationConfig(**{f: False for f in FEATURES})
    cfg = preset("case-03-lidar")
    assert ObservationConfig.from_dict(cfg.to_dict()) == cfg


def make_snapshot(batch=(), rng=None):
    rng = rng or np.random.default_rng(0)
    return Snapshot(
        p=rng.normal(size=(*batch, 3)) + [0.4, 0, 0.3],
        quat=rpy_to_quat(rng.normal(scale=0.1, size=(*batch, 3))),
        v=rng.normal(size=(*batch, 3)), w=rng.normal(size=(*batch, 3)),
        q=rng.normal(size=(*batch, 12)), q_dot=rng.normal(size=(*batch, 12)),
        contacts=rng.random((*batch, 4)) > 0.5, foot_p=rng.normal(size=(*batch, 4, 3)) * 0.2 + [0.5, 0, 0],
        theta_dot=rng.normal(size=(*batch, 4)), prev_action=rng.uniform(-1, 1, (*batch, 8)), v_des=0.7,
    )


def cpg_for(batch=()):
    return CpgState(np.full((*batch, 4), 7.0), np.ones((*batch, 4)), np.zeros((*batch, 4)))


def test_observation_layout_and_values():
    cfg = preset("case-01-feet-dist", action_dim=8)
    snap = make_snapshot()
    obs = assemble_observation(snap, cpg_for(), GAP, cfg)
    assert obs.shape == (cfg.dim,)
    off = dict()
    i = 0
    for name, w in cfg.layout():
        off[name] = slice(i, i + w)
        i += w
    assert np.allclose(obs[off["joint_positions"]], snap.q)
    assert np.allclose(obs[off["previous_action"]], snap.prev_action)
    assert obs[off["desired_velocity"]][0] == 0.7
    theta = obs[off["cpg_states"]][8:12]
    assert np.allclose(theta, 7.0 - 2 * np.pi)
    assert np.allclose(obs[off["feet_gap"]], feet_gap_distances(snap.foot_p[:, :2], GAP))


def test_observation_batches_match_single():
    cfg = preset("case-03-lidar", action_dim=8)
    snap = make_snapshot((5,), np.random.default_rng(3))
    batch = assemble_observation(snap, cpg_for((5,)), GAP, cfg)
    for k in range(5):
        one = Snapshot(**{f: (getattr(snap, f)[k] if np.ndim(getattr(snap, f)) else getattr(snap, f))
                          for f in snap.__dataclass_fields__})
        assert np.allclose(assemble_observation(one, cpg_for(), GAP, cfg), batch[k])


def test_scales_cover_every_entry():
    for c in CASES:
        cfg = preset(c)
        off, sc = observation_scales(cfg)
        assert off.shape == sc.shape == (cfg.dim,)
        assert np.all(sc > 0)
