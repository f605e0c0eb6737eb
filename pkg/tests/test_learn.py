import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadlab.learn.actions import ActionSpec, action_to_drives, drives_to_action, frequency_bound
from quadlab.learn.mlp import MLP, Adam, GaussianPolicy, gaussian_log_prob, gaussian_sample
from quadlab.learn.ppo import (
    ActorCritic, PpoConfig, RolloutBuffer, _minibatch_grads, gae, policy_objective, ppo_update, surrogate,
)
from quadlab.learn.toy import EXPECTED_OPTIMAL_RETURN, HORIZON, ToyVelocityEnv, evaluate_toy, optimal_return
from quadlab.learn.train import CheckpointError, Trainer, load_policy, read_checkpoint, train

SMALL = dict(batch_size=64, minibatch=32, epochs=2, hidden=(8,), num_envs=4)


# networks -------------------------------------------------------------------

def mlp_grad_error(sizes, activation, seed):
    rng = np.random.default_rng(seed)
    net = MLP(sizes, activation, rng)
    x = rng.normal(size=(5, sizes[0]))
    w = rng.normal(size=(5, sizes[-1]))
    net.forward(x)
    grads = net.backward(w)
    worst = 0.0
    eps = 1e-6
    for k, p in net.params.items():
        flat = p.reshape(-1)
        for i in rng.choice(flat.size, size=min(flat.size, 6), replace=False):
            old = flat[i]
            flat[i] = old + eps
            up = np.sum(w * net.forward(x))
            flat[i] = old - eps
            down = np.sum(w * net.forward(x))
            flat[i] = old
            num = (up - down) / (2 * eps)
            ana = grads[k].reshape(-1)[i]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    return worst


@pytest.mark.parametrize("activation", ["tanh", "elu"])
def test_mlp_gradients_match_central_differences(activation):
    for seed in range(3):
        assert mlp_grad_error([16, 32, 32, 8], activation, seed) < 1e-5


def test_mlp_rejects_bad_input():
    with pytest.raises(ValueError):
        MLP([4], "tanh")
    with pytest.raises(ValueError):
        MLP([4, 2], "relu6")
    with pytest.raises(RuntimeError):
        MLP([4, 2]).backward(np.zeros((1, 2)))


def test_gaussian_log_prob_at_mean():
    log_std = np.array([-0.5, 0.0, 0.3])
    mean = np.array([[0.1, -0.2, 0.4]])
    lp = gaussian_log_prob(mean, log_std, mean)
    assert lp[0] == pytest.approx(-np.sum(log_std + 0.5 * np.log(2 * np.pi)))


def test_gaussian_log_prob_matches_density_product():
    rng = np.random.default_rng(0)
    mean, log_std, a = rng.normal(size=3), rng.normal(size=3) * 0.3, rng.normal(size=3)
    sd = np.exp(log_std)
    dens = np.prod(np.exp(-0.5 * ((a - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi)))
    assert gaussian_log_prob(mean, log_std, a) == pytest.approx(np.log(dens))


def test_gaussian_sample_moments():
    rng = np.random.default_rng(1)
    mean = np.tile([0.5, -1.0], (200000, 1))
    a, _ = gaussian_sample(mean, np.log([0.2, 2.0]), rng)
    assert np.allclose(a.mean(0), [0.5, -1.0], atol=0.02)
    assert np.allclose(a.std(0), [0.2, 2.0], rtol=0.01)


def test_log_std_clamped():
    pol = GaussianPolicy(3, 2)
    pol.log_std[:] = [-9.0, 5.0]
    pol.clamp()
    assert np.array_equal(pol.log_std, [-4.0, 1.0])


def test_adam_first_step_has_lr_magnitude():
    p = {"x": np.array([1.0, -2.0])}
    opt = Adam(p, lr=0.1)
    opt.step(p, {"x": np.array([3.0, -0.5])})
    assert np.allclose(p["x"], [0.9, -1.9], atol=1e-6)


# ppo pieces ---------------------------------------------------------------------

def test_surrogate_examples():
    assert surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert surrogate(0.5, 1.0, 0.2) == pytest.approx(0.5)
    assert surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert surrogate(1.5, -1.0, 0.2) == pytest.approx(-1.5)


def gae_brute(r, v, d, nv, gamma, lam):
    n = len(r)
    out = np.zeros(n)
    for t in range(n):
        total, coef = 0.0, 1.0
        for k in range(t, n):
            live = 0.0 if d[k] else 1.0
            total += coef * (r[k] + gamma * nv[k] * live - v[k])
            if d[k]:
                break
            coef *= gamma * lam
        out[t] = total
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(0, 10_000), st.floats(0.5, 0.999), st.floats(0.0, 1.0))
def test_gae_matches_brute_force(n, seed, gamma, lam):
    rng = np.random.default_rng(seed)
    r, v, nv = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    d = rng.random(n) < 0.1
    adv, ret = gae(r, v, d, gamma, lam, nv)
    assert np.allclose(adv, gae_brute(r, v, d, nv, gamma, lam), atol=1e-10)
    assert np.allclose(ret, adv + v)


def test_gae_default_next_values_and_length_check():
    adv, _ = gae([1.0, 1.0], [0.0, 0.0], [False, False], 0.5, 1.0)
    assert np.allclose(adv, [1.5, 1.0])
    with pytest.raises(ValueError):
        gae([1.0], [0.0, 1.0], [False], 0.9, 0.9)


def random_batch(ac, n, rng, adv=None):
    obs = rng.normal(size=(n, ac.obs_dim))
    a, lp, v = ac.act(obs, rng)
    # move the policy a little so ratios differ from one
    ac.pi.net.params["b1"] += 0.05
    adv = rng.normal(size=n) if adv is None else adv
    return obs, a, lp, adv, v + rng.normal(size=n)


def test_policy_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    cfg = PpoConfig(**SMALL, entropy_coef=0.01)
    ac = ActorCritic(3, 2, cfg.hidden, rng=rng)
    obs, a, lp, adv, ret = random_batch(ac, 16, rng)
    grads, _ = _minibatch_grads(ac, ac.normalize(obs), a, lp, adv, ret, cfg)
    eps = 1e-6
    for key, arr in (("pi.W0", ac.pi.net.params["W0"]), ("pi.b1", ac.pi.net.params["b1"]),
                     ("pi.log_std", ac.pi.log_std)):
        flat = arr.reshape(-1)
        for i in range(min(flat.size, 4)):
            old = flat[i]
            flat[i] = old + eps
            up = policy_objective(ac, obs, a, lp, adv, cfg)
            flat[i] = old - eps
            down = policy_objective(ac, obs, a, lp, adv, cfg)
            flat[i] = old
            assert -grads[key].reshape(-1)[i] == pytest.approx((up - down) / (2 * eps), rel=1e-4, abs=1e-8)


def buffer_for(ac, rng, n=64, zero_adv=False):
    obs = rng.normal(size=(n, ac.obs_dim))
    a, lp, v = ac.act(obs, rng)
    adv = np.zeros(n) if zero_adv else rng.normal(size=n)
    ret = v + rng.normal(size=n)
    return RolloutBuffer(obs, a, lp, rng.normal(size=n), v, np.zeros(n, bool), v, adv, ret)


def test_zero_lr_leaves_parameters_unchanged():
    rng = np.random.default_rng(3)
    cfg = PpoConfig(**{**SMALL, "lr": 0.0})
    ac = ActorCritic(3, 2, cfg.hidden, rng=rng)
    before = {k: v.copy() for k, v in ac.params().items()}
    ppo_update(ac, Adam(ac.params()), buffer_for(ac, rng), cfg, rng)
    assert all(np.array_equal(before[k], v) for k, v in ac.params().items())


def test_zero_advantage_zero_entropy_leaves_policy_unchanged():
    rng = np.random.default_rng(4)
    cfg = PpoConfig(**{**SMALL, "entropy_coef": 0.0, "lr": 1e-2})
    ac = ActorCritic(3, 2, cfg.hidden, rng=rng)
    before = {k: v.copy() for k, v in ac.params().items()}
    ppo_update(ac, Adam(ac.params()), buffer_for(ac, rng, zero_adv=True), cfg, rng)
    for k, v in ac.params().items():
        if k.startswith("pi."):
            assert np.array_equal(before[k], v), k
    assert any(not np.array_equal(before[k], v) for k, v in ac.params().items() if k.startswith("vf."))


def test_kl_early_stop():
    rng = np.random.default_rng(5)
    cfg = PpoConfig(**{**SMALL, "epochs": 50, "lr": 0.05, "desired_kl": 1e-4})
    ac = ActorCritic(3, 2, cfg.hidden, rng=rng)
    stats = ppo_update(ac, Adam(ac.params()), buffer_for(ac, rng), cfg, rng)
    assert stats["epochs"] < 50
    assert stats["kl"] > 1.5 * cfg.desired_kl


def test_update_requires_advantages():
    rng = np.random.default_rng(0)
    ac = ActorCritic(3, 2, (8,), rng=rng)
    buf = buffer_for(ac, rng)
    buf.advantages = None
    with pytest.raises(ValueError):
        ppo_update(ac, Adam(ac.params()), buf, PpoConfig(**SMALL), rng)


@pytest.mark.parametrize("bad", [dict(hidden=()), dict(hidden=(0,)), dict(clip=1.5), dict(batch_size=10),
                                 dict(lr=-1.0), dict(activation="relu")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        PpoConfig(**{**SMALL, **bad})


def test_observation_normalization():
    ac = ActorCritic(2, 1, (4,), obs_offset=[1.0, 2.0], obs_scale=[2.0, 0.5])
    assert np.allclose(ac.normalize([[2.0, 4.0]]), [[2.0, 1.0]])
    with pytest.raises(ValueError):
        ac.normalize(np.zeros(3))


# actions ----------------------------------------------------------------------------

def test_frequency_bound_examples():
    assert frequency_bound(0.3, "walk") == pytest.approx(23.0)
    assert frequency_bound(0.65, "walk") == pytest.approx(41.5)
    assert frequency_bound(1.0, "walk") == pytest.approx(60.0)
    assert frequency_bound(0.9, "trot") == pytest.approx(30.0)
    assert frequency_bound(2.1, "trot") == pytest.approx(70.0)


def test_action_mapping_bounds_and_clamp():
    spec = ActionSpec("gap")
    d, x_off = action_to_drives(np.r_[-np.ones(4), np.ones(4), np.full(4, 5.0)], spec)
    assert np.allclose(d.mu, 0.5) and np.allclose(d.omega, 40.0) and np.allclose(x_off, 0.07)
    spec = ActionSpec("flat", flat_gait="walk")
    d, x_off = action_to_drives(np.zeros(8), spec, v_des=0.65)
    assert x_off is None
    assert np.allclose(d.mu, 2.25) and np.allclose(d.omega, 41.5 / 2)
    with pytest.raises(ValueError):
        action_to_drives(np.zeros(8), spec, v_des=1.5)
    with pytest.raises(ValueError):
        action_to_drives(np.zeros(8), spec)
    with pytest.raises(ValueError):
        action_to_drives(np.zeros(12), spec, v_des=0.5)


def test_drives_round_trip():
    rng = np.random.default_rng(0)
    for spec, v in ((ActionSpec("gap"), None), (ActionSpec("flat"), 1.4)):
        raw = rng.uniform(-1, 1, spec.dim)
        d, x_off = action_to_drives(raw, spec, v)
        assert np.allclose(drives_to_action(d.mu, d.omega, spec, v, x_off), raw)
    assert ActionSpec.from_dict(ActionSpec("gap").to_dict()) == ActionSpec("gap")
    with pytest.raises(ValueError):
        ActionSpec(mu_bounds=(2.0, 1.0))


# toy environment --------------------------------------------------------------------

def test_toy_optimal_return():
    t = (np.arange(200000) + 0.5) / 100000 - 1.0
    assert optimal_return(t).mean() == pytest.approx(EXPECTED_OPTIMAL_RETURN, abs=1e-6)
    assert optimal_return(0.3) == HORIZON
    assert optimal_return(1.0) == pytest.approx(HORIZON - 0.25)

    def bang_bang(obs):
        return np.clip((obs[..., 1:] - obs[..., :1]) / 0.5, -1, 1)

    targets = np.random.default_rng(0).uniform(-1, 1, 50)
    assert np.allclose(evaluate_toy(bang_bang, targets), optimal_return(targets))


def test_toy_env_episode_and_state():
    env = ToyVelocityEnv(2, seed=3)
    tot = np.zeros(2)
    for k in range(HORIZON):
        _, r, term, trunc, info = env.step(np.zeros((2, 1)))
        tot += r
        assert term.all() == (k == HORIZON - 1) and not trunc.any()
    assert "final_obs" in info and np.all(env.steps == 0)
    s = env.state_dict()
    a = [env.step(np.ones((2, 1)))[1] for _ in range(30)]
    env.load_state_dict(s)
    b = [env.step(np.ones((2, 1)))[1] for _ in range(30)]
    assert np.array_equal(a, b)


# trainer ------------------------------------------------------------------------------

def small_trainer(seed=0):
    cfg = PpoConfig(**{**SMALL, "lr": 1e-3})
    return Trainer(ToyVelocityEnv(cfg.num_envs, seed), cfg, seed)


def params_of(tr):
    return {k: v.copy() for k, v in tr.ac.params().items()}


def test_seed_reproducibility():
    a, b, c = small_trainer(1), small_trainer(1), small_trainer(2)
    for tr in (a, b, c):
        for _ in range(3):
            tr.update()
    pa, pb, pc = params_of(a), params_of(b), params_of(c)
    assert all(np.array_equal(pa[k], pb[k]) for k in pa)
    assert not all(np.array_equal(pa[k], pc[k]) for k in pa)
    np.testing.assert_equal(a.curve, b.curve)


def test_resume_is_bit_identical(tmp_path):
    straight = small_trainer(4)
    for _ in range(4):
        straight.update()
    first = small_trainer(4)
    for _ in range(2):
        first.update()
    path = first.save(tmp_path / "ck.npz")
    resumed = Trainer.load(path, ToyVelocityEnv(SMALL["num_envs"], 999))
    train(resumed.env, resumed.cfg, resumed.seed, 4, trainer=resumed)
    ps, pr = params_of(straight), params_of(resumed)
    assert all(np.array_equal(ps[k], pr[k]) for k in ps)
    np.testing.assert_equal(straight.curve, resumed.curve)


def test_checkpoint_contents_and_errors(tmp_path):
    tr = small_trainer()
    tr.update()
    path = tr.save(tmp_path / "a.npz")
    meta, arrays = read_checkpoint(path)
    assert meta["format"] == "quadlab-checkpoint" and meta["version"] == 1
    assert meta["layer_sizes"] == [2, 8, 1]
    ac, _ = load_policy(path)
    obs = np.random.default_rng(0).normal(size=(5, 2))
    assert np.allclose(ac.act(obs, None, deterministic=True)[0], tr.ac.act(obs, None, deterministic=True)[0])
    bad = tmp_path / "bad.npz"
    np.savez(bad, x=np.zeros(2))
    with pytest.raises(CheckpointError):
        read_checkpoint(bad)
    (tmp_path / "junk.npz").write_text("not a zip")
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "junk.npz")
    with pytest.raises(ValueError):
        Trainer(ToyVelocityEnv(3), PpoConfig(**SMALL))


class TruncatingEnv:
    """Constant reward 1; every episode is truncated after three steps; one env diverges once."""

    obs_dim = 1
    act_dim = 1

    def __init__(self, n=2):
        self.n = n
        self.t = 0

    def observe(self):
        return np.zeros((self.n, 1))

    def step(self, a):
        self.t += 1
        trunc = np.full(self.n, self.t % 3 == 0)
        term = np.zeros(self.n, bool)
        info = {}
        if trunc.any():
            info["final_obs"] = np.ones((self.n, 1))
            info["terminated_reason"] = ["diverged" if (i == 0 and self.t == 3) else "timeout" for i in range(self.n)]
        return self.observe(), np.ones(self.n), term, trunc, info


def test_truncation_bootstrap_and_diverged_exclusion():
    cfg = PpoConfig(batch_size=12, minibatch=6, epochs=1, hidden=(4,), num_envs=2, gamma=0.9)
    tr = Trainer(TruncatingEnv(), cfg, 0)
    buf, stats = tr.collect()
    v_final = tr.ac.value(np.ones((1, 1)))[0]
    rew = buf.rewards.reshape(2, 6)  # environment-major
    assert np.allclose(rew[:, [0, 1, 3, 4]], 1.0)
    assert np.allclose(rew[:, [2, 5]], 1.0 + 0.9 * v_final)
    assert stats["discarded"] == 1
    assert stats["episodes"] == 3
    assert stats["mean_return"] == pytest.approx(3.0)
