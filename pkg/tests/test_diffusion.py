import numpy as np
import pytest

from treeflow_bench.data import BlobSpec, make_blobs, standardize
from treeflow_bench.diffusion import (
    DiffusionError,
    ScoreNet,
    ScoreTrainConfig,
    TrajectoryBundle,
    beta_rate,
    denoising_loss,
    euler_maruyama_step,
    linear_beta_schedule,
    reverse_pf_ode,
    simulate_learned_forward,
    snr_entropy_proxy,
    train_score_net,
)
from treeflow_bench.nn import mlp_init, score_net_spec


def zero_score(d=2, sched=None):
    net = mlp_init(score_net_spec(d), 0)
    last = len(net.spec.hidden)
    net.params[f"W{last}"][:] = 0.0
    net.params[f"b{last}"][:] = 0.0
    return ScoreNet(net, sched or linear_beta_schedule())


@pytest.fixture(scope="module")
def small_trained():
    ds, _ = standardize(make_blobs(BlobSpec([(-2, -2), (-2, 2), (2, -2), (2, 2)], 0.3, 800, seed=1)))
    model = train_score_net(ds, linear_beta_schedule(), ScoreTrainConfig(epochs=40, seed=0))
    return ds, model


def test_schedule_hand_examples():
    s = linear_beta_schedule(2, 0.5, 0.5)
    assert np.array_equal(s.betas, [0.5, 0.5])
    assert np.array_equal(s.alpha_bars, [0.5, 0.25])
    assert np.array_equal(snr_entropy_proxy(s), [0.5, 0.75])
    d = linear_beta_schedule()
    assert d.beta(1) == 1e-4 and d.beta(100) == pytest.approx(0.02, abs=1e-15)
    assert np.all(np.diff(d.alpha_bars) < 0)


@pytest.mark.parametrize("args", [(1, 1e-4, 0.02), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0)])
def test_schedule_rejects_bad_bounds(args):
    with pytest.raises(DiffusionError):
        linear_beta_schedule(*args)


def test_proxy_identity_and_monotone():
    s = linear_beta_schedule()
    p = snr_entropy_proxy(s)
    assert np.all(np.diff(p) > 0) and np.all((p > 0) & (p < 1))
    assert np.array_equal(p, 1.0 - s.alpha_bars)
    snr = s.alpha_bars / (1.0 - s.alpha_bars)
    np.testing.assert_allclose(p, 1.0 / (1.0 + snr), rtol=1e-12)
    lit = snr_entropy_proxy(s, cumulative=False)
    np.testing.assert_allclose(lit, s.betas, atol=1e-15)


def test_single_euler_maruyama_step_by_hand():
    x = np.array([[1.0]])
    out = euler_maruyama_step(x, 0.1, np.zeros_like(x), 0.01, np.zeros_like(x))
    assert out[0, 0] == pytest.approx(1 - 0.0005, abs=1e-15)


def test_beta_rate_readings():
    s = linear_beta_schedule()
    assert beta_rate(s, 100, "per-step") == s.beta(100)
    assert beta_rate(s, 100, "continuous") == pytest.approx(2.0)
    with pytest.raises(DiffusionError):
        beta_rate(s, 1, "bogus")


@pytest.mark.parametrize("scale", ["continuous", "per-step"])
def test_frozen_dynamics_in_zero_beta_limit(scale):
    # at 1e-12 the Brownian term alone has std ~1e-6 over 100 steps, so probe the limit further out
    model = zero_score(2, linear_beta_schedule(100, 1e-16, 1e-16))
    pts = np.random.default_rng(0).standard_normal((30, 2))
    traj = simulate_learned_forward(model, pts, seed=0, time_scale=scale)
    assert traj.positions.shape == (101, 30, 2)
    assert np.array_equal(traj.positions[0], pts)
    assert np.max(np.abs(traj.positions - pts)) < 1e-6
    rev = reverse_pf_ode(model, pts, time_scale=scale)
    np.testing.assert_allclose(rev.positions[-1], pts, atol=1e-9)


def test_forward_rejects_dim_mismatch():
    with pytest.raises(DiffusionError):
        simulate_learned_forward(zero_score(2), np.zeros((4, 3)))


def test_point_mass_training_drops_loss_tenfold():
    X = np.zeros((256, 2))
    sched = linear_beta_schedule()
    cfg = ScoreTrainConfig(epochs=60, batch=64, lr=1e-3, seed=0)
    untrained = ScoreNet(mlp_init(score_net_spec(2), cfg.seed), sched)
    before = denoising_loss(untrained, X, seed=5)
    after = denoising_loss(train_score_net(X, sched, cfg), X, seed=5)
    assert after * 10 <= before


def test_training_is_deterministic():
    X = np.random.default_rng(0).standard_normal((64, 2))
    cfg = ScoreTrainConfig(epochs=3, batch=16, seed=4)
    a = train_score_net(X, linear_beta_schedule(), cfg)
    b = train_score_net(X, linear_beta_schedule(), cfg)
    assert a.loss_history == b.loss_history
    assert all(np.array_equal(a.net.params[k], b.net.params[k]) for k in a.net.params)


def test_forward_variance_grows_and_pf_ode_deterministic(small_trained, tmp_path):
    ds, model = small_trained
    traj = simulate_learned_forward(model, ds.features, seed=0)
    msq = np.mean(np.sum(traj.positions ** 2, axis=2), axis=1)
    assert msq[-1] > msq[0]
    assert np.all(np.isfinite(traj.positions))
    noise = np.random.default_rng(1).standard_normal((50, 2))
    r1, r2 = reverse_pf_ode(model, noise), reverse_pf_ode(model, noise)
    assert np.array_equal(r1.positions, r2.positions)
    assert r1.times[0] == 1.0 and r1.times[-1] == 0.0
    path = tmp_path / "score.bin"
    model.save(path)
    again = ScoreNet.load(path)
    assert np.array_equal(reverse_pf_ode(again, noise).positions, r1.positions)


def test_trajectory_roundtrip_and_snapshot(tmp_path):
    traj = TrajectoryBundle(np.linspace(0, 1, 3), np.arange(18, dtype=float).reshape(3, 3, 2))
    traj.save(tmp_path / "t.bin")
    back = TrajectoryBundle.load(tmp_path / "t.bin")
    assert np.array_equal(back.positions, traj.positions)
    assert np.array_equal(traj.at(0.5), traj.positions[1])
    traj.dump_csv(tmp_path / "s.csv", 0.5, labels=[0, 1, 1])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,label" and len(lines) == 4
