import numpy as np
import pytest
from conftest import linear_system_dataset
from hypothesis import given, settings
from hypothesis import strategies as st

from l3sysid.baselines import fit_dmdc
from l3sysid.causality import AnticausalFilter
from l3sysid.l3 import (L3Config, LearnedLiftingLinearization, _prepare,
                        loss_and_gradients, quadratic_loss, residual, train,
                        train_gradient_check)
from l3sysid.lifting import LiftedLinearModel, transition_pairs
from l3sysid.neural import AdamState, Mlp


def _random_problem(seed, l=1, z=2, m=2, n=1, B=4, hidden=(8,)):
    rng = np.random.default_rng(seed)
    net = Mlp((l + z, *hidden, m), seed=seed)
    for b in net.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    W = rng.uniform(-0.5, 0.5, size=(l + z + m, l + z + m + n))
    ds, _ = linear_system_dataset(seed, l=l, z=z, n=n, count=3, T=B + 1)
    pairs = transition_pairs(ds).take(np.arange(B))
    pairs = _prepare(pairs, AnticausalFilter.identity(z, n))
    return net, W, (l, z, m, n), pairs


def test_gradient_check_3_8_2():
    net, W, dims, pairs = _random_problem(0)
    report = train_gradient_check(net, W, dims, pairs)
    assert report["max_rel_error"] <= 1e-4
    assert report["n_parameters"] == W.size + sum(p.size for p in net.parameters())


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31))
def test_gradient_check_random_weighting(seed):
    net, W, dims, pairs = _random_problem(seed)
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(5, 5))
    report = train_gradient_check(net, W, dims, pairs, Q=M @ M.T)
    assert report["max_rel_error"] <= 1e-4


def test_zero_Q_gives_zero_gradients():
    net, W, dims, pairs = _random_problem(1)
    J, gW, gnet = loss_and_gradients(net, W, dims, pairs, np.zeros((5, 5)))
    assert J == 0.0
    assert np.all(gW == 0)
    assert all(np.all(g == 0) for g in gnet)


def test_zero_learning_rate_leaves_parameters():
    net, W, dims, pairs = _random_problem(2)
    _, gW, gnet = loss_and_gradients(net, W, dims, pairs)
    params = [W] + net.parameters()
    before = [p.copy() for p in params]
    AdamState(params, lr=0.0).step(params, [gW] + gnet)
    assert all(np.array_equal(a, b) for a, b in zip(params, before))


def test_small_step_does_not_increase_batch_loss():
    net, W, dims, pairs = _random_problem(3)
    J0, gW, gnet = loss_and_gradients(net, W, dims, pairs)
    lr = 1e-5
    for _ in range(4):
        trial_net, trial_W = net.copy(), W.copy()
        params = [trial_W] + trial_net.parameters()
        AdamState(params, lr=lr).step(params, [gW] + gnet)
        J1 = loss_and_gradients(trial_net, trial_W, dims, pairs)[0]
        if J1 <= J0 + 1e-12:
            break
        lr /= 2
    assert J1 <= J0 + 1e-12


def test_residual_zero_for_exact_linear_pairs():
    ds, A0 = linear_system_dataset(seed=4, l=1, z=2, n=1)
    pairs = transition_pairs(ds)
    net = Mlp((3, 4, 2))  # all-zero network: eta is identically zero
    A = np.hstack([A0[:, :3], np.zeros((3, 2)), A0[:, 3:]])
    model = LiftedLinearModel(A, np.zeros((2, 6)), 1, 2, 2, 1)
    r = residual(net, model, pairs)
    assert np.max(np.abs(r)) <= 1e-10


def test_zero_network_reduces_to_plain_residual():
    rng = np.random.default_rng(5)
    ds, _ = linear_system_dataset(seed=5, l=1, z=2, n=1)
    pairs = transition_pairs(ds)
    A = rng.normal(size=(3, 6))
    H = rng.normal(size=(2, 6))
    r = residual(Mlp((3, 4, 2)), LiftedLinearModel(A, H, 1, 2, 2, 1), pairs)
    X = np.hstack([pairs.x, pairs.zeta, pairs.u])
    plain = np.hstack([pairs.x_next, pairs.zeta_next]) - X @ A[:, [0, 1, 2, 5]].T
    np.testing.assert_allclose(r[:, :3], plain, atol=1e-12)
    np.testing.assert_allclose(r[:, 3:], -X @ H[:, [0, 1, 2, 5]].T, atol=1e-12)


def test_identity_weighted_loss_is_squared_norm():
    r = np.random.default_rng(6).normal(size=(1, 5))
    assert quadratic_loss(r) == pytest.approx(float(np.sum(r * r)), rel=1e-14)
    assert quadratic_loss(r, np.eye(5)) == pytest.approx(float(np.sum(r * r)), rel=1e-14)


def test_exact_system_without_lift_reaches_least_squares_optimum():
    ds, _ = linear_system_dataset(seed=0, count=10, T=40)
    est = LearnedLiftingLinearization(n_synthetic=0, lr=1e-3, patience=50,
                                      max_epochs=3000, use_filter=False).fit(ds)
    dmdc = fit_dmdc(ds)
    b = transition_pairs(ds)
    X = np.hstack([b.x, b.zeta, b.u])
    r = np.hstack([b.x_next, b.zeta_next]) - X @ dmdc.A.T
    optimum = quadratic_loss(r)
    assert abs(est.train_loss_ - optimum) <= 1e-6


def _small(**kw):
    base = dict(hidden=(16,), max_epochs=8, lr=1e-3, seed=1)
    base.update(kw)
    return LearnedLiftingLinearization(**base)


def test_toy_dimensions(toy_dataset):
    est = _small(max_epochs=1).fit(toy_dataset)
    assert est.datum_dim_ == 6
    assert est.model_.A.shape == (3, 6)
    assert est.model_.H.shape == (2, 6)
    assert est.model_.folded
    assert est.filter_.D_.shape == (2, 1)


def test_training_is_bit_identical(toy_dataset):
    a = _small().fit(toy_dataset)
    b = _small().fit(toy_dataset)
    assert a.model_.A.tobytes() == b.model_.A.tobytes()
    assert a.model_.H.tobytes() == b.model_.H.tobytes()
    for p, q in zip(a.net_.parameters(), b.net_.parameters()):
        assert p.tobytes() == q.tobytes()
    assert a.history_ == b.history_


def test_history_and_best_restore(toy_dataset):
    est = _small(max_epochs=15, patience=3).fit(toy_dataset)
    vals = [h["val_loss"] for h in est.history_]
    best = np.minimum.accumulate(vals)
    assert np.all(np.diff(best) <= 0)
    assert est.val_loss_ <= min(vals)


def test_early_stop_with_patience(toy_dataset):
    # a huge step makes validation worse immediately
    est = _small(lr=0.5, patience=2, max_epochs=50).fit(toy_dataset)
    assert len(est.history_) < 50
    assert est.best_epoch_ <= len(est.history_)


def test_ablations(toy_dataset):
    nof = _small(max_epochs=1, use_filter=False).fit(toy_dataset)
    assert np.all(nof.filter_.D_ == 0)
    noz = _small(max_epochs=1, use_zeta=False).fit(toy_dataset)
    assert noz.datum_dim_ == 4
    truth = toy_dataset.trajectories[0]
    ro = noz.rollout(truth.states[0], truth.observables[0], truth.inputs)
    assert ro.states.shape == truth.states.shape


def test_rollout_first_step_uses_lift(toy_dataset):
    est = _small(max_epochs=2).fit(toy_dataset)
    truth = toy_dataset.trajectories[1]
    x0, z0, u = truth.states[0], truth.observables[0], truth.inputs
    ro = est.rollout(x0, z0, u)
    zs0 = z0 - est.filter_.D_ @ u[0]
    eta0 = est.net_.forward(np.concatenate([x0, zs0]))
    a, _ = est.unfolded_.step(np.concatenate([x0, zs0, eta0, u[0]]))
    np.testing.assert_allclose(ro.states[1], a[:1], atol=1e-12)
    np.testing.assert_array_equal(est.predict(x0, z0, u), ro.states)


def test_q_validation(toy_dataset):
    with pytest.raises(ValueError):
        _small(Q=[[1, 2, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0],
                  [0, 0, 0, 1, 0], [0, 0, 0, 0, 1]]).fit(toy_dataset)
    with pytest.raises(ValueError):
        _small(Q=np.eye(3)).fit(toy_dataset)


def test_config_round_trip(toy_dataset):
    cfg = L3Config(hidden=(16,), max_epochs=1, lr=1e-3)
    est = train(toy_dataset, cfg)
    assert est.get_params()["hidden"] == (16,)
    assert LearnedLiftingLinearization.from_config(cfg).get_params() == est.get_params()


def test_default_hyperparameters():
    p = LearnedLiftingLinearization().get_params()
    assert p["hidden"] == (256, 256) and p["n_synthetic"] == 2
    assert (p["lr"], p["beta1"], p["beta2"], p["eps"]) == (1e-5, 0.9, 0.999, 1e-8)
    assert p["batch_size"] == 32 and p["Q"] is None
