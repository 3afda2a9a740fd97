import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from l3sysid.causality import (AlreadyFolded, AnticausalFilter, clean,
                               estimate_filter, fold_input)
from l3sysid.lifting import DimensionMismatch, LiftedLinearModel


def test_recovers_direct_term_from_noiseless_data():
    rng = np.random.default_rng(0)
    u = rng.uniform(-1, 1, size=(500, 1))
    zeta = np.hstack([3.0 * u, -0.5 * u]) + np.array([1.0, 2.0])
    filt = estimate_filter(zeta, u)
    np.testing.assert_allclose(filt.D_, [[3.0], [-0.5]], atol=1e-10)
    cleaned = clean(filt, zeta, u)
    np.testing.assert_allclose(cleaned, np.tile([1.0, 2.0], (500, 1)), atol=1e-10)


def test_independent_observables_give_small_D():
    rng = np.random.default_rng(1)
    N = 10_000
    u = rng.uniform(-1, 1, size=(N, 2))
    zeta = rng.normal(size=(N, 3))
    D = estimate_filter(zeta, u).D_
    # each entry has sd ~ 1/(sqrt(N) * sd(u)) ~ 0.017
    assert np.max(np.abs(D)) < 0.1


def test_filter_is_sklearn_estimator():
    filt = AnticausalFilter(ridge=0.5)
    assert filt.get_params() == {"ridge": 0.5}
    assert clone(filt).ridge == 0.5


def test_zero_observables():
    filt = estimate_filter(np.zeros((10, 0)), np.ones((10, 1)) * np.arange(10)[:, None])
    assert filt.D_.shape == (0, 1)


def test_clean_checks_shapes():
    filt = AnticausalFilter.from_arrays([[1.0], [2.0]])
    with pytest.raises(DimensionMismatch):
        clean(filt, np.zeros(3), np.zeros(1))


def _random_model(rng, l=1, z=2, m=2, n=1):
    p = l + z + m + n
    return LiftedLinearModel(rng.normal(size=(l + z, p)), rng.normal(size=(m, p)),
                             l, z, m, n)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_folded_on_raw_equals_unfolded_on_clean(seed):
    rng = np.random.default_rng(seed)
    model = _random_model(rng)
    filt = AnticausalFilter.from_arrays(rng.normal(size=(2, 1)))
    folded = fold_input(model, filt)
    x, zeta, eta, u = (rng.normal(size=k) for k in (1, 2, 2, 1))
    zs = clean(filt, zeta, u)
    xi_clean = np.concatenate([x, zs, eta, u])
    xi_raw = np.concatenate([x, zeta, eta, u])
    a0, h0 = model.step(xi_clean)
    a1, h1 = folded.step(xi_raw)
    np.testing.assert_allclose(a1, a0, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(h1, h0, rtol=1e-12, atol=1e-12)


def test_fold_touches_only_input_columns():
    rng = np.random.default_rng(3)
    model = _random_model(rng)
    folded = fold_input(model, AnticausalFilter.from_arrays(rng.normal(size=(2, 1))))
    np.testing.assert_array_equal(folded.A[:, :5], model.A[:, :5])
    assert folded.folded and not model.folded


def test_fold_twice_rejected():
    rng = np.random.default_rng(4)
    filt = AnticausalFilter.identity(2, 1)
    folded = fold_input(_random_model(rng), filt)
    with pytest.raises(AlreadyFolded):
        fold_input(folded, filt)


def test_fold_with_zero_filter_is_identity():
    rng = np.random.default_rng(5)
    model = _random_model(rng)
    folded = fold_input(model, AnticausalFilter.identity(2, 1))
    np.testing.assert_array_equal(folded.A, model.A)
    np.testing.assert_array_equal(folded.H, model.H)


def _known_D_data(seed, x_half_width, N=500):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-x_half_width, x_half_width, N)
    u = rng.uniform(-2.5, 2.5, (N, 1))
    D0 = np.array([[0.7], [-1.3]])
    zeta_star = np.stack([np.sin(x), x ** 2], axis=1)
    return u, zeta_star + u @ D0.T, zeta_star, D0


@pytest.mark.parametrize("seed", range(5))
def test_recovers_D_with_state_dependent_observables(seed):
    # sd of each entry of D_hat is sd(zeta*) / (sqrt(N) sd(u)) ~ 2e-3 here
    u, zeta, _, D0 = _known_D_data(seed, 0.1)
    D = estimate_filter(zeta, u).D_
    assert np.max(np.abs(D - D0)) <= 1e-2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_recovery_error_within_standard_error(seed):
    # wide state spread: the error is bounded by six least-squares standard errors
    u, zeta, zeta_star, D0 = _known_D_data(seed, 1.0)
    D = estimate_filter(zeta, u).D_
    uc = u[:, 0] - u[:, 0].mean()
    se = zeta_star.std(axis=0) / np.sqrt(np.sum(uc * uc))
    assert np.all(np.abs(D[:, 0] - D0[:, 0]) <= 6 * se)


def test_exact_scalar_dependence():
    u = np.linspace(-1, 1, 50)[:, None]
    assert abs(estimate_filter(3.0 * u, u).D_[0, 0] - 3.0) <= 1e-9


def test_clean_arithmetic():
    filt = AnticausalFilter.from_arrays([[2.0]])
    np.testing.assert_array_equal(clean(filt, [5.0], [2.0]), [1.0])
    zero = AnticausalFilter.identity(2, 1)
    np.testing.assert_array_equal(clean(zero, [5.0, 6.0], [2.0]), [5.0, 6.0])


def test_refiltering_cleaned_data_is_idempotent():
    rng = np.random.default_rng(11)
    u = rng.normal(size=(300, 2))
    zeta = rng.normal(size=(300, 3)) + u @ rng.normal(size=(2, 3))
    f1 = estimate_filter(zeta, u)
    f2 = estimate_filter(f1.transform(zeta, u), u)
    assert np.max(np.abs(f2.D_)) <= 1e-8 * max(1.0, np.max(np.abs(f1.D_)))
