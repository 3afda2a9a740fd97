"""Least-squares lifted linear baselines: DMDc, eDMDc, Koopman-with-control
and DFL.

All four regress one-step transitions over the training split. DMDc lifts
nothing beyond the measured observables, eDMDc and Koopman-with-control add
polynomial features of ``(x, zeta)``, and DFL fixes the state rows to a
structural model and regresses only the observable rows.
"""

from __future__ import annotations

import itertools

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .causality import AnticausalFilter, clean, estimate_filter, fold_input
from .lifting import (TRAIN, Dataset, DimensionMismatch, LiftedLinearModel,
                      PolyBasis, Trajectory, transition_pairs)
from .numerics import solve_least_squares


def _pairs(ds):
    return transition_pairs(ds, TRAIN)


def fit_dmdc(ds, ridge=0.0):
    """Regress ``(x, zeta)_{t+1}`` on ``(x, zeta, u)_t``."""
    l, n, z = ds.dims
    b = _pairs(ds)
    X = np.hstack([b.x, b.zeta, b.u])
    Y = np.hstack([b.x_next, b.zeta_next])
    W = solve_least_squares(X, Y, ridge)
    return LiftedLinearModel(W.T, np.zeros((0, l + z + n)), l, z, 0, n)


def fit_edmdc(ds, basis, ridge=0.0):
    """DMDc over ``(x, zeta, eta, u)`` with ``eta = basis(x, zeta)``."""
    l, n, z = ds.dims
    if basis.n_inputs != l + z:
        raise DimensionMismatch(
            f"basis takes {basis.n_inputs} inputs, data have l + z = {l + z}")
    b = _pairs(ds)
    eta = basis.transform(np.hstack([b.x, b.zeta]))
    eta_next = basis.transform(np.hstack([b.x_next, b.zeta_next]))
    X = np.hstack([b.x, b.zeta, eta, b.u])
    Y = np.hstack([b.x_next, b.zeta_next, eta_next])
    W = solve_least_squares(X, Y, ridge).T
    m = len(basis)
    return LiftedLinearModel(W[:l + z], W[l + z:], l, z, m, n)


def koopman_basis(l, z, feature_count):
    """Graded-lex monomials of ``(x, zeta)`` minus the linear state monomials.

    The state itself is already the first block of the datum, so its
    degree-one monomials are skipped; everything else, including the linear
    observable terms, counts toward ``feature_count``.
    """
    if feature_count < 1:
        raise ValueError("feature_count must be at least 1")
    skip = {tuple(int(j == i) for j in range(l + z)) for i in range(l)}
    gen = (e for e in PolyBasis._graded_lex(l + z, 1) if e not in skip)
    return PolyBasis(l + z, exponents=list(itertools.islice(gen, feature_count)))


def fit_koopman(ds, feature_count=32, ridge=0.0):
    """Koopman-with-control over ``(x, psi(x, zeta), u)``.

    The observables enter only through the dictionary ``psi`` (see
    :func:`koopman_basis`), so the lifted state is ``l + feature_count``.
    Returns ``(model, basis)``.
    """
    l, n, z = ds.dims
    basis = koopman_basis(l, z, feature_count)
    b = _pairs(ds)
    eta = basis.transform(np.hstack([b.x, b.zeta]))
    eta_next = basis.transform(np.hstack([b.x_next, b.zeta_next]))
    X = np.hstack([b.x, eta, b.u])
    Y = np.hstack([b.x_next, eta_next])
    W = solve_least_squares(X, Y, ridge).T
    return LiftedLinearModel(W[:l], W[l:], l, 0, len(basis), n), basis


def fit_dfl(ds, structural_A, ridge=0.0):
    """DFL: state rows fixed to ``structural_A``, observable rows regressed.

    ``ds`` should already carry cleaned observables. ``structural_A`` is
    ``(l, l + z + n)`` over the datum ``(x, zeta*, u)``.
    """
    l, n, z = ds.dims
    structural_A = np.atleast_2d(np.asarray(structural_A, dtype=np.float64))
    if structural_A.shape != (l, l + z + n):
        raise DimensionMismatch(f"structural_A has shape {structural_A.shape},"
                                f" expected {(l, l + z + n)}")
    b = _pairs(ds)
    X = np.hstack([b.x, b.zeta, b.u])
    H = solve_least_squares(X, b.zeta_next, ridge).T
    return LiftedLinearModel(np.vstack([structural_A, H]),
                             np.zeros((0, l + z + n)), l, z, 0, n)


def dfl_closed_form(ds):
    """Observable-row coefficients from sample expectations.

    ``E[zeta_t xi_{t-1}^T] E[xi_{t-1} xi_{t-1}^T]^{-1}`` with plain sample
    means; kept separate from the least-squares path as a cross-check.
    """
    b = _pairs(ds)
    X = np.hstack([b.x, b.zeta, b.u])
    cross = b.zeta_next.T @ X / len(X)
    gram = X.T @ X / len(X)
    return np.linalg.solve(gram.T, cross.T).T


def toy_structural_A(dt, filt=None):
    """Forward-Euler state row ``q_{t+1} = q_t + dt f_t`` for the toy plant.

    Over the cleaned datum ``(q, f*, e_c, u)`` the raw flow is
    ``f = f* + D_f u``, so the input column carries ``dt D_f``.
    """
    d_f = 0.0 if filt is None else float(filt.D_[0, 0])
    return np.array([[1.0, dt, 0.0, dt * d_f]])


def clean_dataset(ds, filt):
    """Copy of ``ds`` with every trajectory's observables cleaned."""
    trajs = [Trajectory(t.dt, t.states, t.inputs,
                        clean(filt, t.observables, t.inputs))
             for t in ds.trajectories]
    return Dataset(trajs, ds.split)


class _LiftedBaseline(BaseEstimator):
    """Shared fit/rollout plumbing for the least-squares baselines."""

    use_filter = False

    def _filter_for(self, ds):
        l, n, z = ds.dims
        if self.use_filter and z > 0:
            _, u, zeta = ds.samples(TRAIN)
            return estimate_filter(zeta, u)
        return AnticausalFilter.identity(z, n)

    def fit(self, ds):
        self.filter_ = self._filter_for(ds)
        work = clean_dataset(ds, self.filter_) if self.use_filter else ds
        self.basis_ = None
        self.unfolded_ = self._fit(work)
        if self.unfolded_.z == ds.dims[2]:
            self.model_ = fold_input(self.unfolded_, self.filter_)
        else:
            # observables live only inside a nonlinear dictionary; the filter
            # is applied to the initial measurement instead of being folded
            self.model_ = self.unfolded_
        self.n_features_in_ = ds.dims[0]
        return self

    def lift(self, x, zeta_clean):
        if self.basis_ is None:
            return np.zeros((len(np.atleast_2d(x)), 0))
        return self.basis_.transform(np.hstack([np.atleast_2d(x),
                                                np.atleast_2d(zeta_clean)]))

    def rollout(self, x0, zeta0, inputs):
        from .evaluation import rollout
        check_is_fitted(self, "model_")
        if self.model_.z == 0:
            # observables enter only through the dictionary at step 0
            u0 = np.asarray(inputs, dtype=np.float64).reshape(len(inputs), -1)[0]
            eta0 = self.lift(x0, clean(self.filter_, zeta0, u0))
            return rollout(self.model_, x0, np.zeros(0), inputs,
                           lift=lambda *_: eta0)
        return rollout(self.model_, x0, zeta0, inputs, lift=self.lift,
                       filt=self.filter_)

    def predict(self, x0, zeta0, inputs):
        return self.rollout(x0, zeta0, inputs).states

    @property
    def datum_dim_(self):
        return self.model_.p

    @property
    def lifted_state_dim_(self):
        return self.model_.l + self.model_.z + self.model_.m

    @property
    def reported_dim_(self):
        return self.datum_dim_


class DMDc(_LiftedBaseline):
    """Linear model over ``(x, zeta, u)``."""

    def __init__(self, use_filter=False, ridge=0.0):
        self.use_filter = use_filter
        self.ridge = ridge

    def _fit(self, ds):
        return fit_dmdc(ds, self.ridge)


class EDMDc(_LiftedBaseline):
    """DMDc plus the first ``n_features`` degree >= 2 monomials of ``(x, zeta)``."""

    def __init__(self, n_features=2, use_filter=False, ridge=0.0):
        self.n_features = n_features
        self.use_filter = use_filter
        self.ridge = ridge

    def _fit(self, ds):
        l, n, z = ds.dims
        basis = PolyBasis(l + z, self.n_features, min_degree=2)
        model = fit_edmdc(ds, basis, self.ridge)
        self.basis_ = basis
        return model


class KoopmanWithControl(_LiftedBaseline):
    """Polynomial-dictionary lift of ``(x, zeta)`` with linear input."""

    def __init__(self, feature_count=32, use_filter=False, ridge=0.0):
        self.feature_count = feature_count
        self.use_filter = use_filter
        self.ridge = ridge

    def _fit(self, ds):
        model, basis = fit_koopman(ds, self.feature_count, self.ridge)
        self.basis_ = basis
        return model

    @property
    def reported_dim_(self):
        return self.lifted_state_dim_


class DFL(_LiftedBaseline):
    """Structural state equation with regressed observable dynamics.

    ``structural_A=None`` uses :func:`toy_structural_A`, which only makes
    sense for the toy plant's ``(q, f, e_c)`` layout.
    """

    def __init__(self, structural_A=None, use_filter=True, ridge=0.0):
        self.structural_A = structural_A
        self.use_filter = use_filter
        self.ridge = ridge

    def _fit(self, ds):
        A = self.structural_A
        if A is None:
            if ds.dims != (1, 1, 2):
                raise ValueError("a structural_A is required outside the toy plant")
            A = toy_structural_A(ds.dt, self.filter_)
        return fit_dfl(ds, A, self.ridge)
