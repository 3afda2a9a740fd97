"""Learned lifting linearization: joint training of a lifting network and a
linear model over the lifted datum.

A network ``g`` maps ``(x, zeta*)`` to synthetic observables ``eta``. The
linear model predicts ``(x, zeta*)`` and ``eta`` one step ahead from
``xi = (x, zeta*, eta, u)``. The same network produces both the regressor
``eta_t`` and the target ``eta_{t+1}``, and the quadratic loss on the stacked
residual is backpropagated into the network and the matrices together.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .causality import AnticausalFilter, clean, estimate_filter, fold_input
from .lifting import (TRAIN, VALIDATION, DimensionMismatch, LiftedLinearModel,
                      TransitionBatch, assemble_datum, transition_pairs)
from .neural import AdamState, Mlp
from .numerics import NonFiniteError, make_rng

log = logging.getLogger(__name__)


class NonFiniteLoss(NonFiniteError):
    """Raised when the training loss diverges to NaN or Inf."""


@dataclass
class L3Config:
    """Training configuration. ``Q=None`` means the identity."""

    hidden: tuple = (256, 256)
    n_synthetic: int = 2
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    Q: list = None
    patience: int = 5
    max_epochs: int = 1000
    seed: int = 0
    use_filter: bool = True
    use_zeta: bool = True
    init_scale: float = 0.1


@dataclass(frozen=True)
class _Prepared:
    """Transition pairs with cleaned observables, ready for training."""

    x: np.ndarray
    zeta: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    zeta_next: np.ndarray

    def __len__(self):
        return len(self.x)

    def take(self, idx):
        return _Prepared(self.x[idx], self.zeta[idx], self.u[idx],
                         self.x_next[idx], self.zeta_next[idx])


def _prepare(batch, filt, use_zeta=True):
    if not use_zeta:
        empty = np.zeros((len(batch), 0))
        return _Prepared(batch.x, empty, batch.u, batch.x_next, empty)
    return _Prepared(batch.x, clean(filt, batch.zeta, batch.u), batch.u,
                     batch.x_next, clean(filt, batch.zeta_next, batch.u_next))


def _as_prepared(pair):
    if isinstance(pair, _Prepared):
        return pair
    if isinstance(pair, TransitionBatch):
        return _Prepared(pair.x, pair.zeta, pair.u, pair.x_next, pair.zeta_next)
    raise TypeError(f"expected transition pairs, got {type(pair).__name__}")


def _synthetic(net, x, zeta):
    if net is None:
        return np.zeros((len(x), 0))
    return net.forward(np.hstack([x, zeta]))


def residual(net, linear, pairs):
    """Stacked residual ``((x, zeta*)_{t+1} - A xi_t, eta_{t+1} - H xi_t)``.

    ``pairs`` holds cleaned observables; ``linear`` must be unfolded. Accepts a
    batch (rows are samples) and returns ``(N, l + z + m)``.
    """
    p = _as_prepared(pairs)
    if linear.folded:
        raise ValueError("residuals are defined on the unfolded model")
    if p.x.shape[1] != linear.l or p.zeta.shape[1] != linear.z:
        raise DimensionMismatch("pair dimensions do not match the model")
    eta = _synthetic(net, p.x, p.zeta)
    eta_next = _synthetic(net, p.x_next, p.zeta_next)
    xi = assemble_datum(p.x, p.zeta, eta, p.u, linear.dims)
    pred_state, pred_eta = linear.step(xi)
    return np.hstack([np.hstack([p.x_next, p.zeta_next]) - pred_state,
                      eta_next - pred_eta])


def quadratic_loss(r, Q=None):
    """Mean over rows of ``r^T Q r``."""
    r = np.atleast_2d(r)
    if Q is None:
        return float(np.mean(np.sum(r * r, axis=1)))
    return float(np.mean(np.sum((r @ Q) * r, axis=1)))


def loss_and_gradients(net, W, dims, pairs, Q=None):
    """Batch-mean loss and its gradients.

    ``W`` is ``[A; H]`` of shape ``(l + z + m, p)``. Gradients flow through
    both network evaluations (at ``t`` and ``t + 1``). Returns ``(J, grad_W,
    grad_net)`` where ``grad_net`` follows :meth:`Mlp.parameters` order.
    """
    l, z, m, n = dims
    p = _as_prepared(pairs)
    B = len(p)
    if net is not None:
        stacked = np.vstack([np.hstack([p.x, p.zeta]),
                             np.hstack([p.x_next, p.zeta_next])])
        out, acts = net.forward(stacked, cache=True)
        eta, eta_next = out[:B], out[B:]
    else:
        eta = eta_next = np.zeros((B, 0))
    xi = np.hstack([p.x, p.zeta, eta, p.u])
    target = np.hstack([p.x_next, p.zeta_next, eta_next])
    r = target - xi @ W.T
    Qr = r if Q is None else r @ Q
    J = float(np.sum(Qr * r) / B)
    # Q symmetric: dJ/dr = 2 Q r / B
    G = (2.0 / B) * Qr
    grad_W = -G.T @ xi
    grad_net = None
    if net is not None:
        eta_cols = slice(l + z, l + z + m)
        d_eta = -G @ W[:, eta_cols]
        d_eta_next = G[:, l + z:]
        grad_net, _ = net.backward(acts, np.vstack([d_eta, d_eta_next]))
    return J, grad_W, grad_net


def train_gradient_check(net, W, dims, pairs, Q=None, h=1e-5, floor=1e-7):
    """Compare analytic loss gradients with central finite differences.

    Returns a dict with ``max_rel_error`` (entries whose absolute error is
    below ``floor`` count as exact), ``max_abs_error`` and the number of
    parameters checked.
    """
    W = np.array(W, dtype=np.float64)
    J0, gW, gnet = loss_and_gradients(net, W, dims, pairs, Q)
    params = [W] + ([] if net is None else net.parameters())
    analytic = [gW] + ([] if net is None else gnet)
    max_rel = max_abs = 0.0
    count = 0
    for param, grad in zip(params, analytic):
        flat, gflat = param.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            Jp = loss_and_gradients(net, W, dims, pairs, Q)[0]
            flat[i] = old - h
            Jm = loss_and_gradients(net, W, dims, pairs, Q)[0]
            flat[i] = old
            fd = (Jp - Jm) / (2 * h)
            err = abs(fd - gflat[i])
            max_abs = max(max_abs, err)
            if err > floor:
                max_rel = max(max_rel, err / max(abs(fd), abs(gflat[i])))
            count += 1
    return {"loss": J0, "max_rel_error": max_rel, "max_abs_error": max_abs,
            "n_parameters": count}


def _flatten(arrays):
    flat = np.concatenate([a.ravel() for a in arrays])
    views, start = [], 0
    for a in arrays:
        views.append(flat[start:start + a.size].reshape(a.shape))
        start += a.size
    return flat, views


def _concat(arrays):
    return np.concatenate([a.ravel() for a in arrays])


class LearnedLiftingLinearization(BaseEstimator):
    """Jointly trained lifting network and lifted linear model.

    Parameters mirror :class:`L3Config`. After :meth:`fit`:

    Attributes
    ----------
    net_ : Mlp or None
        Lifting network on ``(x, zeta*)``; ``None`` when ``n_synthetic=0``.
    unfolded_ : LiftedLinearModel
        Model over cleaned observables.
    model_ : LiftedLinearModel
        Folded model that consumes raw measured observables.
    filter_ : AnticausalFilter
        Identity when ``use_filter=False`` or there are no observables.
    history_ : list of dict
        Per-epoch ``train_loss`` and ``val_loss``.
    best_epoch_ : int
    """

    def __init__(self, hidden=(256, 256), n_synthetic=2, lr=1e-5, beta1=0.9,
                 beta2=0.999, eps=1e-8, batch_size=32, Q=None, patience=5,
                 max_epochs=1000, seed=0, use_filter=True, use_zeta=True,
                 init_scale=0.1):
        self.hidden = hidden
        self.n_synthetic = n_synthetic
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.batch_size = batch_size
        self.Q = Q
        self.patience = patience
        self.max_epochs = max_epochs
        self.seed = seed
        self.use_filter = use_filter
        self.use_zeta = use_zeta
        self.init_scale = init_scale

    @classmethod
    def from_config(cls, cfg):
        return cls(**asdict(cfg))

    def _q_matrix(self, k):
        if self.Q is None:
            return None
        Q = np.asarray(self.Q, dtype=np.float64)
        if Q.shape != (k, k):
            raise DimensionMismatch(f"Q has shape {Q.shape}, expected {(k, k)}")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        return Q

    def init_parameters(self, l, z, n):
        """Seeded network and ``W = [A; H]`` for the given dimensions."""
        m = int(self.n_synthetic)
        net = Mlp((l + z, *self.hidden, m), seed=self.seed) if m > 0 else None
        rng = make_rng(self.seed, 0x4148)
        W = rng.uniform(-self.init_scale, self.init_scale,
                        size=(l + z + m, l + z + m + n))
        return net, W

    def fit(self, ds):
        l, n, z_raw = ds.dims
        z = z_raw if self.use_zeta else 0
        train_raw = transition_pairs(ds, TRAIN)
        val_raw = transition_pairs(ds, VALIDATION)
        if self.use_filter and z > 0:
            _, u_s, zeta_s = ds.samples(TRAIN)
            filt = estimate_filter(zeta_s, u_s)
        else:
            filt = AnticausalFilter.identity(z, n)
        train = _prepare(train_raw, filt, self.use_zeta)
        val = _prepare(val_raw, filt, self.use_zeta)
        m = int(self.n_synthetic)
        dims = (l, z, m, n)
        Q = self._q_matrix(l + z + m)

        net, W = self.init_parameters(l, z, n)
        # one contiguous buffer so Adam updates every parameter in one pass
        flat, views = _flatten([W] + ([] if net is None else net.parameters()))
        W = views[0]
        if net is not None:
            net.weights, net.biases = views[1::2], views[2::2]
        params = [flat]
        adam = AdamState(params, self.lr, self.beta1, self.beta2, self.eps)
        rng = make_rng(self.seed, 0x5348)

        def val_loss():
            return loss_and_gradients(net, W, dims, val, Q)[0]

        best = (np.inf, None, 0)
        history = []
        stale = 0
        for epoch in range(self.max_epochs):
            # validation before each epoch, no parameter update
            v = val_loss()
            if not np.isfinite(v):
                raise NonFiniteLoss(f"validation loss is {v} at epoch {epoch}")
            if v < best[0]:
                best = (v, [p.copy() for p in params], epoch)
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
            order = rng.permutation(len(train))
            total = 0.0
            for start in range(0, len(train), self.batch_size):
                batch = train.take(order[start:start + self.batch_size])
                J, gW, gnet = loss_and_gradients(net, W, dims, batch, Q)
                if not np.isfinite(J):
                    raise NonFiniteLoss(
                        f"training loss is {J} at epoch {epoch}; lower lr")
                adam.step(params, [_concat([gW] + ([] if net is None else gnet))])
                total += J * len(batch)
            history.append({"epoch": epoch, "val_loss": v,
                            "train_loss": total / len(train)})
            log.debug("epoch %d train %.6g val %.6g", epoch,
                      history[-1]["train_loss"], v)
        else:
            v = val_loss()
            if np.isfinite(v) and v < best[0]:
                best = (v, [p.copy() for p in params], self.max_epochs)

        _, best_params, self.best_epoch_ = best
        for live, saved in zip(params, best_params):
            live[...] = saved
        self.net_ = net
        self.unfolded_ = LiftedLinearModel(W[:l + z], W[l + z:], l, z, m, n)
        self.filter_ = filt
        self.model_ = fold_input(self.unfolded_, filt)
        self.history_ = history
        self.train_loss_ = loss_and_gradients(net, W, dims, train, Q)[0]
        self.val_loss_ = loss_and_gradients(net, W, dims, val, Q)[0]
        self.n_features_in_ = l
        return self

    # -- inference ---------------------------------------------------------

    @property
    def datum_dim_(self):
        return self.model_.p

    @property
    def lifted_state_dim_(self):
        m = self.model_
        return m.l + m.z + m.m

    @property
    def reported_dim_(self):
        return self.datum_dim_

    def lift(self, x, zeta_clean):
        """Synthetic observables for states and cleaned observables."""
        check_is_fitted(self, "model_")
        x = np.atleast_2d(x)
        return _synthetic(self.net_, x, np.atleast_2d(zeta_clean).reshape(len(x), -1))

    def rollout(self, x0, zeta0, inputs):
        from .evaluation import rollout
        check_is_fitted(self, "model_")
        zeta0 = np.asarray(zeta0, dtype=np.float64)
        if not self.use_zeta:
            zeta0 = np.zeros(0)
        return rollout(self.model_, x0, zeta0, inputs, lift=self.lift,
                       filt=self.filter_)

    def predict(self, x0, zeta0, inputs):
        """Open-loop state prediction, shape ``(T, l)``."""
        return self.rollout(x0, zeta0, inputs).states


def train(ds, cfg=None):
    """Fit a :class:`LearnedLiftingLinearization` from an :class:`L3Config`."""
    cfg = L3Config() if cfg is None else cfg
    return LearnedLiftingLinearization.from_config(cfg).fit(ds)
