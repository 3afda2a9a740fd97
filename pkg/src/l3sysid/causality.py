"""Removal of linear input feedthrough from measured observables.

Measured observables are modeled as ``zeta = zeta*(x) + D u``. With centered
data ``zeta*`` is uncorrelated with ``u``, so ``D`` is the regression
coefficient of ``zeta`` on ``u``. Cleaning subtracts ``D u`` sample by sample;
folding moves the correction into a trained model's input columns.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .lifting import DimensionMismatch
from .numerics import solve_least_squares


class AlreadyFolded(RuntimeError):
    """Raised when folding a model whose input columns were already folded."""


class AnticausalFilter(TransformerMixin, BaseEstimator):
    """Estimate and remove the direct input term ``D u`` from observables.

    ``fit(zeta, u)`` centers both sample sets by their own means and solves
    the least-squares regression of ``zeta`` on ``u``. ``transform(zeta, u)``
    returns ``zeta - u D^T``; the means are kept for the record only.

    Attributes
    ----------
    D_ : ndarray of shape (z, n)
    mean_zeta_ : ndarray of shape (z,)
    mean_u_ : ndarray of shape (n,)
    """

    def __init__(self, ridge=0.0):
        self.ridge = ridge

    def fit(self, zeta, u):
        zeta = check_array(zeta, ensure_min_features=0)
        u = check_array(u)
        if len(zeta) != len(u):
            raise DimensionMismatch("zeta and u need the same number of samples")
        if len(u) <= u.shape[1]:
            raise ValueError("need more samples than input channels")
        self.mean_zeta_ = zeta.mean(axis=0)
        self.mean_u_ = u.mean(axis=0)
        if zeta.shape[1] == 0:
            self.D_ = np.zeros((0, u.shape[1]))
        else:
            W = solve_least_squares(u - self.mean_u_, zeta - self.mean_zeta_,
                                    self.ridge)
            self.D_ = W.T
        return self

    def transform(self, zeta, u):
        check_is_fitted(self, "D_")
        return clean(self, zeta, u)

    def fit_transform(self, zeta, u):
        return self.fit(zeta, u).transform(zeta, u)

    @classmethod
    def from_arrays(cls, D, mean_zeta=None, mean_u=None):
        """Rebuild a fitted filter from stored arrays."""
        filt = cls()
        filt.D_ = np.atleast_2d(np.asarray(D, dtype=np.float64))
        z, n = filt.D_.shape
        filt.mean_zeta_ = (np.zeros(z) if mean_zeta is None
                           else np.asarray(mean_zeta, dtype=np.float64))
        filt.mean_u_ = (np.zeros(n) if mean_u is None
                        else np.asarray(mean_u, dtype=np.float64))
        return filt

    @classmethod
    def identity(cls, z, n):
        return cls.from_arrays(np.zeros((z, n)))


def estimate_filter(zeta, u, ridge=0.0):
    """Fit an :class:`AnticausalFilter` to samples ``(N, z)`` and ``(N, n)``."""
    return AnticausalFilter(ridge=ridge).fit(zeta, u)


def clean(filt, zeta, u):
    """Return ``zeta - D u`` for a single sample or a batch of samples."""
    D = filt.D_
    zeta = np.asarray(zeta, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if zeta.shape[-1:] != (D.shape[0],) or u.shape[-1:] != (D.shape[1],):
        raise DimensionMismatch(
            f"filter maps {D.shape[1]} inputs to {D.shape[0]} observables, got "
            f"zeta {zeta.shape} and u {u.shape}")
    return zeta - u @ D.T


def fold_input(model, filt):
    """Merge the filter into the model's input columns.

    The folded model takes raw measured ``zeta`` in its datum and reproduces
    the unfolded model's predictions on cleaned ``zeta* = zeta - D u``:
    ``A_zeta zeta* + A_u u = A_zeta zeta + (A_u - A_zeta D) u``. The
    predicted observable block is still ``zeta*``.
    """
    if model.folded:
        raise AlreadyFolded("model input columns are already folded")
    D = filt.D_
    if D.shape != (model.z, model.n):
        raise DimensionMismatch(
            f"filter D has shape {D.shape}, model needs {(model.z, model.n)}")
    zs, us = model.block("zeta"), model.block("u")
    A = model.A.copy()
    H = model.H.copy()
    A[:, us] -= A[:, zs] @ D
    H[:, us] -= H[:, zs] @ D
    return model.with_matrices(A, H, folded=True)
