"""Shared numerical helpers: least squares and the seeded random stream.

Matrices throughout the package are plain ``numpy.ndarray`` objects of dtype
``float64``. Random numbers come from numpy's Philox generator, a
counter-based bit generator whose output for a given key is identical on
every platform.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

#: Gram condition number above which an unregularized solve is refused.
GRAM_CONDITION_LIMIT = 1e12


class SingularGram(np.linalg.LinAlgError):
    """Raised when regressors are not persistently exciting."""


class NonFiniteError(FloatingPointError):
    """Raised when a computation produces NaN or Inf."""


def solve_least_squares(regressors, targets, ridge=0.0):
    """Solve ``min_W ||Y - X W||^2 + ridge ||W||_F^2`` via normal equations.

    Parameters
    ----------
    regressors : array-like of shape (N, p)
    targets : array-like of shape (N, q) or (N,)
    ridge : float, default=0
        Tikhonov weight. No regularization is ever added implicitly.

    Returns
    -------
    W : ndarray of shape (p, q)

    Raises
    ------
    SingularGram
        If ``ridge == 0`` and the Gram matrix ``X^T X`` has condition number
        above :data:`GRAM_CONDITION_LIMIT`, or the Cholesky factorization
        fails.
    """
    X = np.asarray(regressors, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"regressors must be 2-D, got shape {X.shape}")
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise ValueError(
            f"regressors have {X.shape[0]} rows but targets have {Y.shape[0]}")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    n_samples, n_features = X.shape
    if ridge == 0 and n_samples < n_features:
        raise SingularGram(
            f"{n_samples} samples cannot determine {n_features} coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise NonFiniteError("least-squares data contain NaN or Inf")

    gram = X.T @ X
    if ridge == 0:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > GRAM_CONDITION_LIMIT:
            raise SingularGram(
                f"Gram matrix condition number {cond:.3g} exceeds "
                f"{GRAM_CONDITION_LIMIT:.0e}; data are not persistently "
                "exciting")
    else:
        gram = gram + ridge * np.eye(n_features)
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularGram(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, X.T @ Y)


def make_rng(seed, *stream):
    """Return a Philox-backed generator for ``seed`` and optional sub-stream.

    ``make_rng(seed, i)`` gives an independent stream per index ``i`` so that
    per-trajectory draws do not depend on generation order.
    """
    seed = int(seed)
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    entropy = [seed, *(int(s) for s in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def uniform(rng, lo, hi, count):
    """Draw ``count`` i.i.d. samples from ``U[lo, hi)``."""
    if not lo < hi:
        raise ValueError(f"uniform bounds require lo < hi, got [{lo}, {hi})")
    return rng.uniform(lo, hi, size=int(count))
