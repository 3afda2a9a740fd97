"""Open-loop simulation of identified models and integrated squared error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .causality import clean
from .lifting import DimensionMismatch
from .numerics import NonFiniteError


@dataclass(frozen=True)
class Rollout:
    """Predicted sequences, one row per input sample.

    ``observables`` are the cleaned observables the model propagates.
    """

    states: np.ndarray
    observables: np.ndarray
    synthetic: np.ndarray
    dt: float = 1.0


def rollout(model, x0, zeta0, inputs, lift=None, filt=None, dt=1.0,
            bound=1e12):
    """Iterate ``(x, zeta*)_{t+1} = A xi_t`` and ``eta_{t+1} = H xi_t``.

    Parameters
    ----------
    model : LiftedLinearModel
    x0 : array of shape (l,)
    zeta0 : array of shape (z,)
        Raw measured observables at the initial sample.
    inputs : array of shape (T, n)
    lift : callable, optional
        ``lift(x, zeta_clean) -> eta`` giving the initial synthetic
        observables; required when ``model.m > 0``.
    filt : AnticausalFilter, optional
        Filter used to clean ``zeta0``. For a folded model, the raw channel
        fed back after step 0 is rebuilt as ``zeta* + D u_t``.

    Only the initial observables are measured; afterwards the model's own
    predictions are fed back.
    """
    l, z, m, n = model.dims
    u = np.asarray(inputs, dtype=np.float64)
    if u.ndim == 1:
        u = u.reshape(-1, n)
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    zeta0 = np.asarray(zeta0, dtype=np.float64).reshape(-1)
    if u.shape[1] != n or x0.shape != (l,) or zeta0.shape != (z,):
        raise DimensionMismatch(
            f"model dims (l={l}, z={z}, n={n}) do not match x0 {x0.shape}, "
            f"zeta0 {zeta0.shape}, inputs {u.shape}")
    T = len(u)
    D = None if filt is None else filt.D_
    zs0 = zeta0 if D is None else clean(filt, zeta0, u[0])
    if m > 0:
        if lift is None:
            raise ValueError("a lift function is needed for m > 0")
        eta0 = np.asarray(lift(x0[None], zs0[None]), dtype=np.float64).reshape(m)
    else:
        eta0 = np.zeros(0)

    states = np.empty((T, l))
    obs = np.empty((T, z))
    syn = np.empty((T, m))
    states[0], obs[0], syn[0] = x0, zs0, eta0
    A, H = model.A, model.H
    for t in range(T - 1):
        zeta_in = obs[t]
        if model.folded and D is not None:
            zeta_in = zeta0 if t == 0 else obs[t] + D @ u[t]
        xi = np.concatenate([states[t], zeta_in, syn[t], u[t]])
        nxt = A @ xi
        states[t + 1] = nxt[:l]
        obs[t + 1] = nxt[l:]
        syn[t + 1] = H @ xi
        if not (np.all(np.isfinite(nxt)) and np.abs(nxt).max(initial=0) < bound):
            raise NonFiniteError(f"rollout diverged at step {t + 1}")
    return Rollout(states, obs, syn, dt)


def ise(predicted, truth, dt):
    """Rectangle-rule integral of ``||x_hat - x||^2`` over the horizon."""
    a = np.asarray(predicted, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"sequence shapes differ: {a.shape} vs {b.shape}")
    diff = (a - b).reshape(len(a), -1)
    return float(np.sum(diff * diff) * dt)


@dataclass
class ComparisonRow:
    name: str
    ise: float
    datum_dim: int
    lifted_state_dim: int
    state_error: np.ndarray
    observable_error: np.ndarray
    rollout: Rollout = None
    error: str = None
    reported_dim: int = None


def compare(truth, models):
    """Roll every model out on ``truth`` and score it.

    Parameters
    ----------
    truth : Trajectory
    models : sequence of (name, fitted estimator)
        Estimators expose ``rollout(x0, zeta0, inputs)``.

    Returns
    -------
    list of ComparisonRow, in the given order. A model that diverges gets
    ``ise = inf`` and the error message.
    """
    rows = []
    x0, zeta0 = truth.states[0], truth.observables[0]
    for name, est in models:
        dims = (getattr(est, "datum_dim_", None),
                getattr(est, "lifted_state_dim_", None))
        reported = getattr(est, "reported_dim_", dims[0])
        try:
            ro = est.rollout(x0, zeta0, truth.inputs)
        except NonFiniteError as exc:
            nan = np.full(len(truth), np.nan)
            rows.append(ComparisonRow(name, float("inf"), *dims, nan, nan,
                                      error=str(exc), reported_dim=reported))
            continue
        err = ro.states - truth.states
        state_err = np.sqrt(np.sum(err * err, axis=1))
        if ro.observables.shape == truth.observables.shape and ro.observables.size:
            # compare against the cleaned measurements the model propagates
            zs = truth.observables
            filt = getattr(est, "filter_", None)
            if filt is not None and filt.D_.shape[0] == zs.shape[1]:
                zs = clean(filt, zs, truth.inputs)
            oerr = ro.observables - zs
            obs_err = np.sqrt(np.sum(oerr * oerr, axis=1))
        else:
            obs_err = np.full(len(truth), np.nan)
        rows.append(ComparisonRow(name, ise(ro.states, truth.states, truth.dt),
                                  *dims, state_err, obs_err, ro,
                                  reported_dim=reported))
    return rows


def format_table(rows):
    """Human-readable ISE table."""
    width = max([5] + [len(r.name) for r in rows])
    lines = [f"{'model':<{width}}  {'dim':>4}  {'ISE':>12}"]
    for r in rows:
        lines.append(f"{r.name:<{width}}  {r.reported_dim!s:>4}  {r.ise:>12.6g}")
    return "\n".join(lines)
