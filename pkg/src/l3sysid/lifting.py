"""Trajectory containers, lifted linear models and polynomial dictionaries.

Every lifted model in the package uses the datum ordering ``(x, zeta*, eta,
u)``: state, cleaned measured observables, synthetic observables, input. The
state-side matrix ``A`` predicts ``(x, zeta*)`` at the next sample and the
observable-side matrix ``H`` predicts ``eta``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import make_rng

TRAIN = "train"
VALIDATION = "validation"


class DimensionMismatch(ValueError):
    """Raised when vector or matrix sizes disagree with model dimensions."""


def _as_2d(values, width, name):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, width) if width else arr.reshape(len(arr), 0)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled record of states, inputs and measured observables.

    ``states`` is ``(T, l)``, ``inputs`` is ``(T, n)`` and ``observables`` is
    ``(T, z)`` where ``z`` may be zero.
    """

    dt: float
    states: np.ndarray
    inputs: np.ndarray
    observables: np.ndarray = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim == 1:
            states = states[:, None]
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if self.observables is None:
            observables = np.zeros((len(states), 0))
        else:
            observables = np.asarray(self.observables, dtype=np.float64)
            if observables.ndim == 1:
                observables = observables[:, None]
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not len(states) == len(inputs) == len(observables):
            raise DimensionMismatch(
                "states, inputs and observables must have equal length, got "
                f"{len(states)}, {len(inputs)}, {len(observables)}")
        if len(states) < 2:
            raise ValueError("a trajectory needs at least two samples")
        for name, arr in (("states", states), ("inputs", inputs),
                          ("observables", observables)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"trajectory {name} contain NaN or Inf")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "observables", observables)

    def __len__(self):
        return len(self.states)

    @property
    def dims(self):
        """``(l, n, z)``."""
        return (self.states.shape[1], self.inputs.shape[1],
                self.observables.shape[1])

    @property
    def times(self):
        return self.dt * np.arange(len(self))


@dataclass(frozen=True)
class TransitionBatch:
    """Consecutive-sample pairs, one row per transition.

    ``u_next`` is carried so that ``zeta_next`` can be cleaned with the
    input applied at the same instant.
    """

    x: np.ndarray
    zeta: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    zeta_next: np.ndarray
    u_next: np.ndarray

    def __len__(self):
        return len(self.x)

    def take(self, index):
        return TransitionBatch(*(getattr(self, f)[index] for f in
                                 ("x", "zeta", "u", "x_next", "zeta_next",
                                  "u_next")))


@dataclass(frozen=True)
class Dataset:
    """Trajectories with a per-trajectory train/validation tag.

    Centering means are computed over the training split only.
    """

    trajectories: tuple
    split: tuple
    mean_x: np.ndarray = field(init=False)
    mean_u: np.ndarray = field(init=False)
    mean_zeta: np.ndarray = field(init=False)

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        split = tuple(self.split)
        if len(trajs) != len(split):
            raise ValueError("one split tag per trajectory is required")
        if not trajs:
            raise ValueError("a dataset needs at least one trajectory")
        dims, dt = trajs[0].dims, trajs[0].dt
        for i, traj in enumerate(trajs):
            if traj.dims != dims:
                raise DimensionMismatch(
                    f"trajectory {i} has dims {traj.dims}, expected {dims}")
            if not math.isclose(traj.dt, dt, rel_tol=1e-9):
                raise ValueError(
                    f"trajectory {i} has dt={traj.dt}, expected {dt}")
        bad = set(split) - {TRAIN, VALIDATION}
        if bad:
            raise ValueError(f"unknown split tags {sorted(bad)}")
        if TRAIN not in split or VALIDATION not in split:
            raise ValueError("both train and validation splits need a trajectory")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "split", split)
        train = [t for t, s in zip(trajs, split) if s == TRAIN]
        object.__setattr__(self, "mean_x",
                           np.concatenate([t.states for t in train]).mean(0))
        object.__setattr__(self, "mean_u",
                           np.concatenate([t.inputs for t in train]).mean(0))
        object.__setattr__(self, "mean_zeta",
                           np.concatenate([t.observables for t in train]).mean(0))

    @classmethod
    def with_random_split(cls, trajectories, seed, train_fraction=0.8):
        """Shuffle trajectories into an 80-20 (by default) split."""
        trajectories = tuple(trajectories)
        count = len(trajectories)
        if count < 2:
            raise ValueError("a train/validation split needs >= 2 trajectories")
        n_train = min(count - 1, max(1, math.floor(train_fraction * count)))
        order = make_rng(seed, 0xC0FFEE).permutation(count)
        split = [VALIDATION] * count
        for i in order[:n_train]:
            split[i] = TRAIN
        return cls(trajectories, tuple(split))

    @property
    def dims(self):
        """``(l, n, z)`` shared by every trajectory."""
        return self.trajectories[0].dims

    @property
    def dt(self):
        return self.trajectories[0].dt

    def subset(self, tag):
        return [t for t, s in zip(self.trajectories, self.split) if s == tag]

    def samples(self, tag=TRAIN):
        """Stack every sample of a split as ``(states, inputs, observables)``."""
        trajs = self.subset(tag)
        return (np.concatenate([t.states for t in trajs]),
                np.concatenate([t.inputs for t in trajs]),
                np.concatenate([t.observables for t in trajs]))


def transition_pairs(ds, split=TRAIN):
    """All consecutive-sample pairs of the trajectories in ``split``.

    Pairs never straddle two trajectories; order follows trajectory order,
    then time.
    """
    trajs = ds.subset(split)
    if not trajs:
        raise ValueError(f"split {split!r} has no trajectories")
    cat = lambda key, sl: np.concatenate([getattr(t, key)[sl] for t in trajs])
    head, tail = slice(None, -1), slice(1, None)
    return TransitionBatch(
        cat("states", head), cat("observables", head), cat("inputs", head),
        cat("states", tail), cat("observables", tail), cat("inputs", tail))


def assemble_datum(x, zeta, eta, u, dims=None):
    """Stack ``(x, zeta*, eta, u)`` into the lifted datum.

    Works on single vectors or on batches (leading sample axis). When
    ``dims=(l, z, m, n)`` is given, component widths are checked.
    """
    parts = [np.asarray(p, dtype=np.float64) for p in (x, zeta, eta, u)]
    if dims is not None:
        for name, part, width in zip(("x", "zeta", "eta", "u"), parts, dims):
            if part.shape[-1:] != (width,) and not (width == 0 and part.size == 0):
                raise DimensionMismatch(
                    f"{name} has trailing shape {part.shape[-1:]}, expected "
                    f"({width},)")
    if parts[0].ndim == 2:
        rows = len(parts[0])
        parts = [p.reshape(rows, -1) for p in parts]
    else:
        parts = [p.reshape(-1) for p in parts]
    return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class LiftedLinearModel:
    """Linear dynamics over the lifted datum ``xi = (x, zeta*, eta, u)``.

    ``A`` is ``(l + z, p)``, ``H`` is ``(m, p)`` with ``p = l + z + m + n``.
    ``folded`` records that the anticausal input correction has been merged
    into the input columns, so the model expects raw measured observables.
    """

    A: np.ndarray
    H: np.ndarray
    l: int
    z: int
    m: int
    n: int
    folded: bool = False

    def __post_init__(self):
        p = self.l + self.z + self.m + self.n
        A = np.array(self.A, dtype=np.float64)
        H = np.array(self.H, dtype=np.float64)
        if H.size == 0 and self.m == 0:
            H = H.reshape(0, p)
        if A.shape != (self.l + self.z, p):
            raise DimensionMismatch(f"A has shape {A.shape}, expected "
                                    f"{(self.l + self.z, p)}")
        if H.shape != (self.m, p):
            raise DimensionMismatch(f"H has shape {H.shape}, expected {(self.m, p)}")
        A.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "H", H)

    @property
    def p(self):
        return self.l + self.z + self.m + self.n

    @property
    def dims(self):
        return (self.l, self.z, self.m, self.n)

    def block(self, name):
        """Column slice of the datum for ``x``, ``zeta``, ``eta`` or ``u``."""
        l, z, m, n = self.dims
        bounds = {"x": (0, l), "zeta": (l, l + z), "eta": (l + z, l + z + m),
                  "u": (l + z + m, l + z + m + n)}
        return slice(*bounds[name])

    def step(self, xi):
        """One-step prediction ``(A xi, H xi)`` for a datum or a batch."""
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape[-1] != self.p:
            raise DimensionMismatch(
                f"datum has length {xi.shape[-1]}, model expects {self.p}")
        return xi @ self.A.T, xi @ self.H.T

    def with_matrices(self, A=None, H=None, **changes):
        return replace(self, A=self.A if A is None else A,
                       H=self.H if H is None else H, **changes)


class PolyBasis:
    """Monomials in graded-lexicographic order, constant excluded.

    Parameters
    ----------
    n_inputs : int
        Input dimension ``d``.
    count : int
        Number of monomials to keep.
    min_degree : int, default=1
        Lowest total degree to include; ``2`` skips the linear monomials
        (useful when the raw variables are already in the datum).
    exponents : sequence of tuples, optional
        Explicit exponent list; overrides ``count`` and ``min_degree``.
    """

    def __init__(self, n_inputs, count=None, min_degree=1, exponents=None):
        if exponents is None:
            if count is None or count < 1:
                raise ValueError("count must be a positive integer")
            if min_degree < 1:
                raise ValueError("min_degree must be at least 1")
            exponents = list(itertools.islice(
                self._graded_lex(n_inputs, min_degree), count))
        exponents = [tuple(int(e) for e in row) for row in exponents]
        if any(len(row) != n_inputs for row in exponents):
            raise DimensionMismatch("exponent length differs from n_inputs")
        if any(sum(row) < 1 or min(row) < 0 for row in exponents):
            raise ValueError("exponents must be nonnegative with degree >= 1")
        if len(set(exponents)) != len(exponents):
            raise ValueError("duplicate exponent vectors")
        self.n_inputs = int(n_inputs)
        self.exponents = exponents

    @staticmethod
    def _graded_lex(d, min_degree):
        for degree in itertools.count(min_degree):
            for combo in itertools.combinations_with_replacement(range(d), degree):
                powers = [0] * d
                for var in combo:
                    powers[var] += 1
                yield tuple(powers)

    def __len__(self):
        return len(self.exponents)

    def __eq__(self, other):
        return (isinstance(other, PolyBasis) and self.n_inputs == other.n_inputs
                and self.exponents == other.exponents)

    def __repr__(self):
        return f"PolyBasis(n_inputs={self.n_inputs}, count={len(self)})"

    def transform(self, v):
        """Evaluate every monomial on ``v`` of shape ``(d,)`` or ``(N, d)``."""
        v = np.asarray(v, dtype=np.float64)
        single = v.ndim == 1
        v = np.atleast_2d(v)
        if v.shape[1] != self.n_inputs:
            raise DimensionMismatch(
                f"input has {v.shape[1]} columns, basis expects {self.n_inputs}")
        powers = np.array(self.exponents, dtype=float).reshape(-1, self.n_inputs)
        out = np.prod(v[:, None, :] ** powers[None, :, :], axis=2)
        return out[0] if single else out

    def to_dict(self):
        return {"n_inputs": self.n_inputs,
                "exponents": [list(e) for e in self.exponents]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["n_inputs"], exponents=data["exponents"])


def poly_features(basis, v):
    return basis.transform(v)
