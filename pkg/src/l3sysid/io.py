"""File formats: trajectory CSV, dataset manifest, model JSON, report CSV.

Trajectory CSV
    Header ``t,x0..x{l-1},u0..u{n-1},zeta0..zeta{z-1}``; one row per sample;
    every number written with 17 significant digits; ``\\n`` line endings.

Model JSON
    ``format_version`` (currently 1), ``kind``, ``params`` (estimator
    constructor arguments), ``dims``, row-major ``A``/``H``, the filter
    ``D`` with its centering means, ``folded``, plus ``basis`` for polynomial
    lifts and ``network`` (layer sizes and row-major weights/biases) for
    learned lifts.

Report CSV
    Header ``model,datum_dim,lifted_state_dim,ise,err_0..err_{T-1}`` where
    ``err_k`` is the Euclidean state error at sample ``k``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .baselines import DFL, DMDc, EDMDc, KoopmanWithControl
from .causality import AnticausalFilter
from .l3 import LearnedLiftingLinearization
from .lifting import (TRAIN, VALIDATION, Dataset, DimensionMismatch,
                      LiftedLinearModel, PolyBasis, Trajectory)
from .neural import Mlp

FORMAT_VERSION = 1
_HEADER_RE = re.compile(r"^(t|x\d+|u\d+|zeta\d+)$")


class CsvFormatError(ValueError):
    """Malformed trajectory CSV; the message names file and line."""


class UnsupportedFormat(ValueError):
    """Model file with an unknown ``format_version``."""


def _fmt(value):
    return format(float(value), ".17g")


def trajectory_header(l, n, z):
    return (["t"] + [f"x{i}" for i in range(l)] + [f"u{i}" for i in range(n)]
            + [f"zeta{i}" for i in range(z)])


def write_trajectory_csv(traj, path):
    l, n, z = traj.dims
    lines = [",".join(trajectory_header(l, n, z))]
    data = np.hstack([traj.times[:, None], traj.states, traj.inputs,
                      traj.observables])
    lines += [",".join(_fmt(v) for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def _parse_header(header, path):
    if not header or any(not _HEADER_RE.match(h) for h in header) or header[0] != "t":
        raise CsvFormatError(f"{path}:1: bad header {','.join(header or [])!r}")
    counts = {p: sum(h.startswith(p) and h[len(p):].isdigit() for h in header)
              for p in ("x", "u", "zeta")}
    l, n, z = counts["x"], counts["u"], counts["zeta"]
    if header != trajectory_header(l, n, z):
        raise CsvFormatError(f"{path}:1: columns must be ordered "
                             f"{','.join(trajectory_header(l, n, z))}")
    if l < 1 or n < 1:
        raise CsvFormatError(f"{path}:1: need at least one state and one input")
    return l, n, z


def read_trajectory_csv(path, dt_tol=1e-6):
    """Parse a trajectory CSV, validating shape and uniform sampling."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        l, n, z = _parse_header(header, path)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} "
                                     f"columns, got {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise CsvFormatError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if len(rows) < 2:
        raise CsvFormatError(f"{path}: need at least two data rows")
    data = np.array(rows)
    t = data[:, 0]
    steps = np.diff(t)
    dt = steps[0]
    if dt <= 0 or np.max(np.abs(steps - dt)) > dt_tol * dt:
        bad = int(np.argmax(np.abs(steps - dt))) + 3
        raise CsvFormatError(f"{path}:{bad}: non-uniform sample period")
    return Trajectory(dt, data[:, 1:1 + l], data[:, 1 + l:1 + l + n],
                      data[:, 1 + l + n:])


def write_dataset(ds, directory, seed=None, extra=None):
    """One CSV per trajectory plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, traj in enumerate(ds.trajectories):
        name = f"traj_{i:04d}.csv"
        write_trajectory_csv(traj, directory / name)
        files.append(name)
    return write_manifest(ds, directory, files, seed, extra)


def write_manifest(ds, directory, files, seed=None, extra=None):
    l, n, z = ds.dims
    manifest = {
        "format_version": FORMAT_VERSION,
        "dims": {"l": l, "n": n, "z": z},
        "dt": ds.dt,
        "seed": seed,
        "p_dmdc": l + z + n,
        "n_trajectories": len(files),
        "n_train": ds.split.count(TRAIN),
        "n_validation": ds.split.count(VALIDATION),
        "trajectories": [{"file": f, "split": s} for f, s in zip(files, ds.split)],
    }
    if extra:
        manifest.update(extra)
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def read_dataset(directory):
    """Load the dataset described by ``directory/manifest.json``."""
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"no manifest.json in {directory}")
    manifest = json.loads(mpath.read_text())
    root = Path(manifest.get("source_dir") or directory)
    trajs = [read_trajectory_csv(root / e["file"])
             for e in manifest["trajectories"]]
    return Dataset(trajs, [e["split"] for e in manifest["trajectories"]])


def ingest_directory(directory, seed):
    """Validate every ``*.csv`` under ``directory`` and split them 80-20."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"data directory {directory} does not exist")
    files = sorted(p for p in directory.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no CSV files in {directory}")
    trajs = []
    for f in files:
        traj = read_trajectory_csv(f)
        if trajs and traj.dims != trajs[0].dims:
            raise CsvFormatError(
                f"{f}:1: dims (l, n, z)={traj.dims} differ from "
                f"{files[0].name} {trajs[0].dims}")
        if trajs and not math.isclose(traj.dt, trajs[0].dt, rel_tol=1e-6):
            raise CsvFormatError(f"{f}: dt {traj.dt} differs from {trajs[0].dt}")
        trajs.append(traj)
    ds = Dataset.with_random_split(trajs, seed)
    return ds, [f.name for f in files]


# -- models ----------------------------------------------------------------

_KINDS = {"l3": LearnedLiftingLinearization, "dmdc": DMDc, "edmdc": EDMDc,
          "koopman": KoopmanWithControl, "dfl": DFL}


def _kind_of(est):
    for kind, cls in _KINDS.items():
        if type(est) is cls:
            return kind
    raise TypeError(f"cannot serialize {type(est).__name__}")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value


def _linear_to_dict(model):
    return {"dims": {"l": model.l, "z": model.z, "m": model.m, "n": model.n},
            "A": model.A.tolist(), "H": model.H.tolist(),
            "folded": model.folded}


def _linear_from_dict(d):
    dims = d["dims"]
    return LiftedLinearModel(np.array(d["A"], dtype=float).reshape(
                                 dims["l"] + dims["z"], -1),
                             np.array(d["H"], dtype=float), dims["l"],
                             dims["z"], dims["m"], dims["n"], d["folded"])


def model_to_dict(est, name=None):
    kind = _kind_of(est)
    filt = est.filter_
    out = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "name": name or kind,
        "params": {k: _jsonable(v) for k, v in est.get_params().items()},
        "datum_dim": est.datum_dim_,
        "lifted_state_dim": est.lifted_state_dim_,
        "model": _linear_to_dict(est.model_),
        "unfolded": _linear_to_dict(est.unfolded_),
        "filter": {"D": filt.D_.tolist(), "mean_zeta": filt.mean_zeta_.tolist(),
                   "mean_u": filt.mean_u_.tolist()},
    }
    if kind == "l3":
        net = est.net_
        out["network"] = None if net is None else {
            "sizes": list(net.sizes), "activation": "relu", "output": "linear",
            "weights": [W.tolist() for W in net.weights],
            "biases": [b.tolist() for b in net.biases]}
        out["best_epoch"] = est.best_epoch_
        out["train_loss"] = est.train_loss_
        out["val_loss"] = est.val_loss_
        out["history"] = est.history_
    elif getattr(est, "basis_", None) is not None:
        out["basis"] = est.basis_.to_dict()
    return out


def model_from_dict(d):
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedFormat(f"unsupported model format_version {version!r}")
    kind = d["kind"]
    if kind not in _KINDS:
        raise UnsupportedFormat(f"unknown model kind {kind!r}")
    params = dict(d["params"])
    if kind == "l3" and params.get("hidden") is not None:
        params["hidden"] = tuple(params["hidden"])
    est = _KINDS[kind](**params)
    est.model_ = _linear_from_dict(d["model"])
    est.unfolded_ = _linear_from_dict(d["unfolded"])
    f = d["filter"]
    est.filter_ = AnticausalFilter.from_arrays(
        np.array(f["D"], dtype=float).reshape(len(f["mean_zeta"]), len(f["mean_u"])),
        f["mean_zeta"], f["mean_u"])
    est.n_features_in_ = est.model_.l
    if kind == "l3":
        net = d.get("network")
        if net is None:
            est.net_ = None
        else:
            est.net_ = Mlp(net["sizes"])
            params = []
            for W, b in zip(net["weights"], net["biases"]):
                params += [np.array(W, dtype=float), np.array(b, dtype=float)]
            est.net_.set_parameters(params)
        est.best_epoch_ = d["best_epoch"]
        est.train_loss_ = d["train_loss"]
        est.val_loss_ = d["val_loss"]
        est.history_ = d["history"]
    else:
        est.basis_ = (PolyBasis.from_dict(d["basis"]) if d.get("basis")
                      else None)
    return est


def save_model(est, path, name=None):
    Path(path).write_text(json.dumps(model_to_dict(est, name), indent=1) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def write_history_csv(est, path):
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{h['epoch']},{_fmt(h['train_loss'])},{_fmt(h['val_loss'])}"
              for h in est.history_]
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_csv(rows, path):
    T = max((len(r.state_error) for r in rows), default=0)
    lines = [",".join(["model", "datum_dim", "lifted_state_dim", "ise"]
                      + [f"err_{k}" for k in range(T)])]
    for r in rows:
        lines.append(",".join([r.name, str(r.datum_dim), str(r.lifted_state_dim),
                               _fmt(r.ise)] + [_fmt(e) for e in r.state_error]))
    Path(path).write_text("\n".join(lines) + "\n")


def report_to_dict(rows):
    return {"models": [{"model": r.name, "datum_dim": r.datum_dim,
                        "lifted_state_dim": r.lifted_state_dim,
                        "reported_dim": r.reported_dim,
                        "ise": r.ise if math.isfinite(r.ise) else None,
                        "error": r.error,
                        "state_error": [None if not math.isfinite(e) else e
                                        for e in r.state_error.tolist()]}
                       for r in rows]}


def check_dims(est, traj):
    """Raise DimensionMismatch if ``est`` cannot run on ``traj``."""
    l, n, z = traj.dims
    model = est.model_
    if model.l != l or model.n != n or est.filter_.D_.shape[0] not in (0, z):
        raise DimensionMismatch(
            f"model expects (l={model.l}, n={model.n}) but trajectory has "
            f"(l={l}, n={n}, z={z})")
