"""Command-line front end.

Subcommands ``datagen``, ``train``, ``eval``, ``ingest`` and ``gradcheck``
share the global flags ``--seed``, ``--config``, ``--out`` and ``--json``.
Exit codes: 0 success, 1 user error (bad config, files, dimensions), 2
numerical failure (singular regression, divergence).

Layout of an output directory::

    data/manifest.json, data/traj_0000.csv, ...
    models/<method>.json, models/<method>_history.csv
    report.csv, report.txt, report.json
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .baselines import DFL, DMDc, EDMDc, KoopmanWithControl
from .evaluation import compare, format_table
from .l3 import L3Config, LearnedLiftingLinearization, train_gradient_check
from .lifting import DimensionMismatch, TransitionBatch
from .neural import Mlp
from .numerics import NonFiniteError, SingularGram, make_rng
from .plant import (TEST_AMPLITUDE, TEST_PERIOD, ToyPlant, generate_dataset,
                    square_wave_test)

log = logging.getLogger("l3sysid")

TOY_METHODS = ["koopman", "edmdc", "dfl", "l3", "l3-nof"]
ALL_METHODS = ["l3", "dfl", "dmdc", "edmdc", "koopman", "l3-nof", "l3-noz"]

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {"source": "plant", "count": 100, "duration": 5.0, "rate": 20.0,
             "substeps": 10, "input_range": [-2.5, 2.5],
             "initial_range": [-2.0, 2.0]},
    "methods": TOY_METHODS,
    "l3": {},
    "baselines": {"dmdc": {}, "edmdc": {"n_features": 2},
                  "koopman": {"feature_count": 32, "ridge": 1e-8},
                  "dfl": {"structural_A": None}},
    "eval": {"amplitude": TEST_AMPLITUDE, "period": TEST_PERIOD,
             "duration": 10.0, "q0": 0.0, "test_csv": None},
    "out": "run",
}


class UserError(Exception):
    """Problem with the command line, configuration or input files."""


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None, seed=None, out=None):
    """Default config, overlaid with a JSON file and command-line flags."""
    cfg = DEFAULT_CONFIG
    if path is not None:
        try:
            cfg = _merge(cfg, json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise UserError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise UserError(f"config file {path} is not valid JSON: {exc}") from None
    else:
        cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    if cfg.get("seed") is None:
        raise UserError("a seed is required")
    source = cfg["data"].get("source")
    if source not in ("plant", "csv"):
        raise UserError(f"data.source must be 'plant' or 'csv', got {source!r}")
    if source == "csv" and not cfg["data"].get("dir"):
        raise UserError("data.source 'csv' needs data.dir")
    unknown = set(cfg["methods"]) - set(ALL_METHODS)
    if unknown:
        raise UserError(f"unknown methods {sorted(unknown)}; choose from {ALL_METHODS}")
    names = {f.name for f in fields(L3Config)}
    bad = set(cfg["l3"]) - names
    if bad:
        raise UserError(f"unknown l3 settings {sorted(bad)}")
    return cfg


def _l3_config(cfg, **overrides):
    settings = dict(cfg["l3"])
    settings.setdefault("seed", cfg["seed"])
    if "hidden" in settings:
        settings["hidden"] = tuple(settings["hidden"])
    settings.update(overrides)
    return L3Config(**settings)


def build_estimator(method, cfg):
    b = cfg["baselines"]
    if method == "l3":
        return LearnedLiftingLinearization.from_config(_l3_config(cfg))
    if method == "l3-nof":
        return LearnedLiftingLinearization.from_config(
            _l3_config(cfg, use_filter=False))
    if method == "l3-noz":
        return LearnedLiftingLinearization.from_config(
            _l3_config(cfg, use_zeta=False))
    if method == "dmdc":
        return DMDc(**b.get("dmdc", {}))
    if method == "edmdc":
        return EDMDc(**b.get("edmdc", {}))
    if method == "koopman":
        return KoopmanWithControl(**b.get("koopman", {}))
    if method == "dfl":
        return DFL(**b.get("dfl", {}))
    raise UserError(f"unknown method {method!r}")


def _data_dir(cfg, args):
    return Path(args.data) if getattr(args, "data", None) else Path(cfg["out"]) / "data"


def cmd_datagen(cfg, args):
    d = cfg["data"]
    if d["source"] != "plant":
        raise UserError("datagen needs data.source = 'plant'")
    count = args.count if args.count is not None else d["count"]
    if count < 2:
        raise UserError("count must be at least 2 to split train/validation")
    ds = generate_dataset(ToyPlant(), count, d["duration"], d["rate"],
                          cfg["seed"], d["substeps"], tuple(d["input_range"]),
                          tuple(d["initial_range"]))
    out = _data_dir(cfg, args)
    manifest = io.write_dataset(ds, out, cfg["seed"],
                                {"source": "plant", "duration": d["duration"],
                                 "rate": d["rate"]})
    return {"data_dir": str(out), "n_trajectories": manifest["n_trajectories"],
            "n_train": manifest["n_train"],
            "n_validation": manifest["n_validation"]}


def cmd_ingest(cfg, args):
    src = Path(args.csv_dir)
    ds, files = io.ingest_directory(src, cfg["seed"])
    out = _data_dir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    manifest = io.write_manifest(ds, out, files, cfg["seed"],
                                 {"source": "csv",
                                  "source_dir": str(src.resolve())})
    l, n, z = ds.dims
    if z == 0:
        log.info("no observables: anticausal filtering will be skipped")
    return {"data_dir": str(out), "dims": manifest["dims"],
            "p_dmdc": manifest["p_dmdc"], "dt": manifest["dt"],
            "n_train": manifest["n_train"],
            "n_validation": manifest["n_validation"]}


def cmd_train(cfg, args):
    data = _data_dir(cfg, args)
    if not (data / "manifest.json").exists():
        raise FileNotFoundError(f"no dataset at {data} (run datagen or ingest)")
    ds = io.read_dataset(data)
    methods = args.methods.split(",") if args.methods else cfg["methods"]
    models_dir = Path(cfg["out"]) / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for method in methods:
        est = build_estimator(method, cfg)
        if method == "koopman" and ds.dims[2] == 0:
            est.set_params(feature_count=min(est.feature_count, 32))
        log.info("training %s", method)
        est.fit(ds)
        io.save_model(est, models_dir / f"{method}.json", method)
        if isinstance(est, LearnedLiftingLinearization):
            io.write_history_csv(est, models_dir / f"{method}_history.csv")
        summary[method] = {"datum_dim": est.datum_dim_,
                           "lifted_state_dim": est.lifted_state_dim_,
                           "file": str(models_dir / f"{method}.json")}
    return {"models": summary}


def _test_trajectory(cfg, args):
    e = cfg["eval"]
    path = args.test_csv or e.get("test_csv")
    if path:
        return io.read_trajectory_csv(path)
    if cfg["data"]["source"] != "plant":
        raise UserError("eval on CSV data needs --test-csv")
    return square_wave_test(ToyPlant(), e["duration"], cfg["data"]["rate"],
                            e["amplitude"], e["period"], e["q0"],
                            cfg["data"]["substeps"])


def cmd_eval(cfg, args):
    out = Path(cfg["out"])
    if args.models:
        paths = [Path(p) for p in args.models]
    else:
        order = {m: i for i, m in enumerate(cfg["methods"])}
        paths = sorted((out / "models").glob("*.json"),
                       key=lambda p: (order.get(p.stem, len(order)), p.stem))
    if not paths:
        raise FileNotFoundError(f"no model files found in {out / 'models'}")
    truth = _test_trajectory(cfg, args)
    models = []
    for p in paths:
        est = io.load_model(p)
        io.check_dims(est, truth)
        models.append((p.stem, est))
    rows = compare(truth, models)
    out.mkdir(parents=True, exist_ok=True)
    io.write_report_csv(rows, out / "report.csv")
    table = format_table(rows)
    (out / "report.txt").write_text(table + "\n")
    report = io.report_to_dict(rows)
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    if not args.json:
        print(table)
    return {"report": str(out / "report.csv"),
            "ise": {r.name: (r.ise if np.isfinite(r.ise) else None) for r in rows},
            **({"models": report["models"]} if args.json else {})}


def gradient_check_report(seed=0, sizes=(3, 8, 2), n_pairs=4, n_inputs=1):
    """Finite-difference check of the L3 loss on a small random problem."""
    rng = make_rng(seed, 0x4743)
    d_in, m = sizes[0], sizes[-1]
    l, z, n = 1, d_in - 1, n_inputs
    net = Mlp(sizes, seed=seed)
    for b in net.biases:
        b[...] = rng.uniform(-0.5, 0.5, b.shape)
    W = rng.uniform(-0.5, 0.5, size=(l + z + m, l + z + m + n))
    pairs = TransitionBatch(*(rng.normal(size=(n_pairs, k))
                              for k in (l, z, n, l, z, n)))
    return train_gradient_check(net, W, (l, z, m, n), pairs)


def cmd_gradcheck(cfg, args):
    report = gradient_check_report(cfg["seed"])
    report["passed"] = report["max_rel_error"] <= 1e-4
    if not args.json:
        print(f"parameters checked: {report['n_parameters']}")
        print(f"max relative error: {report['max_rel_error']:.3e}")
        print(f"max absolute error: {report['max_abs_error']:.3e}")
    if not report["passed"]:
        raise NonFiniteError("gradient check failed")
    return report


def _common_flags(suppress):
    # subcommand copies must not overwrite flags given before the subcommand
    default = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="master seed")
    common.add_argument("--config", default=default, help="JSON experiment config")
    common.add_argument("--out", default=default, help="output directory")
    common.add_argument("--json", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="print a machine-readable summary")
    common.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)
    return common


def build_parser():
    common = _common_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="l3sysid", parents=[_common_flags(suppress=False)],
        description="Identify lifted linear models from trajectory data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", parents=[common],
                       help="simulate the toy plant and write trajectory CSVs")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--data", default=None, help="dataset directory")

    p = sub.add_parser("ingest", parents=[common],
                       help="validate external trajectory CSVs and split them")
    p.add_argument("csv_dir")
    p.add_argument("--data", default=None, help="where to write the manifest")

    p = sub.add_parser("train", parents=[common], help="fit the selected models")
    p.add_argument("--data", default=None, help="dataset directory")
    p.add_argument("--methods", default=None,
                   help=f"comma-separated subset of {','.join(ALL_METHODS)}")

    p = sub.add_parser("eval", parents=[common],
                       help="open-loop rollout and ISE of trained models")
    p.add_argument("--models", nargs="*", default=None)
    p.add_argument("--test-csv", default=None)

    sub.add_parser("gradcheck", parents=[common],
                   help="finite-difference check of the L3 gradients")
    return parser


COMMANDS = {"datagen": cmd_datagen, "ingest": cmd_ingest, "train": cmd_train,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.out)
        result = COMMANDS[args.command](cfg, args)
    except (SingularGram, NonFiniteError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UserError, io.CsvFormatError, io.UnsupportedFormat,
            DimensionMismatch, FileNotFoundError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(result, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
