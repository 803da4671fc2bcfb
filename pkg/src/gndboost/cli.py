"""Command-line surface: simulate, train, predict, evaluate, baseline.

Exit codes: 0 on success, 2 on input errors, 3 on numerical failures.  Every
command echoes its resolved options into a run-manifest JSON next to its
outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .baselines import fit_exp_glm, fit_historical_average, fit_lognormal_mle
from .bgnd import BgndConfig, BgndModel, fit, load_model, save_model
from .boost_location import FitConfig
from .boost_scale import ScaleFitConfig
from .common import DataError, NumericalError
from .data import Dataset, load_csv, sim_config_from_dict, simulate_dataset, write_csv, write_truth_csv
from .evaluation import evaluate_models, model_forecast_batch, write_report
from .transforms import PowerTransform


def _write_manifest(path: Path, command: str, options: dict) -> None:
    doc = {"tool": "gndboost", "version": __version__, "command": command, "options": options}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _cmd_simulate(args) -> int:
    with open(args.config, "rb") as fh:
        doc = tomllib.load(fh)
    cfg = sim_config_from_dict(doc)
    ds, truth = simulate_dataset(cfg)
    write_csv(ds, args.out)
    if args.truth:
        write_truth_csv(truth, args.truth)
    _write_manifest(
        Path(str(args.out) + ".manifest.json"),
        "simulate",
        {"config": str(args.config), "out": str(args.out), "truth": args.truth and str(args.truth),
         "resolved": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(cfg).items()}},
    )
    return 0


def _train_configs(args, n: int) -> BgndConfig:
    cv_folds = args.cv_folds
    location = FitConfig(
        depth=args.depth,
        max_iters=args.max_iters,
        shrinkage=args.shrinkage,
        cv_folds=cv_folds,
        seed=args.seed,
    )
    scale = ScaleFitConfig(
        gamma=args.gamma,
        epsilon=args.epsilon,
        nu=args.nu,
        psi=args.psi,
        max_iters=args.max_iters,
        depth=args.depth,
        cv_folds=cv_folds,
        seed=args.seed,
    )
    return BgndConfig(location=location, scale=scale, crossfit=not args.no_crossfit)


def _cmd_train(args) -> int:
    ds = load_csv(args.data, response=args.response, timestamp=args.timestamp_col)
    cfg = _train_configs(args, ds.n_rows)
    model = fit(
        ds.X, ds.y, gamma=args.gamma, transform=PowerTransform(args.power),
        cfg=cfg, seed=args.seed, schema=ds.schema,
    )
    save_model(model, args.out)
    _write_manifest(
        Path(str(args.out) + ".manifest.json"),
        "train",
        {
            "data": str(args.data), "response": args.response,
            "timestamp_col": args.timestamp_col, "gamma": args.gamma,
            "power": args.power, "seed": args.seed,
            "crossfit": not args.no_crossfit, "nu": args.nu, "psi": args.psi,
            "max_iters": args.max_iters, "depth": args.depth,
            "cv_folds": args.cv_folds, "epsilon": args.epsilon,
            "shrinkage": args.shrinkage, "rows": ds.n_rows,
            "dropped_rows": ds.dropped_rows, "out": str(args.out),
        },
    )
    return 0


def _load_dataset_for(model, path, need_response: bool) -> Dataset:
    schema = model.schema
    if not schema:
        raise DataError("model file carries no feature schema; cannot encode new data")
    ds = load_csv(path, response=schema.get("response") if need_response else None, schema=schema)
    if need_response and ds.y is None:
        raise DataError(f"{path}: response column {schema.get('response')!r} is required for evaluation")
    return ds


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    quantiles = args.quantiles
    if any(not (0.0 < q < 1.0) for q in quantiles):
        raise DataError("quantile levels must lie strictly between 0 and 1")
    ds = _load_dataset_for(model, args.data, need_response=False)
    batch = model_forecast_batch(model, ds)
    columns = {f"q{q:g}": batch.quantile(q) for q in quantiles}
    if isinstance(model, BgndModel):
        mu, b = model.predict_params(ds.X)
        columns["mu_transformed"] = mu
        columns["scale_transformed"] = b
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        names = ["row"] + list(columns)
        w.writerow(names)
        for i in range(len(batch)):
            w.writerow([i] + [repr(float(columns[c][i])) for c in columns])
    _write_manifest(
        Path(str(args.out) + ".manifest.json"),
        "predict",
        {"model": str(args.model), "data": str(args.data),
         "quantiles": quantiles, "out": str(args.out), "rows": ds.n_rows,
         "dropped_rows": ds.dropped_rows},
    )
    return 0


def _cmd_evaluate(args) -> int:
    paths = [Path(p) for p in args.models.split(",") if p]
    if not paths:
        raise DataError("no model files given")
    names = [p.stem for p in paths]
    if len(set(names)) != len(names):
        raise DataError("model file stems must be unique; rename the files")
    models = {name: load_model(path) for name, path in zip(names, paths)}
    benchmark = args.benchmark or names[0]

    batches = {}
    y_ref = None
    for name, model in models.items():
        ds = _load_dataset_for(model, args.data, need_response=True)
        if y_ref is None:
            y_ref = ds.y
        elif ds.y.shape != y_ref.shape or not np.array_equal(ds.y, y_ref):
            raise DataError("models disagree on the usable test rows; clean the data first")
        batches[name] = model_forecast_batch(model, ds)

    report = evaluate_models(
        batches, y_ref, benchmark=benchmark, alphas=args.alphas,
        long_wait_cutoff=args.long_wait_cutoff_min,
        threshold_fracs=args.threshold_fracs,
    )
    outdir = Path(args.out)
    write_report(report, outdir)
    _write_manifest(
        outdir / "manifest.json",
        "evaluate",
        {"models": [str(p) for p in paths], "data": str(args.data),
         "benchmark": benchmark, "alphas": args.alphas,
         "long_wait_cutoff_min": args.long_wait_cutoff_min,
         "threshold_fracs": args.threshold_fracs, "out": str(outdir)},
    )
    return 0


def _cmd_baseline(args) -> int:
    ds = load_csv(args.data, response=args.response, timestamp=args.timestamp_col)
    if args.kind == "exp":
        model = fit_exp_glm(ds.X, ds.y, schema=ds.schema)
    elif args.kind == "lognormal":
        model = fit_lognormal_mle(ds.X, ds.y, schema=ds.schema)
    else:
        if ds.timestamps is None:
            raise DataError("historical-average baseline requires --timestamp-col")
        model = fit_historical_average(ds.timestamps, ds.y, schema=ds.schema)
    save_model(model, args.out)
    _write_manifest(
        Path(str(args.out) + ".manifest.json"),
        "baseline",
        {"kind": args.kind, "data": str(args.data), "response": args.response,
         "timestamp_col": args.timestamp_col, "rows": ds.n_rows,
         "dropped_rows": ds.dropped_rows, "out": str(args.out)},
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gndboost",
        description="Distributional forecasting with boosted generalized normal location/scale models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None, help="also write the ground-truth table")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="fit the boosted location/scale model")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--timestamp-col", default=None)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--power", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-crossfit", action="store_true")
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--psi", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--cv-folds", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="original-scale quantile predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--quantiles", type=_float_list, default=[0.5, 0.7, 0.9])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="score several models on a test set")
    p.add_argument("--models", required=True, help="comma-separated model files")
    p.add_argument("--data", required=True)
    p.add_argument("--benchmark", default=None, help="model name (file stem) used as CRPS reference; default first")
    p.add_argument("--alphas", type=_float_list, default=[0.6, 0.65, 0.7, 0.75, 0.8])
    p.add_argument("--long-wait-cutoff-min", type=float, default=10.0)
    p.add_argument("--threshold-fracs", type=_float_list, default=[0.05, 0.10, 0.15, 0.20, 0.25])
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("baseline", help="fit a classical baseline model")
    p.add_argument("--kind", choices=("exp", "lognormal", "histavg"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--timestamp-col", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
