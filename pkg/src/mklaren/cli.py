"""Command-line interface: fit, predict, benchmark, lar, version.

Configuration lives in a single YAML file per run; command-line flags
override file values. Relative dataset paths resolve against the
MKLAREN_DATA_DIR environment variable when it is set. Exit codes: 0 ok,
1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib.metadata import version as pkg_version

import numpy as np
import yaml

from . import experiments
from .errors import DataError, InputError, NumericalError
from .kernels import kernel_from_config
from .lar import lar_path
from .mklaren import Mklaren


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _load_yaml(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InputError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"config {path} must be a mapping, got {type(cfg).__name__}")
    return cfg


def _resolve_data_path(path) -> str:
    path = str(path)
    if not os.path.isabs(path) and not os.path.exists(path):
        root = os.environ.get("MKLAREN_DATA_DIR")
        if root:
            candidate = os.path.join(root, path)
            if os.path.exists(candidate):
                return candidate
    return path


def _kernel_bank(cfg) -> list:
    specs = cfg.get("kernels")
    if not specs:
        raise InputError("config must list at least one kernel under 'kernels'")
    return [kernel_from_config(dict(spec)) for spec in specs]


def _read_feature_csv(path, target=None):
    """Feature rows for prediction; tolerates a header-only (empty) file."""
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if any(c.strip() for c in row)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        return np.zeros((0, 0)), []
    header = [h.strip() for h in rows[0]]
    drop = None
    if target is not None:
        if target in header:
            drop = header.index(target)
        else:
            raise DataError(f"{path}: target column {target!r} not in header {header}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
        try:
            vals = [float(c) for j, c in enumerate(row) if j != drop]
        except ValueError:
            raise DataError(f"{path}: non-numeric cell at row {lineno}") from None
        data.append(vals)
    names = [h for j, h in enumerate(header) if j != drop]
    if not data:
        return np.zeros((0, len(names))), names
    return np.asarray(data, dtype=float), names


# ------------------------------------------------------------------ fit


def cmd_fit(args) -> int:
    cfg = _load_yaml(args.config)
    for key in ("rank", "delta", "seed", "target", "dataset", "model"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.lam is not None:
        cfg["lambda"] = args.lam
    for key in ("dataset", "target", "rank"):
        if key not in cfg:
            raise InputError(f"fit config requires {key!r}")
    kernels = _kernel_bank(cfg)
    data = experiments.load_csv(_resolve_data_path(cfg["dataset"]), cfg["target"])
    model = Mklaren(
        kernels,
        rank=int(cfg["rank"]),
        delta=int(cfg.get("delta", 10)),
        lam=float(cfg.get("lambda", 0.0)),
        standardize=bool(cfg.get("standardize", True)),
    )
    model.fit(data.X, data.y)
    model_path = cfg.get("model", "model.npz")
    model.save(model_path)
    report = {
        "model": str(model_path),
        "status": model.status_,
        "columns": len(model.selection_order_),
        "pivot_counts": model.pivot_counts(),
        "selection_order": [[q, i] for q, i in model.selection_order_],
        "kernel_names": [k.name for k in model.kernels],
        "train_rmse": experiments.rmse(model.mu_ + model.y_mean_, data.y),
    }
    report_path = cfg.get("report", args.report)
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    print(f"fit: {report['columns']} columns, status={model.status_}")
    for name, count in zip(report["kernel_names"], report["pivot_counts"]):
        print(f"  {name}: {count} pivots")
    print(f"train rmse: {report['train_rmse']:.6g}")
    print(f"model written to {model_path}")
    return 0


# ------------------------------------------------------------------ predict


def cmd_predict(args) -> int:
    model = Mklaren.load(args.model)
    X, _ = _read_feature_csv(_resolve_data_path(args.data), target=args.target)
    if X.shape[0] == 0:
        preds = np.zeros(0)
    else:
        if X.shape[1] != model.feature_means_.size:
            raise DataError(
                f"{args.data}: {X.shape[1]} feature columns but the model expects "
                f"{model.feature_means_.size}"
            )
        preds = model.predict(X)
    out = args.output or "-"
    fh = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        writer = csv.writer(fh)
        writer.writerow(["prediction"])
        for val in preds:
            writer.writerow([repr(float(val))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if out != "-":
        print(f"{preds.size} predictions written to {out}")
    return 0


# ---------------------------------------------------------------- benchmark


def cmd_benchmark(args) -> int:
    cfg = _load_yaml(args.plan)
    for key in ("folds", "seed", "workers", "output"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    kernels = _kernel_bank(cfg)
    methods = cfg.get("methods", ["mklaren", "icd", "nystrom", "uniform"])
    ranks = cfg.get("ranks") or [cfg.get("rank", 14)]
    folds = int(cfg.get("folds", 5))
    seed = int(cfg.get("seed", 0))
    delta = int(cfg.get("delta", 10))
    subsample = int(cfg.get("subsample", 1000))
    grid = tuple(float(v) for v in cfg.get("lambda_grid", experiments.LAMBDA_GRID))
    if "datasets" not in cfg or not cfg["datasets"]:
        raise InputError("benchmark plan requires a nonempty 'datasets' list")

    plans, skipped = [], []
    for spec in cfg["datasets"]:
        name = spec.get("name") or os.path.basename(str(spec.get("path", "dataset")))
        try:
            data = experiments.load_csv(_resolve_data_path(spec["path"]), spec.get("target", -1))
        except (DataError, KeyError) as exc:
            skipped.append((name, str(exc)))
            continue
        for method in methods:
            for rank in ranks:
                plans.append(experiments.ExperimentPlan(
                    dataset=data, dataset_name=name, kernels=kernels, method=method,
                    rank=int(rank), delta=delta, lambda_grid=grid, folds=folds,
                    seed=seed, subsample=subsample,
                ))
    for name, reason in skipped:
        print(f"skipped dataset {name}: {reason}", file=sys.stderr)

    cells = [(plan, fold) for plan in plans for fold in range(folds)]
    workers = max(1, int(cfg.get("workers", 1)))
    if workers == 1:
        results = [experiments.run_fold(plan, fold) for plan, fold in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: experiments.run_fold(*c), cells))

    out = cfg.get("output", "results.csv")
    experiments.write_results_csv(results, out)
    summary = experiments.summarize(results)
    print(f"{'dataset':<12} {'method':<8} {'K':>4} {'rmse':>10} {'std':>8}")
    for row in summary:
        print(f"{row['dataset']:<12} {row['method']:<8} {row['rank']:>4} "
              f"{row['rmse_mean']:>10.4f} {row['rmse_std']:>8.4f}")
    minimal = experiments.minimal_rank_table(summary)
    if minimal:
        print("minimal rank within one std of uniform:")
        for (dataset, method), rank in sorted(minimal.items()):
            print(f"  {dataset} {method}: K={rank}")
    print(f"results written to {out}")
    return 0 if not skipped else 0


# ---------------------------------------------------------------------- lar


def cmd_lar(args) -> int:
    data = experiments.load_csv(_resolve_data_path(args.data), args.target)
    mean, scale = experiments.fit_standardization(data.X)
    Xs = (data.X - mean) / scale
    norms = np.linalg.norm(Xs, axis=0)
    norms[norms == 0.0] = 1.0
    Xs = Xs / norms
    yc = data.y - data.y.mean()
    states = lar_path(Xs, yc, max_steps=args.max_steps)
    names = data.feature_names or [str(j) for j in range(Xs.shape[1])]
    print(f"{'step':>4} {'entered':<20} {'sign':>4} {'max_corr':>12} {'resid_norm':>12}")
    for step, state in enumerate(states, start=1):
        label = "(terminal)" if state.terminal else names[state.active[-1]]
        sign = "" if state.terminal else f"{state.signs[-1]:+d}"
        print(f"{step:>4} {label:<20} {sign:>4} {state.max_corr:>12.6g} "
              f"{np.linalg.norm(state.r):>12.6g}")
    return 0


def cmd_version(args) -> int:
    try:
        print(pkg_version("mklaren"))
    except Exception:
        print("0.1.0+local")
    return 0


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mklaren", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model from a YAML config")
    p_fit.add_argument("config")
    p_fit.add_argument("--dataset")
    p_fit.add_argument("--target")
    p_fit.add_argument("--rank", type=int)
    p_fit.add_argument("--delta", type=int)
    p_fit.add_argument("--lambda", dest="lam", type=float)
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--model")
    p_fit.add_argument("--report")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict responses for a CSV of inputs")
    p_pred.add_argument("model")
    p_pred.add_argument("data")
    p_pred.add_argument("--target", help="column to drop from the input CSV")
    p_pred.add_argument("-o", "--output")
    p_pred.set_defaults(func=cmd_predict)

    p_bench = sub.add_parser("benchmark", help="run a benchmark plan")
    p_bench.add_argument("plan")
    p_bench.add_argument("--folds", type=int)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--workers", type=int)
    p_bench.add_argument("--output")
    p_bench.set_defaults(func=cmd_benchmark)

    p_lar = sub.add_parser("lar", help="least-angle path diagnostics on a CSV")
    p_lar.add_argument("data")
    p_lar.add_argument("--target", required=True)
    p_lar.add_argument("--max-steps", type=int, default=None)
    p_lar.set_defaults(func=cmd_lar)

    p_ver = sub.add_parser("version", help="print the package version")
    p_ver.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
