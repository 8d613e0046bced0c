"""Data loading, standardization, cross-validation harness, ridge baselines,
and metrics for the benchmark protocol.

The evaluation scheme is repeated random splitting: each fold draws a fresh
60/20/20 train/validation/test partition from a seeded generator, the
regularization strength is picked on the validation part from a log grid,
and RMSE is reported on the test part. Folds are independent tasks over
immutable data; only result aggregation synchronizes.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError
from .kernels import KernelColumnOracle, kernel_cross
from .lowrank import incomplete_cholesky, nystrom_approximation, solve_psd
from .mklaren import Mklaren
from . import inference

LAMBDA_GRID = tuple(10.0 ** e for e in range(-3, 4))
UNIFORM_SIZE_GUARD = 5000


@dataclass
class Dataset:
    """Sample matrix with targets and optional per-feature statistics."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] | None = None
    standardization: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subsample(self, limit: int, seed: int) -> "Dataset":
        """At most ``limit`` rows, drawn without replacement from a seeded generator."""
        if self.n <= limit:
            return self
        idx = np.sort(np.random.default_rng(seed).choice(self.n, size=limit, replace=False))
        return Dataset(self.X[idx], self.y[idx], self.feature_names)


def load_csv(path, target_column) -> Dataset:
    """Read a numeric CSV with a header row into a :class:`Dataset`.

    ``target_column`` selects the response by header name or integer
    position. Malformed cells raise :class:`DataError` naming the row and
    column; standardization is left to the fold level.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if isinstance(target_column, int) or (isinstance(target_column, str)
                                              and target_column.lstrip("-").isdigit()):
            t = int(target_column)
            if not -len(header) <= t < len(header):
                raise DataError(f"{path}: target column index {t} out of range")
            t %= len(header)
        else:
            if target_column not in header:
                raise DataError(f"{path}: target column {target_column!r} not in header {header}")
            t = header.index(target_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: blank cell at row {lineno}, column {col!r}")
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=float)
    feat = [h for j, h in enumerate(header) if j != t]
    return Dataset(np.delete(mat, t, axis=1), mat[:, t], feat)


def split_train_val_test(n: int, seed: int):
    """Disjoint covering 60/20/20 index split, deterministic per seed."""
    if n < 5:
        raise InputError(f"need at least 5 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(0.6 * n)
    n_val = int(0.2 * n)
    return (np.sort(perm[:n_train]),
            np.sort(perm[n_train:n_train + n_val]),
            np.sort(perm[n_train + n_val:]))


def fit_standardization(X: np.ndarray):
    """Per-feature (mean, scale); constant features get scale 1."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return mean, scale


def rmse(predictions, truth) -> float:
    predictions = np.asarray(predictions, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predictions.size == 0 or truth.size == 0:
        raise InputError("rmse of empty vectors")
    if predictions.size != truth.size:
        raise InputError(f"length mismatch: {predictions.size} vs {truth.size}")
    return float(np.sqrt(np.mean((predictions - truth) ** 2)))


def explained_variance_path(X: np.ndarray, y: np.ndarray, order, labels=None):
    """Training explained variance of nested least-squares fits.

    For each prefix of ``order`` (feature indices in selection order), fits
    ordinary least squares of the centered target on the centered selected
    features and reports ``(label, 1 - SSE/SST, sign)`` where ``sign`` is
    the sign of the newest feature's coefficient in that fit. The sequence
    is nondecreasing since the models are nested.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    order = [int(i) for i in order]
    yc = y - y.mean()
    sst = float(yc @ yc)
    if sst <= 0:
        raise InputError("target has zero variance")
    Xc = X - X.mean(axis=0)
    out = []
    for i in range(1, len(order) + 1):
        cols = Xc[:, order[:i]]
        coef, _, _, _ = np.linalg.lstsq(cols, yc, rcond=None)
        resid = yc - cols @ coef
        ev = 1.0 - float(resid @ resid) / sst
        label = labels[order[i - 1]] if labels is not None else str(order[i - 1])
        out.append((label, ev, 1 if coef[-1] >= 0 else -1))
    return out


def model_explained_variance_path(model: Mklaren, X: np.ndarray, y: np.ndarray, labels=None):
    """Explained-variance path along a fitted rank-one-bank selection order."""
    order = []
    for q, _ in model.selection_order_:
        kern = model.kernels[q]
        if kern.kind != "rank_one":
            raise InputError("explained-variance path requires a rank-one kernel bank")
        order.append(kern.feature_index)
    return explained_variance_path(X, y, order, labels)


# ---------------------------------------------------------------- baselines


@dataclass
class RidgeOnFeatures:
    """Closed-form ridge on an explicit feature block with column centering."""

    coef: np.ndarray
    col_means: np.ndarray
    y_mean: float

    @classmethod
    def fit(cls, F: np.ndarray, y: np.ndarray, lam: float) -> "RidgeOnFeatures":
        col_means = F.mean(axis=0)
        Fc = F - col_means
        y_mean = float(y.mean())
        yc = y - y_mean
        gram = Fc.T @ Fc + lam * np.eye(F.shape[1])
        coef, _ = solve_psd(gram, Fc.T @ yc)
        return cls(coef, col_means, y_mean)

    def predict(self, F: np.ndarray) -> np.ndarray:
        return (F - self.col_means) @ self.coef + self.y_mean


@dataclass
class IndependentLowRankModel:
    """Per-kernel low-rank factors stacked into one ridge feature space.

    ``maps`` turn kernel blocks K(test, A_q) into feature rows; prediction
    standardizes inputs with the training statistics and stacks per-kernel
    blocks in bank order.
    """

    kernels: list
    active_sets: list[list[int]]
    active_rows: list[np.ndarray]
    maps: list[np.ndarray]
    ridge: RidgeOnFeatures
    mean: np.ndarray
    scale: np.ndarray

    def features(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=float) - self.mean) / self.scale
        blocks = []
        for kern, rows, mp in zip(self.kernels, self.active_rows, self.maps):
            blocks.append(kernel_cross(kern, Xs, rows) @ mp)
        return np.hstack(blocks)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.ridge.predict(self.features(X))


def _fit_independent(kernels, X_train, y_train, per_kernel_rank, lam, sampler):
    if per_kernel_rank < 1:
        raise InputError(f"per-kernel rank must be >= 1, got {per_kernel_rank}")
    mean, scale = fit_standardization(X_train)
    Xs = (X_train - mean) / scale
    active_sets, active_rows, maps, blocks = [], [], [], []
    for q, kern in enumerate(kernels):
        oracle = KernelColumnOracle(Xs, kern)
        block, active, mp = sampler(oracle, q)
        active_sets.append(active)
        active_rows.append(Xs[active])
        maps.append(mp)
        blocks.append(block)
    F = np.hstack(blocks)
    ridge = RidgeOnFeatures.fit(F, y_train, lam)
    return IndependentLowRankModel(list(kernels), active_sets, active_rows, maps,
                                   ridge, mean, scale)


def icd_ridge(kernels, X_train, y_train, per_kernel_rank: int, lam: float):
    """Unsupervised max-residual incomplete Cholesky per kernel, then ridge."""

    def sampler(oracle, q):
        factor = incomplete_cholesky(oracle, rank=min(per_kernel_rank, oracle.n))
        block = oracle.columns(factor.active)
        transform = inference.compute_transform(factor.columns, block[factor.active], block.T)
        return factor.columns, list(factor.active), transform

    return _fit_independent(kernels, X_train, y_train, per_kernel_rank, lam, sampler)


def nystrom_ridge(kernels, X_train, y_train, per_kernel_rank: int, lam: float, seed: int = 0):
    """Uniform-random pivot Nystrom features per kernel, then ridge."""
    rng = np.random.default_rng(seed)

    def sampler(oracle, q):
        m = min(per_kernel_rank, oracle.n)
        active = sorted(int(i) for i in rng.choice(oracle.n, size=m, replace=False))
        approx = nystrom_approximation(oracle, active)
        w, v = np.linalg.eigh(0.5 * (approx.inv_core + approx.inv_core.T))
        mp = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
        return approx.block @ mp, active, mp

    return _fit_independent(kernels, X_train, y_train, per_kernel_rank, lam, sampler)


@dataclass
class UniformKernelRidge:
    """Dual ridge on the uniformly weighted sum of full kernel matrices."""

    kernels: list
    train_rows: np.ndarray
    alpha: np.ndarray
    y_mean: float
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, kernels, X_train, y_train, lam: float) -> "UniformKernelRidge":
        n = X_train.shape[0]
        if n > UNIFORM_SIZE_GUARD:
            raise InputError(
                f"uniform baseline materializes an n x n matrix; n={n} exceeds "
                f"the {UNIFORM_SIZE_GUARD} guard"
            )
        mean, scale = fit_standardization(X_train)
        Xs = (X_train - mean) / scale
        K = np.zeros((n, n))
        for kern in kernels:
            K += kernel_cross(kern, Xs, Xs)
        K /= len(kernels)
        y_mean = float(y_train.mean())
        alpha, _ = solve_psd(K + lam * np.eye(n), y_train - y_mean)
        return cls(list(kernels), Xs, alpha, y_mean, mean, scale)

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=float) - self.mean) / self.scale
        K = np.zeros((Xs.shape[0], self.train_rows.shape[0]))
        for kern in self.kernels:
            K += kernel_cross(kern, Xs, self.train_rows)
        K /= len(self.kernels)
        return K @ self.alpha + self.y_mean


# ------------------------------------------------------------------ harness


@dataclass
class ExperimentPlan:
    """One benchmark cell description: dataset, method, rank, folds."""

    dataset: Dataset
    dataset_name: str
    kernels: list
    method: str
    rank: int
    delta: int = 10
    lambda_grid: tuple = LAMBDA_GRID
    folds: int = 5
    seed: int = 0
    subsample: int = 1000

    def __post_init__(self):
        if self.method not in ("mklaren", "icd", "nystrom", "uniform"):
            raise InputError(f"unknown method {self.method!r}")
        if not self.lambda_grid:
            raise InputError("lambda grid must be nonempty")
        if self.folds < 2:
            raise InputError(f"folds must be >= 2, got {self.folds}")


@dataclass
class FoldResult:
    method: str
    dataset: str
    rank: int
    fold: int
    lambda_selected: float
    rmse_test: float
    runtime_ms: float


def _fit_method(plan: ExperimentPlan, X_tr, y_tr, lam, fold_seed):
    p = len(plan.kernels)
    if plan.method == "mklaren":
        model = Mklaren(plan.kernels, rank=plan.rank, delta=plan.delta, lam=lam)
        return model.fit(X_tr, y_tr)
    if plan.method == "icd":
        return icd_ridge(plan.kernels, X_tr, y_tr, max(1, plan.rank // p), lam)
    if plan.method == "nystrom":
        return nystrom_ridge(plan.kernels, X_tr, y_tr, max(1, plan.rank // p), lam,
                             seed=fold_seed)
    return UniformKernelRidge.fit(plan.kernels, X_tr, y_tr, lam)


def run_fold(plan: ExperimentPlan, fold: int) -> FoldResult:
    """Fit on the train part, select lambda on validation, score on test.

    Deterministic given (plan, fold); fit wall-clock excludes data handling
    and covers only the refit at the selected lambda.
    """
    data = plan.dataset.subsample(plan.subsample, plan.seed)
    fold_seed = plan.seed + fold
    tr, va, te = split_train_val_test(data.n, fold_seed)
    X_tr, y_tr = data.X[tr], data.y[tr]
    best = (np.inf, None)
    for lam in plan.lambda_grid:
        model = _fit_method(plan, X_tr, y_tr, lam, fold_seed)
        err = rmse(model.predict(data.X[va]), data.y[va])
        if err < best[0]:
            best = (err, lam)
    lam = best[1]
    start = time.perf_counter()
    model = _fit_method(plan, X_tr, y_tr, lam, fold_seed)
    elapsed_ms = 1000.0 * (time.perf_counter() - start)
    return FoldResult(
        method=plan.method,
        dataset=plan.dataset_name,
        rank=plan.rank,
        fold=fold,
        lambda_selected=lam,
        rmse_test=rmse(model.predict(data.X[te]), data.y[te]),
        runtime_ms=elapsed_ms,
    )


def run_plan(plan: ExperimentPlan) -> list[FoldResult]:
    return [run_fold(plan, fold) for fold in range(plan.folds)]


def summarize(results: list[FoldResult]):
    """Mean/std test RMSE per (dataset, method, rank)."""
    groups: dict[tuple, list[float]] = {}
    for res in results:
        groups.setdefault((res.dataset, res.method, res.rank), []).append(res.rmse_test)
    out = []
    for (dataset, method, rank), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        out.append({
            "dataset": dataset, "method": method, "rank": rank,
            "rmse_mean": float(arr.mean()), "rmse_std": float(arr.std(ddof=1) if arr.size > 1 else 0.0),
            "folds": int(arr.size),
        })
    return out


def minimal_rank_table(summary, reference_method: str = "uniform"):
    """Smallest rank per method whose mean RMSE is within one standard
    deviation of the reference method's RMSE on the same dataset."""
    out = {}
    refs = {}
    for row in summary:
        if row["method"] == reference_method:
            refs[row["dataset"]] = (row["rmse_mean"], row["rmse_std"])
    for row in sorted(summary, key=lambda r: r["rank"]):
        if row["method"] == reference_method or row["dataset"] not in refs:
            continue
        ref_mean, ref_std = refs[row["dataset"]]
        key = (row["dataset"], row["method"])
        if key not in out and row["rmse_mean"] <= ref_mean + ref_std:
            out[key] = row["rank"]
    return out


def write_results_csv(results: list[FoldResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "dataset", "K", "fold", "lambda_selected",
                         "rmse_test", "runtime_ms"])
        for res in results:
            writer.writerow([res.method, res.dataset, res.rank, res.fold,
                             repr(res.lambda_selected), repr(res.rmse_test),
                             repr(res.runtime_ms)])
