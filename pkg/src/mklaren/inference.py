"""Out-of-sample prediction, dual/primal coefficient recovery, and model
serialization.

Because an incomplete Cholesky factor with active set A reproduces the same
approximation as the Nystrom reconstruction on A, factor rows for unseen
points follow from kernel evaluations against the active training points
through a fixed linear transform computed once after training. Everything
here is read-only over a fitted model.
"""

from __future__ import annotations

import io
import json
import warnings
import zipfile

import numpy as np

from .errors import InputError
from .kernels import KernelFunction, kernel_cross, kernel_from_config, kernel_to_config
from .lowrank import solve_psd

SERIAL_VERSION = 1


def compute_transform(G: np.ndarray, K_active: np.ndarray, K_active_train: np.ndarray) -> np.ndarray:
    """Transform T mapping kernel blocks K(*, A) to factor rows G*.

    ``T = K(A, A)^-1 K(A, train) G (G^T G)^-1`` with shape (|A|, j). On the
    training set K(train, A) @ T reproduces G, so predictions on training
    inputs match the in-sample fit. The transform is small and can be stored
    with the model permanently.
    """
    G = np.asarray(G, dtype=float)
    gram = G.T @ G
    w = np.asarray(K_active_train, dtype=float) @ G
    try:
        right = np.linalg.solve(gram, w.T).T
    except np.linalg.LinAlgError:
        warnings.warn("factor Gram is singular; using pseudo-inverse for the transform")
        right = w @ np.linalg.pinv(gram)
    core = np.asarray(K_active, dtype=float)
    core = 0.5 * (core + core.T)
    T, _ = solve_psd(core, right)
    return T


def test_factor(kernel: KernelFunction, test_rows: np.ndarray, active_rows: np.ndarray,
                transform: np.ndarray) -> np.ndarray:
    """Factor rows for unseen points: K(test, A) @ T."""
    return kernel_cross(kernel, test_rows, active_rows) @ transform


def build_test_features(model, X_test: np.ndarray) -> np.ndarray:
    """Combined-space rows for unseen inputs, using training statistics.

    Each column is rebuilt as sign * (G*(:, j) - mean(G(:, j))) / norm with
    the centering mean and (possibly ridge-augmented) norm recorded at
    training time, so the result is consistent with the stored coefficients.
    """
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim != 2:
        raise InputError(f"prediction input must be 2-d, got shape {X_test.shape}")
    if X_test.shape[1] != model.feature_means_.size:
        raise InputError(
            f"prediction input has {X_test.shape[1]} features, model expects "
            f"{model.feature_means_.size}"
        )
    Xs = (X_test - model.feature_means_) / model.feature_scales_
    t = Xs.shape[0]
    k = len(model.space_.provenance)
    H_star = np.zeros((t, k))
    signs = np.asarray(model.space_.signs, dtype=float)
    norms = np.asarray(model.space_.column_norms, dtype=float)
    means = np.asarray(model.space_.centering_means, dtype=float)
    for q, kernel in enumerate(model.kernels):
        positions = model.column_positions_[q]
        if not positions:
            continue
        g_star = test_factor(kernel, Xs, model.active_data_[q], model.transforms_[q])
        pos = np.asarray(positions, dtype=int)
        H_star[:, pos] = signs[pos] * (g_star - means[pos]) / norms[pos]
    return H_star


def predict(model, X_test: np.ndarray) -> np.ndarray:
    """Predicted responses for unseen inputs."""
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim != 2:
        raise InputError(f"prediction input must be 2-d, got shape {X_test.shape}")
    if X_test.shape[0] == 0:
        return np.zeros(0)
    if len(model.space_.provenance) == 0:
        return np.full(X_test.shape[0], model.y_mean_)
    H_star = build_test_features(model, X_test)
    return H_star @ model.beta_ + model.y_mean_


def dual_coefficients(H: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Minimum-norm sample weights alpha with H^T alpha = beta.

    Solves the least-norm problem analytically as H (H^T H)^-1 beta; a
    singular Gram falls back to a pseudo-inverse solve with a warning.
    """
    H = np.asarray(H, dtype=float)
    beta = np.asarray(beta, dtype=float).ravel()
    if H.shape[1] != beta.size:
        raise InputError(f"H has {H.shape[1]} columns but beta has {beta.size} entries")
    if beta.size == 0:
        return np.zeros(H.shape[0])
    gram = H.T @ H
    try:
        w = np.linalg.solve(gram, beta)
    except np.linalg.LinAlgError:
        warnings.warn("H^T H is singular; dual coefficients via pseudo-inverse")
        w = np.linalg.pinv(gram) @ beta
    return H @ w


def model_dual_coefficients(model) -> np.ndarray:
    """Dual weights of a fitted model against its raw centered factor columns.

    The combined-space columns are normalized (and sign flipped), which is a
    per-column rescaling: folding those scalars into the coefficients and
    solving against the unnormalized centered columns yields weights alpha
    with (sum_q centered(K_q approx)) alpha = mu, the form needed to map
    into explicit feature spaces.
    """
    k = len(model.space_.provenance)
    if k == 0:
        return np.zeros(model.n_train_)
    R = np.zeros((model.n_train_, k))
    means = model.space_.centering_means
    for q in range(len(model.kernels)):
        positions = model.column_positions_[q]
        if not positions:
            continue
        G = model.factor_columns_[q]
        for local, pos in enumerate(positions):
            R[:, pos] = G[:, local] - means[pos]
    scale = np.asarray(model.space_.signs, dtype=float) / np.asarray(model.space_.column_norms)
    return dual_coefficients(R, scale * model.beta_)


def primal_weights(feature_map: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Weights in the range of an explicit feature map: Phi^T alpha."""
    feature_map = np.asarray(feature_map, dtype=float)
    alpha = np.asarray(alpha, dtype=float).ravel()
    if feature_map.ndim != 2 or feature_map.shape[0] != alpha.size:
        raise InputError(
            f"feature map rows ({feature_map.shape[0]}) must match alpha length ({alpha.size})"
        )
    return feature_map.T @ alpha


# ------------------------------------------------------------ serialization


def _write_npz(path, arrays: dict) -> None:
    """Write an .npz archive with fixed zip metadata so equal inputs give equal bytes."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def save_model(model, path) -> None:
    """Serialize a fitted model to a self-describing .npz container."""
    meta = {
        "format_version": SERIAL_VERSION,
        "kernels": [kernel_to_config(k) for k in model.kernels],
        "rank": model.rank,
        "delta": model.delta,
        "lam": model.lam,
        "standardize": model.standardize,
        "status": model.status_,
        "n_train": model.n_train_,
        "n_kernels": len(model.kernels),
    }
    arrays = {
        "meta_json": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
        "feature_means": model.feature_means_,
        "feature_scales": model.feature_scales_,
        "y_mean": np.array([model.y_mean_]),
        "beta": model.beta_,
        "mu": model.mu_,
        "provenance": np.asarray(model.space_.provenance, dtype=np.int64).reshape(-1, 2),
        "signs": np.asarray(model.space_.signs, dtype=np.int64),
        "column_norms": np.asarray(model.space_.column_norms),
        "centering_means": np.asarray(model.space_.centering_means),
    }
    for q in range(len(model.kernels)):
        arrays[f"active_{q}"] = np.asarray(model.active_sets_[q], dtype=np.int64)
        arrays[f"factor_{q}"] = model.factor_columns_[q]
        arrays[f"transform_{q}"] = model.transforms_[q]
        arrays[f"active_rows_{q}"] = model.active_data_[q]
    _write_npz(path, arrays)


def load_model(path):
    """Load a model saved by :func:`save_model`; predictions are bit-identical."""
    from .mklaren import CombinedFeatureSpace, Mklaren

    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta_json"]).decode())
        if meta["format_version"] != SERIAL_VERSION:
            raise InputError(f"unsupported model format version {meta['format_version']}")
        model = Mklaren(
            kernels=[kernel_from_config(cfg) for cfg in meta["kernels"]],
            rank=meta["rank"],
            delta=meta["delta"],
            lam=meta["lam"],
            standardize=meta["standardize"],
        )
        n = int(meta["n_train"])
        model.status_ = meta["status"]
        model.n_train_ = n
        model.feature_means_ = data["feature_means"]
        model.feature_scales_ = data["feature_scales"]
        model.y_mean_ = float(data["y_mean"][0])
        model.beta_ = data["beta"]
        model.mu_ = data["mu"]
        provenance = [(int(q), int(i)) for q, i in data["provenance"]]
        signs = [int(s) for s in data["signs"]]
        norms = [float(v) for v in data["column_norms"]]
        means = [float(v) for v in data["centering_means"]]
        model.active_sets_ = []
        model.factor_columns_ = []
        model.transforms_ = []
        model.active_data_ = []
        for q in range(meta["n_kernels"]):
            model.active_sets_.append([int(i) for i in data[f"active_{q}"]])
            model.factor_columns_.append(data[f"factor_{q}"])
            model.transforms_.append(data[f"transform_{q}"])
            model.active_data_.append(data[f"active_rows_{q}"])

    k = len(provenance)
    n_rows = n + model.rank if model.lam > 0 else n
    H = np.zeros((n_rows, k))
    positions = [[] for _ in model.kernels]
    for pos, (q, _) in enumerate(provenance):
        positions[q].append(pos)
    for q in range(len(model.kernels)):
        G = model.factor_columns_[q]
        for local, pos in enumerate(positions[q]):
            H[:n, pos] = signs[pos] * (G[:, local] - means[pos]) / norms[pos]
            if model.lam > 0:
                H[n + pos, pos] = signs[pos] * np.sqrt(model.lam) / norms[pos]
    model.space_ = CombinedFeatureSpace(
        matrix=H, n=n, provenance=provenance, signs=signs,
        column_norms=norms, centering_means=means,
    )
    model.column_positions_ = positions
    model.mu_aug_ = H @ model.beta_
    return model
