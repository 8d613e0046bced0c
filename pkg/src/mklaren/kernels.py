"""Kernel functions and the column-oracle access pattern.

Every decomposition in this package consumes kernel matrices one column at
a time through :class:`KernelColumnOracle`; the full n x n matrix is never
materialized. Oracles are read-only after construction and safe to share
across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

KERNEL_KINDS = ("linear", "polynomial", "gaussian", "rank_one")


@dataclass(frozen=True)
class KernelFunction:
    """A symmetric positive semidefinite kernel on row vectors.

    Supported kinds:

    - ``linear``: k(x, y) = x . y
    - ``polynomial``: k(x, y) = (x . y + bias) ** degree
    - ``gaussian``: k(x, y) = exp(-gamma * ||x - y||^2)
    - ``rank_one``: k(x, y) = x[f] * y[f] for a single feature index f
    """

    kind: str
    degree: int = 2
    bias: float = 0.0
    gamma: float = 1.0
    feature_index: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InputError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "gaussian" and not self.gamma > 0:
            raise InputError(f"gaussian kernel requires gamma > 0, got {self.gamma}")
        if self.kind == "polynomial":
            if self.degree < 1 or int(self.degree) != self.degree:
                raise InputError(f"polynomial kernel requires a positive integer degree, got {self.degree}")
        if self.kind == "rank_one" and self.feature_index < 0:
            raise InputError(f"rank_one kernel requires feature_index >= 0, got {self.feature_index}")
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian(gamma={self.gamma:g})"
        if self.kind == "polynomial":
            return f"polynomial(degree={self.degree}, bias={self.bias:g})"
        if self.kind == "rank_one":
            return f"rank_one(feature={self.feature_index})"
        return "linear"

    def __call__(self, x, y):
        return evaluate(self, x, y)


def evaluate(kernel: KernelFunction, x, y) -> float:
    """Evaluate ``kernel`` on a single pair of equal-length vectors."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if kernel.kind == "linear":
        return float(x @ y)
    if kernel.kind == "polynomial":
        return float((x @ y + kernel.bias) ** kernel.degree)
    if kernel.kind == "gaussian":
        d2 = float(np.sum((x - y) ** 2))
        return float(np.exp(-kernel.gamma * d2))
    f = kernel.feature_index
    if f >= x.size:
        raise InputError(f"rank_one feature index {f} out of range for dimension {x.size}")
    return float(x[f] * y[f])


def kernel_cross(kernel: KernelFunction, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Kernel values between every row of ``left`` and every row of ``right``."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    if left.ndim != 2 or right.ndim != 2 or left.shape[1] != right.shape[1]:
        raise InputError(f"incompatible row sets: {left.shape} vs {right.shape}")
    if kernel.kind == "linear":
        return left @ right.T
    if kernel.kind == "polynomial":
        return (left @ right.T + kernel.bias) ** kernel.degree
    if kernel.kind == "gaussian":
        l2 = np.einsum("ij,ij->i", left, left)
        r2 = np.einsum("ij,ij->i", right, right)
        d2 = l2[:, None] + r2[None, :] - 2.0 * (left @ right.T)
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-kernel.gamma * d2)
    f = kernel.feature_index
    if f >= left.shape[1]:
        raise InputError(f"rank_one feature index {f} out of range for dimension {left.shape[1]}")
    return np.outer(left[:, f], right[:, f])


def kernel_to_config(kernel: KernelFunction) -> dict:
    """Config mapping that round-trips through :func:`kernel_from_config`."""
    cfg = {"kind": kernel.kind, "name": kernel.name}
    if kernel.kind == "polynomial":
        cfg.update(degree=kernel.degree, bias=kernel.bias)
    elif kernel.kind == "gaussian":
        cfg.update(gamma=kernel.gamma)
    elif kernel.kind == "rank_one":
        cfg.update(feature_index=kernel.feature_index)
    return cfg


def kernel_from_config(cfg: dict) -> KernelFunction:
    """Build a kernel from a config mapping, e.g. ``{"kind": "gaussian", "gamma": 0.5}``."""
    if "kind" not in cfg:
        raise InputError(f"kernel config missing 'kind': {cfg!r}")
    known = {"kind", "degree", "bias", "gamma", "feature_index", "name"}
    extra = set(cfg) - known
    if extra:
        raise InputError(f"unknown kernel config keys {sorted(extra)} in {cfg!r}")
    return KernelFunction(**cfg)


def gaussian_bank(gammas) -> list[KernelFunction]:
    """A bank of Gaussian kernels, one per width parameter."""
    return [KernelFunction("gaussian", gamma=float(g)) for g in gammas]


def rank_one_bank(dim: int) -> list[KernelFunction]:
    """One rank-one kernel per feature of a dim-dimensional sample matrix."""
    return [KernelFunction("rank_one", feature_index=f) for f in range(dim)]


@dataclass
class KernelColumnOracle:
    """On-demand access to columns and the diagonal of a kernel matrix.

    Columns are computed lazily from the stored sample matrix at O(n * dim)
    per call; nothing is cached. ``data`` is expected in standardized units
    when used inside the fitting pipeline, but any float matrix works.
    """

    data: np.ndarray
    kernel: KernelFunction
    _sqnorms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        if self.data.ndim != 2:
            raise InputError(f"oracle data must be 2-d, got shape {self.data.shape}")
        if self.kernel.kind == "rank_one" and self.kernel.feature_index >= self.data.shape[1]:
            raise InputError(
                f"rank_one feature index {self.kernel.feature_index} out of range "
                f"for dimension {self.data.shape[1]}"
            )
        self._sqnorms = np.einsum("ij,ij->i", self.data, self.data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def column(self, i: int) -> np.ndarray:
        """Column i of the kernel matrix, i.e. k(x_m, x_i) for all m."""
        if not 0 <= i < self.n:
            raise InputError(f"column index {i} out of range [0, {self.n})")
        k = self.kernel
        if k.kind == "linear":
            return self.data @ self.data[i]
        if k.kind == "polynomial":
            return (self.data @ self.data[i] + k.bias) ** k.degree
        if k.kind == "gaussian":
            d2 = self._sqnorms + self._sqnorms[i] - 2.0 * (self.data @ self.data[i])
            np.maximum(d2, 0.0, out=d2)
            return np.exp(-k.gamma * d2)
        return self.data[:, k.feature_index] * self.data[i, k.feature_index]

    def columns(self, indices) -> np.ndarray:
        """Stack of kernel columns, shape (n, len(indices))."""
        return np.column_stack([self.column(int(i)) for i in indices])

    def diagonal(self) -> np.ndarray:
        """diag(K); entries are k(x_i, x_i) and therefore nonnegative."""
        k = self.kernel
        if k.kind == "linear":
            return self._sqnorms.copy()
        if k.kind == "polynomial":
            return (self._sqnorms + k.bias) ** k.degree
        if k.kind == "gaussian":
            return np.ones(self.n)
        return self.data[:, k.feature_index] ** 2

    def cross_columns(self, test_data: np.ndarray, indices) -> np.ndarray:
        """k(x*, x_i) for every test row x* and every training index i.

        Returns a (t, len(indices)) block; used for out-of-sample factors.
        """
        test_data = np.asarray(test_data, dtype=float)
        if test_data.ndim != 2 or test_data.shape[1] != self.data.shape[1]:
            raise InputError(
                f"test data has shape {test_data.shape}, expected (*, {self.data.shape[1]})"
            )
        return kernel_cross(self.kernel, test_data, self.data[np.asarray(indices, dtype=int)])
