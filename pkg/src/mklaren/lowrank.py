"""Incomplete Cholesky decomposition with look-ahead columns, and the
Nystrom approximation built from the same column oracle.

A :class:`CholeskyFactor` is single-writer; snapshots of its arrays may be
read concurrently. Both decompositions touch the kernel matrix only through
single-column evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegeneratePivotError, InputError
from .kernels import KernelColumnOracle

# Pivots whose residual diagonal falls below this fraction of the initial
# maximum are inadmissible; selecting them would divide by ~0 in the
# Cholesky step.
PIVOT_RTOL = 1e-10


@dataclass
class CholeskyFactor:
    """State of one kernel's incomplete decomposition.

    ``columns`` holds the committed pivot columns (n x j). ``lookahead``
    holds up to ``delta`` speculative columns computed by continuing the
    decomposition past the committed part with max-residual pivoting; they
    approximate not-yet-committed columns and are rebuilt whenever a commit
    invalidates them. ``residual_diag`` tracks diag(K - columns @ columns.T),
    a lower bound on what each remaining pivot can still explain.
    """

    n: int
    delta: int
    columns: np.ndarray
    active: list[int]
    residual_diag: np.ndarray
    lookahead: np.ndarray
    lookahead_pivots: list[int] = field(default_factory=list)
    pivot_floor: float = 0.0
    version: int = 0

    @property
    def rank(self) -> int:
        """Number of committed columns."""
        return self.columns.shape[1]

    def matrix(self) -> np.ndarray:
        """Committed columns and look-ahead block stored contiguously."""
        return np.hstack([self.columns, self.lookahead])

    def approximation(self) -> np.ndarray:
        """Dense committed approximation: columns @ columns.T."""
        return self.columns @ self.columns.T

    def admissible(self, i: int) -> bool:
        return i not in set(self.active) and self.residual_diag[i] > self.pivot_floor

    def peek_column(self, oracle: KernelColumnOracle, pivot: int) -> np.ndarray:
        """Exact next Cholesky column for ``pivot``, without committing it."""
        if pivot in set(self.active):
            raise InputError(f"pivot {pivot} already in the active set")
        dp = self.residual_diag[pivot]
        if dp <= self.pivot_floor:
            raise DegeneratePivotError(
                f"pivot {pivot} residual {dp:.3e} at or below floor {self.pivot_floor:.3e}"
            )
        root = np.sqrt(dp)
        g = (oracle.column(pivot) - self.columns @ self.columns[pivot]) / root
        g[pivot] = root
        return g

    def commit_column(self, pivot: int, g: np.ndarray) -> None:
        """Append a column obtained from :meth:`peek_column` for ``pivot``."""
        self.columns = np.hstack([self.columns, g[:, None]])
        self.residual_diag = self.residual_diag - g * g
        self.residual_diag[pivot] = 0.0
        self.active.append(int(pivot))
        self.version += 1


def init_factor(oracle: KernelColumnOracle, delta: int) -> CholeskyFactor:
    """Fresh factor with residual diagonal diag(K) and a filled look-ahead block."""
    if delta < 0:
        raise InputError(f"delta must be >= 0, got {delta}")
    d = oracle.diagonal().astype(float)
    factor = CholeskyFactor(
        n=oracle.n,
        delta=delta,
        columns=np.zeros((oracle.n, 0)),
        active=[],
        residual_diag=d,
        lookahead=np.zeros((oracle.n, 0)),
        pivot_floor=PIVOT_RTOL * max(float(d.max(initial=0.0)), np.finfo(float).tiny),
    )
    refresh_lookahead(factor, oracle)
    return factor


def cholesky_step(factor: CholeskyFactor, oracle: KernelColumnOracle, pivot: int) -> CholeskyFactor:
    """Commit one exact pivot column to the factor (in place) and return it."""
    g = factor.peek_column(oracle, pivot)
    factor.commit_column(pivot, g)
    return factor


def refresh_lookahead(factor: CholeskyFactor, oracle: KernelColumnOracle) -> CholeskyFactor:
    """Rebuild the look-ahead block by continuing the decomposition.

    Runs up to ``delta`` standard max-residual Cholesky steps past the
    committed columns without touching them; stops early when no admissible
    pivot remains, so the block can be narrower than ``delta``. Cost
    O(n * delta^2) plus ``delta`` kernel column evaluations.
    """
    n = factor.n
    delta = factor.delta
    committed = factor.columns
    d = factor.residual_diag.copy()
    if factor.active:
        d[np.asarray(factor.active)] = -np.inf
    block = np.zeros((n, delta))
    pivots: list[int] = []
    for t in range(delta):
        piv = int(np.argmax(d))
        if d[piv] <= factor.pivot_floor:
            break
        root = np.sqrt(d[piv])
        g = oracle.column(piv) - committed @ committed[piv]
        if t:
            g -= block[:, :t] @ block[piv, :t]
        g /= root
        g[piv] = root
        block[:, t] = g
        d -= g * g
        d[piv] = -np.inf
        pivots.append(piv)
    factor.lookahead = block[:, : len(pivots)]
    factor.lookahead_pivots = pivots
    factor.version += 1
    return factor


def incomplete_cholesky(
    oracle: KernelColumnOracle,
    rank: int,
    pivot_order=None,
) -> CholeskyFactor:
    """Greedy incomplete Cholesky decomposition of rank at most ``rank``.

    Pivots are chosen by the current maximum of the residual diagonal
    (lowest index on ties) unless an explicit ``pivot_order`` is given.
    Stops early once every remaining pivot falls below the admissibility
    floor, returning fewer columns.
    """
    if not 1 <= rank <= oracle.n:
        raise InputError(f"rank must be in [1, {oracle.n}], got {rank}")
    factor = CholeskyFactor(
        n=oracle.n,
        delta=0,
        columns=np.zeros((oracle.n, 0)),
        active=[],
        residual_diag=oracle.diagonal().astype(float),
        lookahead=np.zeros((oracle.n, 0)),
    )
    factor.pivot_floor = PIVOT_RTOL * max(float(factor.residual_diag.max(initial=0.0)), np.finfo(float).tiny)
    order = None if pivot_order is None else [int(i) for i in pivot_order]
    for j in range(rank):
        if order is not None:
            if j >= len(order):
                break
            piv = order[j]
            if not factor.admissible(piv):
                raise DegeneratePivotError(
                    f"forced pivot {piv} inadmissible at step {j} "
                    f"(residual {factor.residual_diag[piv]:.3e})"
                )
        else:
            d = factor.residual_diag.copy()
            d[list(factor.active)] = -np.inf
            piv = int(np.argmax(d))
            if d[piv] <= factor.pivot_floor:
                break
        cholesky_step(factor, oracle, piv)
    return factor


@dataclass
class NystromApproximation:
    """Implicit low-rank reconstruction K(:, A) @ inv(K(A, A)) @ K(A, :).

    ``block`` is K(:, A); ``inv_core`` is the (possibly jittered) inverse of
    K(A, A); ``jittered`` flags whether regularization was needed.
    """

    block: np.ndarray
    inv_core: np.ndarray
    active: list[int]
    jittered: bool = False

    def dense(self) -> np.ndarray:
        return self.block @ self.inv_core @ self.block.T

    def feature_map(self) -> np.ndarray:
        """F with F @ F.T equal to the reconstruction: K(:, A) @ inv_core^(1/2)."""
        w, v = np.linalg.eigh(self.inv_core)
        w = np.clip(w, 0.0, None)
        return self.block @ (v * np.sqrt(w)) @ v.T


def solve_psd(mat: np.ndarray, rhs: np.ndarray, jitter_scale: float = 1e-10):
    """Solve a symmetric PSD system, adding diagonal jitter if factorization fails.

    Returns (solution, jittered).
    """
    mat = np.asarray(mat, dtype=float)
    try:
        c, low = scipy.linalg.cho_factor(mat, check_finite=False)
        diag = np.abs(np.diag(c))
        # potrf can succeed on a numerically singular matrix; reject factors
        # whose diagonal collapses instead of returning a garbage inverse.
        if diag.min() > 1e-7 * max(diag.max(), np.finfo(float).tiny):
            return scipy.linalg.cho_solve((c, low), rhs, check_finite=False), False
    except np.linalg.LinAlgError:
        pass
    jitter = jitter_scale * max(np.trace(mat) / mat.shape[0], np.finfo(float).tiny)
    c, low = scipy.linalg.cho_factor(mat + jitter * np.eye(mat.shape[0]), check_finite=False)
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False), True


def nystrom_approximation(oracle: KernelColumnOracle, active) -> NystromApproximation:
    """Nystrom reconstruction from an arbitrary active set of pivot indices."""
    active = [int(i) for i in active]
    if not active:
        raise InputError("active set must be nonempty")
    if len(set(active)) != len(active):
        raise InputError(f"active set has repeated indices: {active}")
    block = oracle.columns(active)
    core = block[active]
    core = 0.5 * (core + core.T)
    inv_core, jittered = solve_psd(core, np.eye(len(active)))
    return NystromApproximation(block=block, inv_core=inv_core, active=active, jittered=jittered)
