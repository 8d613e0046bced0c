"""Joint low-rank decomposition of several kernels with least-angle pivot
selection.

One shared regression line is advanced while every kernel is decomposed
incrementally. At each iteration the (kernel, pivot) pair whose column would
enter a least-angle path soonest is committed; candidate columns are scored
through cheap look-ahead approximations so the full kernel matrices are
never formed. With ``lam > 0`` the path runs in a row-augmented space whose
least-squares terminus is the l2-regularized solution.

Candidate scoring is read-only over factor snapshots and may run in
parallel across kernels; commits and path updates are sequential.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InputError
from .kernels import KernelColumnOracle, KernelFunction
from . import inference
from .lowrank import CholeskyFactor, init_factor, refresh_lookahead

# Candidates whose centered look-ahead column has norm at or below this are
# constant or already explained and cannot be normalized.
COLUMN_NORM_FLOOR = 1e-12
# Schur-complement floor under which a candidate column is treated as
# linearly dependent on the committed ones and skipped.
DEPENDENT_COLUMN_FLOOR = 1e-10


@dataclass
class CombinedFeatureSpace:
    """Centered, normalized, sign-corrected stack of committed columns.

    ``matrix`` has n rows, plus one extra row per budgeted column when the
    space is ridge-augmented (the extra coordinate of column l lives at row
    n + l). ``provenance[l]`` records which (kernel, pivot) produced column
    l; ``signs``, ``column_norms`` and ``centering_means`` hold the
    statistics needed to rebuild columns for unseen data.
    """

    matrix: np.ndarray
    n: int
    provenance: list[tuple[int, int]] = field(default_factory=list)
    signs: list[int] = field(default_factory=list)
    column_norms: list[float] = field(default_factory=list)
    centering_means: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.matrix.shape[1]


def candidate_column(factor: CholeskyFactor, i: int) -> np.ndarray:
    """Look-ahead approximation of the next Cholesky column for pivot ``i``.

    Materializes the approximate column; the fitting loop never does this
    per candidate and works through the Gram identities in
    :func:`candidate_scores` instead.
    """
    if i in set(factor.active):
        raise InputError(f"pivot {i} already committed")
    d = factor.residual_diag[i]
    if d <= factor.pivot_floor:
        raise InputError(f"pivot {i} residual {d:.3e} below admissibility floor")
    B = factor.lookahead
    if B.shape[1] == 0:
        return np.zeros(factor.n)
    return B @ B[i] / np.sqrt(d)


def candidate_scores(factor: CholeskyFactor, r: np.ndarray, u: np.ndarray | None = None,
                     lam: float = 0.0):
    """Approximate correlation and bisector alignment for every open pivot.

    Returns ``(pivots, chat, ahat)``. ``chat`` is the absolute correlation
    of the centered, normalized candidate column with ``r``; ``ahat`` is its
    alignment with ``u`` under the orientation that makes the correlation
    nonnegative. Both come from delta x delta Gram identities after O(n)
    shared precomputation, so the 1/sqrt(d) factor of the raw candidate
    column cancels. With ``lam > 0`` norms include the ridge-augmentation
    coordinate. Candidates whose centered column norm is at or below 1e-12
    are dropped (constant or fully explained columns).
    """
    n = factor.n
    d = factor.residual_diag
    open_mask = d > factor.pivot_floor
    if factor.active:
        open_mask[np.asarray(factor.active)] = False
    pivots = np.flatnonzero(open_mask)
    if pivots.size == 0:
        return pivots, np.zeros(0), np.zeros(0)
    B = factor.lookahead
    if B.shape[1] == 0:
        # No look-ahead information: scores are identically zero.
        return pivots, np.zeros(pivots.size), np.zeros(pivots.size)

    r = np.asarray(r, dtype=float)[:n]
    col_sums = B.sum(axis=0)
    gram = B.T @ B - np.outer(col_sums, col_sums) / n
    w_r = B.T @ r - (r.sum() / n) * col_sums
    rows = B[pivots]
    quad = np.einsum("ij,jk,ik->i", rows, gram, rows)
    np.maximum(quad, 0.0, out=quad)

    # quad equals d * ||P ghat||^2 for the true (1/sqrt(d))-scaled column.
    keep = quad > COLUMN_NORM_FLOOR**2 * np.maximum(d[pivots], np.finfo(float).tiny)
    pivots = pivots[keep]
    if pivots.size == 0:
        return pivots, np.zeros(0), np.zeros(0)
    rows = rows[keep]
    quad = quad[keep]

    norm2 = quad + lam * d[pivots]
    inv_norm = 1.0 / np.sqrt(norm2)
    c_raw = (rows @ w_r) * inv_norm
    chat = np.abs(c_raw)
    if u is None:
        ahat = np.zeros(pivots.size)
    else:
        u = np.asarray(u, dtype=float)[:n]
        w_u = B.T @ u - (u.sum() / n) * col_sums
        ahat = np.sign(np.where(c_raw == 0.0, 1.0, c_raw)) * (rows @ w_u) * inv_norm
    return pivots, chat, ahat


def entry_advance(C: float, A: float, chat, ahat, clamp_overcorrelated: bool = True):
    """Least-angle advance at which each candidate would join the path.

    Vectorized min over the positive branches (C -+ c)/(A -+ a); candidates
    with no positive branch get inf. With ``clamp_overcorrelated`` (the
    selection-ranking mode), candidates already at or above the correlation
    level C enter immediately (advance 0); the commit step instead keeps the
    raw positive root, which makes such a column join the equiangular set at
    the negated level and preserves equicorrelation.
    """
    chat = np.asarray(chat, dtype=float)
    ahat = np.asarray(ahat, dtype=float)
    out = np.full(chat.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for num, den in ((C - chat, A - ahat), (C + chat, A + ahat)):
            val = num / den
            val = np.where((den != 0.0) & (val > 0.0), val, np.inf)
            np.minimum(out, val, out=out)
    if clamp_overcorrelated:
        out[chat >= C - 1e-15] = 0.0
    return out


def select_kernel_pivot(scored, C: float | None, A: float | None):
    """Pick the (kernel, pivot) whose candidate enters the path first.

    ``scored`` is a sequence of (kernel_index, pivots, chat, ahat) tuples.
    On the first iteration (``C is None``) the maximum-correlation candidate
    wins; afterwards the minimum entry advance does. Ties break toward the
    lowest kernel index, then the lowest pivot index. Returns
    ``(q, pivot, chat_sel)`` or ``None`` when no candidate is admissible.
    """
    best = None
    if C is None:
        best_val = -np.inf
        for q, pivots, chat, _ in scored:
            if pivots.size == 0:
                continue
            m = int(np.argmax(chat))
            if chat[m] > best_val:
                best_val = float(chat[m])
                best = (q, int(pivots[m]), float(chat[m]))
        return best
    best_val = np.inf
    for q, pivots, chat, ahat in scored:
        if pivots.size == 0:
            continue
        gam = entry_advance(C, A, chat, ahat)
        m = int(np.argmin(gam))
        if gam[m] < best_val:
            best_val = float(gam[m])
            best = (q, int(pivots[m]), float(chat[m]))
    if best is not None and not np.isfinite(best_val):
        return None
    return best


def solve_coefficients(H: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Coefficients of ``mu`` in the columns of ``H`` via thin QR.

    ``mu`` lies in span(H) by construction of the path, so the triangular
    solve is exact; a rank-deficient ``H`` falls back to a minimum-norm
    least-squares solve with a warning.
    """
    if H.shape[1] == 0:
        return np.zeros(0)
    Q, R = np.linalg.qr(H)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        warnings.warn("combined feature space is rank deficient; using minimum-norm solve")
        return np.linalg.lstsq(H, mu, rcond=None)[0]
    return scipy.linalg.solve_triangular(R, Q.T @ mu, check_finite=False)


class _GramInverse:
    """Running inverse of H_active^T H_active, grown one column at a time.

    Appending a column is a bordering (rank-one style) update costing
    O(k^2); ``schur(b)`` exposes the complement used both for the update and
    for detecting dependent candidate columns.
    """

    def __init__(self):
        self.inv = np.zeros((0, 0))

    @property
    def k(self) -> int:
        return self.inv.shape[0]

    def schur(self, b: np.ndarray, c: float) -> float:
        if self.k == 0:
            return float(c)
        return float(c - b @ self.inv @ b)

    def append(self, b: np.ndarray, c: float) -> None:
        if self.k == 0:
            self.inv = np.array([[1.0 / c]])
            return
        v = self.inv @ b
        s = float(c - b @ v)
        top = self.inv + np.outer(v, v) / s
        self.inv = np.block([[top, -v[:, None] / s], [-v[None, :] / s, np.array([[1.0 / s]])]])


@dataclass
class FitDiagnostics:
    gamma_steps: list[float] = field(default_factory=list)
    corr_levels: list[float] = field(default_factory=list)
    gram_inverse_dev: list[float] = field(default_factory=list)
    skipped: list[tuple[int, int, str]] = field(default_factory=list)


class Mklaren:
    """Multiple-kernel low-rank regression model.

    Parameters
    ----------
    kernels : sequence of KernelFunction
        The kernel bank; each kernel is decomposed incrementally.
    rank : int
        Total budget of committed columns across all kernels.
    delta : int, default 10
        Number of look-ahead columns per kernel used to score candidates.
    lam : float, default 0.0
        l2 regularization strength; fitted by running the path in a
        row-augmented space.
    standardize : bool, default True
        Fit per-feature mean/scale on the training data and apply them
        before kernel evaluation (also to prediction inputs later).
    validate_gram : bool, default False
        Recompute the running Gram inverse directly at every step and record
        the deviation in ``diagnostics_.gram_inverse_dev``.
    """

    def __init__(self, kernels, rank: int, delta: int = 10, lam: float = 0.0,
                 standardize: bool = True, validate_gram: bool = False):
        self.kernels = list(kernels)
        self.rank = int(rank)
        self.delta = int(delta)
        self.lam = float(lam)
        self.standardize = bool(standardize)
        self.validate_gram = bool(validate_gram)
        if not self.kernels:
            raise InputError("kernel bank is empty")
        if not all(isinstance(k, KernelFunction) for k in self.kernels):
            raise InputError("kernels must be KernelFunction instances")
        if self.rank < 1:
            raise InputError(f"rank must be >= 1, got {self.rank}")
        if self.delta < 0:
            raise InputError(f"delta must be >= 0, got {self.delta}")
        if self.lam < 0:
            raise InputError(f"lam must be >= 0, got {self.lam}")

    # ------------------------------------------------------------------ fit

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2:
            raise InputError(f"X must be 2-d, got shape {X.shape}")
        n = X.shape[0]
        if y.size != n:
            raise InputError(f"X has {n} rows but y has {y.size} entries")
        if n < 2:
            raise InputError("need at least 2 samples")

        if self.standardize:
            self.feature_means_ = X.mean(axis=0)
            scales = X.std(axis=0)
            scales[scales == 0.0] = 1.0
            self.feature_scales_ = scales
        else:
            self.feature_means_ = np.zeros(X.shape[1])
            self.feature_scales_ = np.ones(X.shape[1])
        Xs = (X - self.feature_means_) / self.feature_scales_

        self.y_mean_ = float(y.mean())
        yc = y - self.y_mean_

        oracles = [KernelColumnOracle(Xs, k) for k in self.kernels]
        factors = [init_factor(o, self.delta) for o in oracles]

        n_rows = n + self.rank if self.lam > 0 else n
        space = CombinedFeatureSpace(matrix=np.zeros((n_rows, 0)), n=n)
        y_work = np.concatenate([yc, np.zeros(n_rows - n)])
        r = y_work.copy()
        mu = np.zeros(n_rows)
        gram = _GramInverse()
        diag = FitDiagnostics()
        blacklist: list[set[int]] = [set() for _ in factors]
        stop_level = 1e-12 * max(np.linalg.norm(yc), 0.0)
        status = "rank_reached"
        C = None
        A = None
        u = np.zeros(n_rows)

        while space.k < self.rank:
            if space.k > 0:
                corr = space.matrix.T @ r
                C = float(np.max(np.abs(corr)))
                u, A = self._bisector(space.matrix, gram, corr)
            committed = self._select_and_commit(
                factors, oracles, space, gram, r, u, C, A, blacklist, diag, stop_level)
            if committed is None:
                status = ("residual_explained" if self._any_admissible(factors, blacklist)
                          else "exhausted")
                break
            h, chat_sel = committed
            # Advance the path so the new column joins the equiangular set.
            if space.k > 1:
                c_exact = float(h @ r)
                a_exact = float(h @ u)
                gamma = entry_advance(C, A, [c_exact], [a_exact],
                                      clamp_overcorrelated=False)[0]
                if not np.isfinite(gamma):
                    gamma = 0.0
                mu += gamma * u
                r -= gamma * u
                diag.gamma_steps.append(float(gamma))
            diag.corr_levels.append(float(np.max(np.abs(space.matrix.T @ r))))
            if self.validate_gram:
                direct = np.linalg.inv(space.matrix.T @ space.matrix)
                diag.gram_inverse_dev.append(float(np.max(np.abs(direct - gram.inv))))

        take_terminal = status in ("exhausted", "residual_explained") or (
            status == "rank_reached"
            and not self._any_admissible(factors, blacklist)
        )
        if space.k > 0 and take_terminal:
            # With no further candidates the advance C / A along the full
            # bisector lands on the least-squares fit of H; computing that
            # fit directly is identical under exact equicorrelation and
            # stays exact when approximate selection has perturbed the path.
            mu = space.matrix @ solve_coefficients(space.matrix, y_work)
            r = y_work - mu

        if space.k < self.rank and status == "rank_reached":
            status = "exhausted"
        if space.k < self.rank:
            warnings.warn(f"fit stopped after {space.k} of {self.rank} columns ({status})")

        self.space_ = space
        self.factors_ = factors
        self.oracles_ = oracles
        self.mu_aug_ = mu
        self.mu_ = mu[:n]
        self.residual_ = r[:n]
        self.beta_ = solve_coefficients(space.matrix, mu)
        self.status_ = status
        self.diagnostics_ = diag
        self.n_train_ = n
        self.active_sets_ = [list(f.active) for f in factors]
        self.factor_columns_ = [f.columns for f in factors]
        self.active_data_ = [Xs[f.active] if f.active else np.zeros((0, Xs.shape[1]))
                             for f in factors]
        self.transforms_ = []
        for f, o in zip(factors, oracles):
            if not f.active:
                self.transforms_.append(np.zeros((0, 0)))
                continue
            block = o.columns(f.active)
            self.transforms_.append(
                inference.compute_transform(f.columns, block[f.active], block.T))
        self._column_positions()
        return self

    # ------------------------------------------------------- fit internals

    def _bisector(self, H, gram: _GramInverse, corr):
        """Equiangular direction of the committed columns, oriented by ``corr``.

        Orientations come from the current residual correlations, so a step
        that pushes the whole equicorrelated level through zero stays
        consistent on the next iteration.
        """
        s = np.where(np.asarray(corr, dtype=float) >= 0.0, 1.0, -1.0)
        v = gram.inv @ s
        quad = float(s @ v)
        if quad <= 0:
            raise InputError("committed columns are numerically collinear")
        A = 1.0 / np.sqrt(quad)
        return A * (H @ v), A

    def _scores(self, factors, r, u, blacklist):
        scored = []
        for q, factor in enumerate(factors):
            pivots, chat, ahat = candidate_scores(factor, r, u, self.lam)
            if blacklist[q] and pivots.size:
                keep = np.array([p not in blacklist[q] for p in pivots])
                pivots, chat, ahat = pivots[keep], chat[keep], ahat[keep]
            scored.append((q, pivots, chat, ahat))
        return scored

    def _select_and_commit(self, factors, oracles, space, gram, r, u, C, A,
                           blacklist, diag, stop_level):
        """Score, select, and commit one column; None when nothing is admissible."""
        n = space.n
        while True:
            scored = self._scores(factors, r[:n], u[:n] if C is not None else None, blacklist)
            choice = select_kernel_pivot(scored, C, A)
            if choice is None:
                return None
            q, i, chat_sel = choice
            max_chat = max((float(ch.max()) for _, p, ch, _ in scored if p.size), default=0.0)
            if max_chat <= stop_level and any(f.lookahead.shape[1] > 0 for f in factors):
                return None
            factor = factors[q]
            g = factor.peek_column(oracles[q], i)
            mean_g = float(g.mean())
            centered = g - mean_g
            base_norm2 = float(centered @ centered)
            if base_norm2 <= COLUMN_NORM_FLOOR**2:
                blacklist[q].add(i)
                diag.skipped.append((q, i, "constant_column"))
                continue
            norm = float(np.sqrt(base_norm2 + self.lam))
            col = np.zeros(space.matrix.shape[0])
            col[:n] = centered
            if self.lam > 0:
                col[n + space.k] = np.sqrt(self.lam)
            col /= norm
            sign = 1 if float(col @ r) >= 0 else -1
            col *= sign
            b = space.matrix.T @ col
            if gram.schur(b, 1.0) <= DEPENDENT_COLUMN_FLOOR:
                blacklist[q].add(i)
                diag.skipped.append((q, i, "dependent_column"))
                continue
            factor.commit_column(i, g)
            refresh_lookahead(factor, oracles[q])
            space.matrix = np.hstack([space.matrix, col[:, None]])
            space.provenance.append((q, i))
            space.signs.append(sign)
            space.column_norms.append(norm)
            space.centering_means.append(mean_g)
            gram.append(b, 1.0)
            return col, chat_sel

    def _any_admissible(self, factors, blacklist) -> bool:
        for q, f in enumerate(factors):
            d = f.residual_diag.copy()
            if f.active:
                d[np.asarray(f.active)] = -np.inf
            if blacklist[q]:
                d[np.asarray(sorted(blacklist[q]))] = -np.inf
            if np.any(d > f.pivot_floor):
                return True
        return False

    def _column_positions(self):
        positions = [[] for _ in self.kernels]
        for pos, (q, _) in enumerate(self.space_.provenance):
            positions[q].append(pos)
        self.column_positions_ = positions

    # ------------------------------------------------------------- queries

    @property
    def selection_order_(self):
        """(kernel index, pivot index) per committed column, in commit order."""
        return list(self.space_.provenance)

    def pivot_counts(self):
        return [len(a) for a in self.active_sets_]

    def predict(self, X):
        return inference.predict(self, X)

    def dual_coefficients(self):
        """Sample-space weights consistent with the raw centered factor columns."""
        return inference.model_dual_coefficients(self)

    def primal_weights(self, feature_map):
        return inference.primal_weights(feature_map, self.dual_coefficients())

    def save(self, path):
        inference.save_model(self, path)

    @classmethod
    def load(cls, path):
        return inference.load_model(path)
