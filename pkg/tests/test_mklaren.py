import warnings

import numpy as np
import pytest

from mklaren import (
    InputError,
    KernelColumnOracle,
    KernelFunction,
    Mklaren,
    candidate_column,
    candidate_scores,
    gaussian_bank,
    init_factor,
    lar_path,
    rank_one_bank,
    select_kernel_pivot,
    solve_coefficients,
)
from mklaren.mklaren import entry_advance
from conftest import dense_kernel, random_psd_oracle, standardized_design


def centered_unit(v, n=None):
    c = v - v.mean()
    return c / np.linalg.norm(c)


def explicit_scores(factor, r, u, lam):
    """Reference scoring that materializes each approximate column."""
    out = {}
    n = factor.n
    for i in range(n):
        if i in factor.active or factor.residual_diag[i] <= factor.pivot_floor:
            continue
        ghat = candidate_column(factor, i)
        centered = ghat - ghat.mean()
        norm = np.sqrt(centered @ centered + lam)
        if np.linalg.norm(centered) <= 1e-12:
            continue
        c_raw = (centered @ r) / norm
        a_raw = (centered @ u) / norm if u is not None else 0.0
        out[i] = (abs(c_raw), np.sign(c_raw if c_raw != 0 else 1.0) * a_raw)
    return out


# ------------------------------------------------------------- candidates


def test_candidate_column_exact_when_lookahead_covers_rank(rng):
    oracle = random_psd_oracle(rng, 20, rank=6)
    factor = init_factor(oracle, delta=6)
    for i in range(20):
        if factor.residual_diag[i] <= factor.pivot_floor:
            continue
        approx = candidate_column(factor, i)
        exact = factor.peek_column(oracle, i)
        assert np.abs(approx - exact).max() <= 1e-8


def test_candidate_column_zero_without_lookahead(rng):
    oracle = random_psd_oracle(rng, 10)
    factor = init_factor(oracle, delta=0)
    assert np.allclose(candidate_column(factor, 3), 0.0)


def test_candidate_column_rejects_explained_pivot(rng):
    oracle = random_psd_oracle(rng, 10, rank=1)
    factor = init_factor(oracle, delta=2)
    pivot = int(np.argmax(factor.residual_diag))
    factor.commit_column(pivot, factor.peek_column(oracle, pivot))
    with pytest.raises(InputError):
        candidate_column(factor, (pivot + 1) % 10)


def test_candidate_scores_match_explicit_columns(rng):
    for lam in (0.0, 0.7):
        for seed in range(4):
            r_ = np.random.default_rng(seed)
            oracle = random_psd_oracle(r_, 30, rank=12)
            factor = init_factor(oracle, delta=5)
            # commit a couple of pivots so the look-ahead block is nontrivial
            for _ in range(2):
                piv = int(np.argmax(np.where(np.isin(np.arange(30), factor.active),
                                             -np.inf, factor.residual_diag)))
                factor.commit_column(piv, factor.peek_column(oracle, piv))
            from mklaren import refresh_lookahead
            refresh_lookahead(factor, oracle)
            r = r_.normal(size=30)
            u = r_.normal(size=30)
            u /= np.linalg.norm(u)
            pivots, chat, ahat = candidate_scores(factor, r, u, lam=lam)
            reference = explicit_scores(factor, r, u, lam)
            assert set(pivots) == set(reference)
            for p, c, a in zip(pivots, chat, ahat):
                ref_c, ref_a = reference[p]
                assert abs(c - ref_c) <= 1e-10
                assert abs(a - ref_a) <= 1e-10


def test_candidate_scores_zero_for_orthogonal_residual(rng):
    oracle = random_psd_oracle(rng, 15, rank=15)
    factor = init_factor(oracle, delta=15)
    # constant residual is orthogonal to every centered column
    pivots, chat, _ = candidate_scores(factor, np.ones(15), None)
    assert chat.max() <= 1e-10


def test_first_iteration_argmax_matches_exact_correlations(rng):
    oracle = random_psd_oracle(rng, 25, rank=25)
    factor = init_factor(oracle, delta=25)
    y = rng.normal(size=25)
    y -= y.mean()
    pivots, chat, _ = candidate_scores(factor, y, None)
    exact = {}
    for i in pivots:
        g = factor.peek_column(oracle, int(i))
        h = centered_unit(g)
        exact[int(i)] = abs(h @ y)
    best_api = int(pivots[np.argmax(chat)])
    best_exact = max(exact, key=exact.get)
    assert best_api == best_exact


# -------------------------------------------------------------- selection


def test_select_tie_breaks_to_lowest_pivot():
    pivots = np.array([3, 5, 9])
    chat = np.array([0.2, 0.2, 0.2])
    ahat = np.array([0.1, 0.1, 0.1])
    choice = select_kernel_pivot([(0, pivots, chat, ahat)], C=0.9, A=0.5)
    assert choice[:2] == (0, 3)
    first = select_kernel_pivot([(0, pivots, chat, ahat)], C=None, A=None)
    assert first[:2] == (0, 3)


def test_select_prefers_correlated_kernel(rng):
    r = rng.normal(size=20)
    strong = (0, np.arange(3), np.array([0.9, 0.8, 0.7]), np.zeros(3))
    weak = (1, np.arange(3), np.array([1e-4, 2e-4, 5e-5]), np.zeros(3))
    q, i, _ = select_kernel_pivot([weak, strong], C=None, A=None)
    assert q == 0 and i == 0
    q, i, _ = select_kernel_pivot([weak, strong], C=1.0, A=0.5)
    assert q == 0


def test_select_no_admissible_returns_none():
    empty = (0, np.zeros(0, dtype=int), np.zeros(0), np.zeros(0))
    assert select_kernel_pivot([empty], C=None, A=None) is None
    stuck = (0, np.array([1]), np.array([2.0]), np.array([-0.9]))
    # advance is infinite only if both branches are nonpositive
    gam = entry_advance(0.5, 0.3, np.array([2.0]), np.array([-0.9]),
                        clamp_overcorrelated=False)
    assert not np.isfinite(gam[0])
    assert select_kernel_pivot([stuck], C=0.5, A=0.3) is not None  # clamp mode enters at 0


def test_signal_kernel_selected_most_often():
    hits = 0
    trials = 20
    for seed in range(trials):
        r_ = np.random.default_rng(seed)
        X = r_.normal(size=(60, 6))
        informative = KernelFunction("gaussian", gamma=0.5)
        noise = KernelFunction("rank_one", feature_index=5)
        oracle = KernelColumnOracle((X - X.mean(0)) / X.std(0), informative)
        K = dense_kernel(oracle)
        w = r_.normal(size=60)
        y = K @ w
        y = y / np.std(y) + 0.05 * r_.normal(size=60)
        model = Mklaren([informative, noise], rank=6, delta=8).fit(X, y)
        counts = model.pivot_counts()
        if counts[0] >= np.ceil(6 / 2):
            hits += 1
    assert hits >= int(0.8 * trials)


# ------------------------------------------------------------------- fit


def test_fit_rank_one_equivalent_to_lar(rng):
    for p in (10, 20):
        X, y = standardized_design(np.random.default_rng(p), 60, p)
        for K in (max(2, p // 2), p):
            model = Mklaren(rank_one_bank(p), rank=K, delta=1, lam=0.0,
                            standardize=False).fit(X, y)
            states = lar_path(X, y, max_steps=K)
            order = [q for q, _ in model.selection_order_]
            entered = states[-2].active if states[-1].terminal else states[-1].active
            assert order == entered
            assert np.abs(model.mu_ - states[-1].mu).max() <= 1e-8


def test_fit_constant_target(rng):
    X = rng.normal(size=(20, 3))
    y = np.full(20, 3.25)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = Mklaren(gaussian_bank([1.0]), rank=5, delta=3).fit(X, y)
    assert model.space_.k == 0
    assert np.allclose(model.mu_, 0.0)
    assert np.allclose(model.predict(X), 3.25)


def test_fit_full_rank_single_kernel_reaches_ols(rng):
    X = rng.normal(size=(25, 3))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=25)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = Mklaren(gaussian_bank([1.0]), rank=25, delta=6).fit(X, y)
    H = model.space_.matrix
    yc = y - y.mean()
    ols = H @ np.linalg.lstsq(H, yc, rcond=None)[0]
    assert np.abs(model.mu_ - ols).max() <= 1e-8


def test_fit_ridge_matches_closed_form(rng):
    X = rng.normal(size=(40, 3))
    y = X[:, 0] - 0.5 * X[:, 1] ** 2 + 0.1 * rng.normal(size=40)
    for lam in (0.01, 1.0, 100.0):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = Mklaren(gaussian_bank([0.5, 2.0]), rank=80, delta=6, lam=lam).fit(X, y)
        k = model.space_.k
        R = np.zeros((40, k))
        for q in range(2):
            G = model.factor_columns_[q]
            for local, pos in enumerate(model.column_positions_[q]):
                R[:, pos] = G[:, local] - model.space_.centering_means[pos]
        yc = y - y.mean()
        oracle = np.linalg.solve(R.T @ R + lam * np.eye(k), R.T @ yc)
        folded = np.asarray(model.space_.signs) * model.beta_ / np.asarray(model.space_.column_norms)
        assert np.abs(folded - oracle).max() <= 1e-6
        assert np.abs(R @ oracle - model.mu_).max() <= 1e-6


def test_fit_gram_inverse_matches_direct(rng):
    X = rng.normal(size=(50, 4))
    y = np.cos(X[:, 1]) + 0.1 * rng.normal(size=50)
    model = Mklaren(gaussian_bank([0.25, 1.0, 4.0]), rank=30, delta=5,
                    validate_gram=True).fit(X, y)
    assert len(model.diagnostics_.gram_inverse_dev) == 30
    assert max(model.diagnostics_.gram_inverse_dev) <= 1e-8


def test_fit_more_rank_than_pivots_warns(rng):
    X = rng.normal(size=(12, 2))
    y = X[:, 0] + 0.1 * rng.normal(size=12)
    with pytest.warns(UserWarning):
        model = Mklaren(rank_one_bank(2), rank=10, delta=1).fit(X, y)
    assert model.space_.k < 10
    assert model.status_ in ("exhausted", "residual_explained")


def test_fit_space_invariants(rng):
    X = rng.normal(size=(35, 4))
    y = X @ rng.normal(size=4) + 0.2 * rng.normal(size=35)
    model = Mklaren(gaussian_bank([0.5, 2.0]), rank=12, delta=4).fit(X, y)
    H = model.space_.matrix
    assert model.space_.k == sum(model.pivot_counts()) == 12
    assert np.abs(np.linalg.norm(H, axis=0) - 1.0).max() <= 1e-10
    assert np.abs(H[:35].sum(axis=0)).max() <= 1e-10 * 35
    assert len(set(model.selection_order_)) == 12
    assert np.abs(H @ model.beta_ - model.mu_aug_).max() <= 1e-8


def test_fit_residual_norm_monotone(rng):
    X = rng.normal(size=(30, 3))
    y = X[:, 0] * X[:, 1] + 0.1 * rng.normal(size=30)
    model = Mklaren(gaussian_bank([0.5, 1.0]), rank=15, delta=4).fit(X, y)
    levels = model.diagnostics_.corr_levels
    yc = np.linalg.norm(y - y.mean())
    # residual norm recomputed from gamma bookkeeping is monotone
    assert np.linalg.norm(model.residual_) <= yc + 1e-12


def test_fit_augmented_equicorrelation(rng):
    X = rng.normal(size=(30, 3))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=30)
    model = Mklaren(gaussian_bank([1.0]), rank=8, delta=8).fit(X, y)
    H = model.space_.matrix
    yc = y - y.mean()
    r = yc - model.mu_
    corr = np.abs(H.T @ r)
    assert corr.max() - corr.min() <= 1e-8


def test_solve_coefficients_cases(rng):
    H, _ = np.linalg.qr(rng.normal(size=(20, 5)))
    mu = H @ np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    beta = solve_coefficients(H, mu)
    assert np.abs(beta - [1, 2, 3, 4, 5]).max() <= 1e-10
    assert np.allclose(solve_coefficients(H, np.zeros(20)), 0.0)
    assert np.abs(beta - H.T @ mu).max() <= 1e-10
    G = rng.normal(size=(20, 3))
    mu2 = G @ np.array([1.0, -2.0, 0.5])
    assert np.abs(solve_coefficients(G, mu2) - [1.0, -2.0, 0.5]).max() <= 1e-10
    rank_deficient = np.column_stack([G, G[:, 0]])
    with pytest.warns(UserWarning):
        beta_rd = solve_coefficients(rank_deficient, mu2)
    assert np.abs(rank_deficient @ beta_rd - mu2).max() <= 1e-8


def test_lookahead_scores_degenerate_to_exact(rng):
    # delta at least the kernel rank makes approximate and exact scores equal
    oracle = random_psd_oracle(rng, 30, rank=5)
    factor = init_factor(oracle, delta=5)
    y = rng.normal(size=30)
    y -= y.mean()
    u = rng.normal(size=30)
    u /= np.linalg.norm(u)
    pivots, chat, ahat = candidate_scores(factor, y, u)
    for p, c, a in zip(pivots, chat, ahat):
        g = factor.peek_column(oracle, int(p))
        cg = g - g.mean()
        h = cg / np.linalg.norm(cg)
        c_exact = abs(h @ y)
        a_exact = np.sign(h @ y if h @ y != 0 else 1.0) * (h @ u)
        assert abs(c - c_exact) <= 1e-8
        assert abs(a - a_exact) <= 1e-8


def test_constructor_validation():
    with pytest.raises(InputError):
        Mklaren([], rank=3)
    with pytest.raises(InputError):
        Mklaren(gaussian_bank([1.0]), rank=0)
    with pytest.raises(InputError):
        Mklaren(gaussian_bank([1.0]), rank=2, delta=-1)
    with pytest.raises(InputError):
        Mklaren(gaussian_bank([1.0]), rank=2, lam=-0.5)
    with pytest.raises(InputError):
        Mklaren(["rbf"], rank=2)
