"""Brute-force least-angle reference, independent of the package internals.

Re-derives the equicorrelation set at every breakpoint by enumeration over
all columns, builds the equiangular direction with explicit inverses, and
finds the advance by scanning both branches of every outside column. Slow
and simple on purpose: it exists to check the production path algorithm.
"""

import numpy as np


def brute_force_lars(X, y, max_steps=None):
    """Return a list of breakpoints: dicts with active (set), mu, beta.

    The first breakpoint holds the single most-correlated column at mu = 0;
    each later one is recorded right after a new column becomes
    equicorrelated. When every column is active a final least-squares
    breakpoint is appended.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if max_steps is None:
        max_steps = p
    mu = np.zeros(n)
    breakpoints = []
    tol = 1e-9

    c = X.T @ (y - mu)
    if np.max(np.abs(c)) <= 1e-12 * max(np.linalg.norm(y), 1.0):
        return breakpoints
    breakpoints.append(_snapshot(X, mu, {int(np.argmax(np.abs(c)))}))

    while True:
        c = X.T @ (y - mu)
        C = np.max(np.abs(c))
        if C <= 1e-12 * max(np.linalg.norm(y), 1.0):
            break
        active = {j for j in range(p) if np.abs(c[j]) >= C - tol}
        if len(active) >= max_steps and len(active) < p:
            break
        idx = sorted(active)
        signs = np.sign(c[idx])
        Xa = X[:, idx] * signs
        Ginv = np.linalg.inv(Xa.T @ Xa)
        A = 1.0 / np.sqrt(Ginv.sum())
        u = Xa @ (A * Ginv @ np.ones(len(idx)))
        outside = [m for m in range(p) if m not in active]
        gammas = []
        for m in outside:
            a_m = X[:, m] @ u
            for num, den in ((C - c[m], A - a_m), (C + c[m], A + a_m)):
                if den != 0 and num / den > 0:
                    gammas.append(num / den)
        if outside and gammas:
            gamma = min(gammas)
            mu = mu + gamma * u
            c_new = X.T @ (y - mu)
            C_new = np.max(np.abs(c_new))
            new_active = {j for j in range(p) if np.abs(c_new[j]) >= C_new - tol}
            breakpoints.append(_snapshot(X, mu, new_active))
        else:
            mu = mu + (C / A) * u
            breakpoints.append(_snapshot(X, mu, active, terminal=True))
            break
    return breakpoints


def _snapshot(X, mu, active, terminal=False):
    idx = sorted(active)
    coef = np.zeros(X.shape[1])
    if idx:
        coef[idx] = np.linalg.lstsq(X[:, idx], mu, rcond=None)[0]
    return {"active": set(idx), "mu": mu.copy(), "beta": coef, "terminal": terminal}
