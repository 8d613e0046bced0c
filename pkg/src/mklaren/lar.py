"""Least-angle regression on a fixed, fully known design matrix.

Serves two roles: a reference path algorithm that the joint multi-kernel
solver must reproduce when every candidate column is known exactly, and the
fast path for banks of rank-one kernels where both coincide. Pure LAR only;
no LASSO sign-crossing drops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CollinearColumnsError, InputError

STANDARDIZE_TOL = 1e-8


@dataclass
class LarState:
    """Snapshot of the path at one breakpoint.

    ``active`` lists entered column indices in entry order with matching
    ``signs`` (orientation of each column inside the equiangular set).
    ``max_corr`` is the shared absolute correlation of the active columns
    with the residual.
    """

    mu: np.ndarray
    r: np.ndarray
    active: list[int]
    signs: list[int]
    max_corr: float
    beta: np.ndarray
    terminal: bool = False


def bisector(active_columns: np.ndarray):
    """Unit vector making equal acute angles with every (signed) active column.

    Returns ``(u, scale, weights)`` where ``active_columns @ weights == u``,
    ``norm(u) == 1`` and ``active_columns.T @ u`` is constant equal to
    ``scale``.
    """
    X = np.atleast_2d(np.asarray(active_columns, dtype=float))
    if X.shape[1] == 0:
        raise InputError("bisector of an empty active set is undefined")
    gram = X.T @ X
    ones = np.ones(X.shape[1])
    try:
        w = np.linalg.solve(gram, ones)
    except np.linalg.LinAlgError as exc:
        raise CollinearColumnsError("active columns are collinear") from exc
    s = float(ones @ w)
    if s <= 0:
        raise CollinearColumnsError("active Gram is numerically indefinite")
    scale = 1.0 / np.sqrt(s)
    weights = scale * w
    u = X @ weights
    return u, scale, weights


def step_size(C: float, A: float, correlations, bisector_dots):
    """Smallest positive advance after which an inactive column joins.

    Scans both orientations of every candidate: (C - c)/(A - a) and
    (C + c)/(A + a). With no candidates left the advance is C / A, which
    lands on the least-squares fit of the active set. Ties break toward the
    lowest candidate position. Returns ``(gamma, entering)`` where
    ``entering`` indexes into ``correlations`` (None for the final step).
    """
    c = np.asarray(correlations, dtype=float).ravel()
    a = np.asarray(bisector_dots, dtype=float).ravel()
    if c.size != a.size:
        raise InputError(f"correlations and bisector dots disagree: {c.size} vs {a.size}")
    best = np.inf
    entering = None
    for m in range(c.size):
        gamma_m = np.inf
        for num, den in ((C - c[m], A - a[m]), (C + c[m], A + a[m])):
            if den != 0.0:
                val = num / den
                if 0.0 < val < gamma_m:
                    gamma_m = val
        if gamma_m < best - 1e-15:
            best = gamma_m
            entering = m
    if entering is None:
        # Empty candidate set, or every candidate skipped for lack of a
        # positive branch: advance to the least-squares fit of the active set.
        return float(C / A), None
    return float(best), entering


def validate_standardized(X: np.ndarray, y: np.ndarray) -> None:
    """Require zero-mean unit-norm columns and a centered target."""
    norms = np.linalg.norm(X, axis=0)
    if np.any(np.abs(norms - 1.0) > STANDARDIZE_TOL):
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise InputError(f"column {worst} has norm {norms[worst]:.6g}; expected unit norm")
    means = X.sum(axis=0)
    if np.any(np.abs(means) > STANDARDIZE_TOL):
        worst = int(np.argmax(np.abs(means)))
        raise InputError(f"column {worst} has mean {means[worst] / len(X):.3g}; expected zero mean")
    if abs(float(y.sum())) > STANDARDIZE_TOL:
        raise InputError(f"target sum {float(y.sum()):.3g} is not centered")


def lar_path(X: np.ndarray, y: np.ndarray, max_steps: int | None = None) -> list[LarState]:
    """Full least-angle path over standardized columns.

    Emits one :class:`LarState` per entered column (the breakpoint right
    after entry) and, when every column has entered, a terminal state at the
    least-squares solution. ``max_steps`` caps the number of entries.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InputError(f"X {X.shape} and y {y.shape} are incompatible")
    validate_standardized(X, y)
    n, p = X.shape
    if max_steps is None:
        max_steps = p
    if max_steps < 0:
        raise InputError(f"max_steps must be >= 0, got {max_steps}")

    mu = np.zeros(n)
    r = y.copy()
    beta = np.zeros(p)
    active: list[int] = []
    signs: list[int] = []
    states: list[LarState] = []
    stop_level = 1e-12 * max(np.linalg.norm(y), 1.0)
    if max_steps == 0:
        return states

    corr = X.T @ r
    if np.max(np.abs(corr)) <= stop_level:
        return states

    first = int(np.argmax(np.abs(corr)))
    active.append(first)
    signs.append(1 if corr[first] >= 0 else -1)
    states.append(LarState(mu.copy(), r.copy(), list(active), list(signs),
                           float(np.abs(corr[first])), beta.copy()))

    while True:
        corr = X.T @ r
        C = float(np.max(np.abs(corr)))
        if C <= stop_level:
            break
        signed = X[:, active] * np.asarray(signs, dtype=float)
        u, A, weights = bisector(signed)
        inactive = [m for m in range(p) if m not in set(active)]
        if inactive and len(active) >= max_steps:
            break
        gamma, pos = step_size(C, A, corr[inactive], X[:, inactive].T @ u)
        beta[active] += gamma * np.asarray(signs, dtype=float) * weights
        mu += gamma * u
        r -= gamma * u
        if pos is None:
            # Candidate set empty (or all skipped): the step above landed on
            # the least-squares fit of the active columns.
            states.append(LarState(mu.copy(), r.copy(), list(active), list(signs),
                                   float(np.max(np.abs(X.T @ r))), beta.copy(), terminal=True))
            break
        entering = inactive[pos]
        new_corr = float(X[:, entering] @ r)
        active.append(entering)
        signs.append(1 if new_corr >= 0 else -1)
        states.append(LarState(mu.copy(), r.copy(), list(active), list(signs),
                               float(np.max(np.abs(X.T @ r))), beta.copy()))
    return states
