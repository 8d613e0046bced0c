import numpy as np
import pytest


def random_psd_oracle(rng, n, rank=None, jitter=0.0):
    """A linear-kernel oracle whose matrix is random PSD of the given rank."""
    from mklaren import KernelColumnOracle, KernelFunction

    rank = n if rank is None else rank
    B = rng.normal(size=(n, rank))
    if jitter:
        # Widen the spectrum so the matrix is comfortably full rank.
        B = np.hstack([B, jitter * np.eye(n)]) if rank >= n else B
    return KernelColumnOracle(B, KernelFunction("linear"))


def dense_kernel(oracle):
    """Materialize the oracle's matrix column by column."""
    return np.column_stack([oracle.column(i) for i in range(oracle.n)])


def standardized_design(rng, n, p):
    """Zero-mean unit-norm columns plus a centered response."""
    X = rng.normal(size=(n, p))
    X -= X.mean(axis=0)
    X /= np.linalg.norm(X, axis=0)
    w = np.zeros(p)
    w[: max(1, p // 3)] = rng.normal(size=max(1, p // 3)) * 2.0
    y = X @ w + 0.05 * rng.normal(size=n)
    return X, y - y.mean()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
