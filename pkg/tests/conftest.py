import numpy as np
import pytest

from ptcbf.qp import QPProblem


def random_feasible_qp(rng, n=None, m=None, psd=False):
    """Dense QP with a known feasible point; H is positive definite unless ``psd``."""
    n = n or int(rng.integers(1, 7))
    m = m or int(rng.integers(1, 13))
    M = rng.normal(size=(n, n))
    H = M @ M.T + (0.0 if psd else 0.1) * np.eye(n)
    if psd and n > 1:
        # drop one direction so H is singular
        w, V = np.linalg.eigh(H)
        w[0] = 0.0
        H = (V * w) @ V.T
        H = 0.5 * (H + H.T)
    f = rng.normal(size=n) * 3
    A = rng.normal(size=(m, n))
    z_feas = rng.normal(size=n)
    b = A @ z_feas + rng.uniform(0.0, 1.0, size=m)
    if psd:
        # keep the problem bounded
        A = np.vstack([A, np.eye(n), -np.eye(n)])
        b = np.concatenate([b, np.abs(z_feas) + 5, np.abs(z_feas) + 5])
    return QPProblem(H, f, A, b)


def fd_gradient(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
