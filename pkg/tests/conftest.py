import numpy as np
import pytest

from vcpanel.basis import hermite_basis
from vcpanel.panel import PanelData


def sieve_panel(n, t, c_true, r=0, noise=0.0, seed=0):
    """Panel with y = x' C H_m(z) (+ optional factors and noise).

    Returns the panel and the true (f, gamma) with f'f/T = I.
    """
    rng = np.random.default_rng(seed)
    c_true = np.asarray(c_true, dtype=float)
    p, m = c_true.shape
    x = rng.normal(1.0, 1.0, size=(n, t, p))
    z = rng.normal(0.5, 1.0, size=(n, t))
    beta = hermite_basis(z, m) @ c_true.T                     # N x T x p
    y = np.sum(x * beta, axis=2)
    f = np.zeros((t, r))
    gamma = np.zeros((n, r))
    if r:
        q, _ = np.linalg.qr(rng.standard_normal((t, r)))
        f = np.sqrt(t) * q
        gamma = rng.normal(1.0, 1.0, size=(n, r))
        y = y + gamma @ f.T
    y = y + noise * rng.standard_normal((n, t))
    return PanelData(y, x, z), f, gamma


@pytest.fixture
def small_panel():
    c = np.array([[1.0, -0.5], [0.3, 0.8]])
    data, f, g = sieve_panel(6, 8, c, r=1, noise=0.3, seed=11)
    return data
