"""Orthonormal Hermite functions and sieve design construction.

A coefficient function beta_j(z) is approximated by ``C[j] @ H_m(z)`` where
``H_m(z) = (h_0(z), ..., h_{m-1}(z))`` are the orthonormal Hermite functions
on the real line.  Design rows are ``kron(H_m(z_it), x_it)`` so that, with
``vec`` stacking the columns of the ``p x m`` matrix ``C``,

    kron(H_m(z), x) @ vec(C) == x @ C @ H_m(z)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_PI_QUARTER = math.pi ** -0.25


def default_truncation(n_units: int, n_periods: int) -> int:
    """Default truncation ``floor(1.2 * (N T)^(1/6))``, never below 1."""
    return max(1, int(math.floor(1.2 * (n_units * n_periods) ** (1.0 / 6.0))))


@dataclass(frozen=True)
class SieveConfig:
    """Number of basis functions kept in the sieve expansion.

    ``m=None`` resolves through :func:`default_truncation` once the panel
    size is known.
    """

    m: int | None = None
    rule: str = "floor(1.2*(N*T)^(1/6))"

    def __post_init__(self):
        if self.m is not None and (int(self.m) != self.m or self.m < 1):
            raise ValueError(f"truncation m must be a positive integer, got {self.m!r}")

    def resolve(self, n_units: int, n_periods: int) -> int:
        if self.m is not None:
            return int(self.m)
        return default_truncation(n_units, n_periods)


def hermite_basis(z, m: int) -> np.ndarray:
    """Evaluate the first ``m`` orthonormal Hermite functions at ``z``.

    Uses the recurrence on the normalised functions

        h_{j+1}(z) = z sqrt(2/(j+1)) h_j(z) - sqrt(j/(j+1)) h_{j-1}(z)

    which never forms factorials or raw Hermite polynomials.

    Parameters
    ----------
    z : float or array_like
        Evaluation point(s); must be finite.
    m : int
        Number of basis functions, ``m >= 1``.

    Returns
    -------
    ndarray
        Shape ``z.shape + (m,)``; a length-``m`` vector for scalar ``z``.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    m = int(m)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("hermite_basis requires finite z")
    out = np.empty(z.shape + (m,))
    out[..., 0] = _PI_QUARTER * np.exp(-0.5 * z * z)
    if m > 1:
        out[..., 1] = math.sqrt(2.0) * z * out[..., 0]
    for j in range(1, m - 1):
        out[..., j + 1] = (z * math.sqrt(2.0 / (j + 1)) * out[..., j]
                           - math.sqrt(j / (j + 1)) * out[..., j - 1])
    return out


def eval_coef_fn(c_row, z) -> np.ndarray | float:
    """Evaluate ``sum_j c_row[j] h_j(z)``."""
    c_row = np.asarray(c_row, dtype=float)
    if c_row.ndim != 1:
        raise ValueError("c_row must be a 1-d vector of sieve coefficients")
    val = hermite_basis(z, c_row.shape[0]) @ c_row
    return float(val) if np.ndim(val) == 0 else val


def design_row(x_it, z_it: float, m: int) -> np.ndarray:
    """Single design row ``kron(H_m(z_it), x_it)`` of length ``m * p``."""
    x_it = np.asarray(x_it, dtype=float)
    if x_it.ndim != 1 or x_it.shape[0] < 1:
        raise ValueError("x_it must be a non-empty 1-d vector")
    return np.kron(hermite_basis(z_it, m), x_it)


def design_tensor(x: np.ndarray, z: np.ndarray, m: int) -> np.ndarray:
    """Stack of design rows for a whole panel.

    ``x`` has shape ``(N, T, p)`` and ``z`` shape ``(N, T)``; the result has
    shape ``(N, T, m * p)`` with column ``j * p + k`` equal to
    ``h_j(z_it) * x_it[k]``.
    """
    h = hermite_basis(z, m)
    n, t, p = x.shape
    return (h[..., :, None] * x[..., None, :]).reshape(n, t, m * p)


def vec(c: np.ndarray) -> np.ndarray:
    """Column-major stacking of a ``p x m`` coefficient matrix."""
    return np.asarray(c).reshape(-1, order="F")


def unvec(v: np.ndarray, p: int) -> np.ndarray:
    """Inverse of :func:`vec` for a ``p``-row matrix."""
    v = np.asarray(v)
    return v.reshape(p, -1, order="F")
