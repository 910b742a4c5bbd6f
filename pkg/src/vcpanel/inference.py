"""Coefficient curves, residual-bootstrap bands and factor variance shares."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ._parallel import parallel_map
from .basis import hermite_basis
from .estimator import FitResult, post_selection_fit
from .panel import PanelData

log = logging.getLogger(__name__)

BOOTSTRAP_SCHEMES = ("iid", "unit")


def default_grid(lo: float = -1.0, hi: float = 2.0, n: int = 63) -> np.ndarray:
    return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class CurveEstimate:
    regressor: int
    grid: np.ndarray
    point: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    level: float | None = None


@dataclass(frozen=True)
class BootstrapBands:
    """Pointwise percentile bands plus per-replication bookkeeping."""

    curves: list
    replicate_converged: np.ndarray
    draws: np.ndarray = field(repr=False)   # B x n_curves x G
    scheme: str = "iid"

    @property
    def n_failed(self) -> int:
        return int(np.sum(~self.replicate_converged))


@dataclass(frozen=True)
class VarianceDecomposition:
    shares: np.ndarray
    cumulative: np.ndarray


def _check_grid(grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty z grid")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("z grid must be strictly increasing")
    return grid


def coefficient_curves(fit: FitResult, grid, regressors=None) -> list[CurveEstimate]:
    """Point estimates ``beta_j(z) = C_j H_m(z)`` on ``grid``.

    By default one curve per non-zero coefficient row.
    """
    grid = _check_grid(grid)
    c = fit.coef.c
    if regressors is None:
        regressors = [j for j in range(c.shape[0]) if np.any(c[j] != 0)]
    h = hermite_basis(grid, c.shape[1])
    return [CurveEstimate(int(j), grid, h @ c[j]) for j in regressors]


def _bootstrap_rep(args):
    data, fitted, resid, selected, r, cfg, grid, seed, b, scheme = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
    n, t = resid.shape
    if scheme == "iid":
        pool = resid.reshape(-1)
        star = pool[rng.integers(0, pool.size, size=(n, t))]
    else:
        star = resid[rng.integers(0, n, size=n)]
    res = post_selection_fit(data.with_y(fitted + star), selected, r, cfg)
    h = hermite_basis(grid, res.m)
    return res.coef.c[selected] @ h.T, res.converged


def bootstrap_bands(data: PanelData, fit: FitResult, b_reps: int, grid=None, level: float = 0.95,
                    seed: int = 0, scheme: str = "iid", threads: int = 1,
                    regressors=None) -> BootstrapBands:
    """Residual-bootstrap pointwise bands for a post-selection fit.

    Idiosyncratic residuals ``y - x'beta(z) - gamma' f`` are centred and
    resampled (``iid``: cells drawn independently from the pooled residuals;
    ``unit``: whole residual rows drawn with replacement), added back to the
    fitted values, and the post-selection fit is rerun on the fixed support
    with factors re-estimated.  Replication ``b`` draws from the stream
    ``(seed, b)``.

    The reported interval at each z is the percentile interval of the
    replications, widened when necessary so it contains the point estimate.
    """
    if b_reps < 1:
        raise ValueError("b_reps must be >= 1")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if scheme not in BOOTSTRAP_SCHEMES:
        raise ValueError(f"scheme must be one of {BOOTSTRAP_SCHEMES}")
    grid = default_grid() if grid is None else _check_grid(grid)
    selected = sorted(set(range(fit.coef.p)) - set(fit.coef.zero_rows))
    if not selected:
        raise ValueError("fit has no selected regressors")
    if regressors is None:
        regressors = selected
    eps = fit.idiosyncratic()
    eps = eps - eps.mean()
    fitted = data.y - fit.idiosyncratic()
    cfg = replace(fit.cfg, m=fit.m)
    tasks = [(data, fitted, eps, selected, fit.r, cfg, grid, seed, b, scheme)
             for b in range(b_reps)]
    out = parallel_map(_bootstrap_rep, tasks, threads)
    conv = np.array([c for _, c in out])
    if not conv.any():
        raise RuntimeError(f"all {b_reps} bootstrap replications failed to converge")
    if not conv.all():
        log.warning("%d of %d bootstrap replications did not converge",
                    int((~conv).sum()), b_reps)
    draws = np.stack([d for d, _ in out])                     # B x |selected| x G
    pos = {j: k for k, j in enumerate(selected)}
    h = hermite_basis(grid, fit.m)
    alpha = (1.0 - level) / 2.0
    curves = []
    for j in regressors:
        point = h @ fit.coef.c[j]
        if j in pos:
            d = draws[:, pos[j], :]
            lo = np.minimum(np.quantile(d, alpha, axis=0), point)
            hi = np.maximum(np.quantile(d, 1.0 - alpha, axis=0), point)
        else:
            lo = hi = point
        curves.append(CurveEstimate(int(j), grid, point, lo, hi, level))
    return BootstrapBands(curves, conv, draws, scheme)


def variance_decomposition(fit: FitResult) -> VarianceDecomposition:
    """Share of the residual variance carried by each estimated factor.

    With ``e_it = gamma_i' f_t + eps_it`` the share of factor ``k`` is
    ``sum (gamma_ik f_tk)^2 / sum e_it^2``.
    """
    r = fit.r
    if r < 1:
        raise ValueError("variance decomposition needs r >= 1")
    e = fit.residuals
    total = float(np.sum(e * e))
    if total <= 0:
        raise ValueError("zero total residual variance")
    f, g = fit.factors.f, fit.factors.gamma
    shares = np.array([np.sum(np.outer(g[:, k], f[:, k]) ** 2) for k in range(r)]) / total
    return VarianceDecomposition(shares, np.cumsum(shares))

