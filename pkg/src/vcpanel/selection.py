"""Tuning of the group penalty and of the number of factors.

The penalty vector is restricted to ``lam = nu * w`` with adaptive weights
``w_j = 1 / ||Cbar_j||`` from the unpenalised fit, so tuning is a scan over
the scalar ``nu`` scored by a BIC-type criterion.  The number of factors is
chosen by the PIC criterion after running the whole pipeline for each
candidate ``r``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import (CoefficientMatrix, FitConfig, FitResult, SieveDesign, factor_only_fit,
                        fit, post_selection_fit)

log = logging.getLogger(__name__)

REGIMES = ("LD", "HD")
RSS_FLOOR = 1e-300


def default_regime(n_units: int, n_periods: int, p: int) -> str:
    """HD when ``p > sqrt(N T)``, LD otherwise."""
    return "HD" if p > math.sqrt(n_units * n_periods) else "LD"


@dataclass(frozen=True)
class LambdaPath:
    weights: np.ndarray
    nu_grid: np.ndarray
    regime: str = "LD"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        g = np.asarray(self.nu_grid, dtype=float)
        if w.ndim != 1 or np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a finite positive vector")
        if g.ndim != 1 or g.size == 0:
            raise ValueError("nu_grid must be a non-empty vector")
        if np.any(g < 0) or np.any(np.diff(g) <= 0):
            raise ValueError("nu_grid must be non-negative and strictly increasing")
        regime = str(self.regime).upper()
        if regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "nu_grid", g)
        object.__setattr__(self, "regime", regime)

    def lam(self, nu: float) -> np.ndarray:
        return nu * self.weights


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to go from a panel to a post-selection fit.

    ``regime=None`` picks HD when ``p > sqrt(NT)``.  The default grid spans
    ``[nu_low, nu_high] * s`` with ``s = NT * rss_bar / sum(w)`` where
    ``rss_bar`` is the normalised RSS of the unpenalised fit.  The default top
    of 10 keeps the path inside the region where irrelevant rows are removed
    but the penalty on relevant rows stays small relative to ``NT``; pass a
    larger ``nu_high`` to run the path all the way to the empty model.
    """

    fit: FitConfig = field(default_factory=FitConfig)
    regime: str | None = None
    n_grid: int = 40
    nu_low: float = 1e-4
    nu_high: float = 1e1
    df_rel_threshold: float = 1e-4

    def __post_init__(self):
        if self.regime is not None and str(self.regime).upper() not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.n_grid < 1 or not 0 < self.nu_low < self.nu_high:
            raise ValueError("need n_grid >= 1 and 0 < nu_low < nu_high")


@dataclass(frozen=True)
class SelectionResult:
    best_nu: float
    best_lambda: np.ndarray
    selected: frozenset
    bic_table: list
    fit: FitResult
    post_fit: FitResult
    path: LambdaPath
    baseline: FitResult | None = None
    df_threshold: float = 0.0


def bic_value(rss_norm: float, df: int, n_units: int, regime: str = "LD",
              xi: int | None = None) -> float:
    """BIC-type criterion ``ln RSS + df * penalty``.

    LD: penalty ``ln N / N^(1/4)``.  HD: penalty ``ln xi / xi^(1/8)`` with
    ``xi = min(N, T)``; when ``xi`` is omitted ``n_units`` is used.
    """
    if not rss_norm > 0:
        raise ValueError(f"rss_norm must be positive, got {rss_norm}")
    regime = regime.upper()
    if regime == "LD":
        pen = math.log(n_units) / n_units ** 0.25
    elif regime == "HD":
        xi = n_units if xi is None else xi
        pen = math.log(xi) / xi ** 0.125
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return math.log(rss_norm) + df * pen


def pic_value(sigma2: float, r: int, n_units: int, n_periods: int) -> float:
    """``sigma2 * (1 + r (N+T)/(NT) log(NT))``."""
    nt = n_units * n_periods
    return sigma2 * (1.0 + r * (n_units + n_periods) / nt * math.log(nt))


def _df_threshold(norms: np.ndarray, threshold: float | None, rel: float = 1e-4) -> float:
    if threshold is not None:
        return threshold
    top = float(norms.max()) if norms.size else 0.0
    return max(rel * top, 1e-10)


def selected_rows(coef: CoefficientMatrix, threshold: float | None = None,
                  rel: float = 1e-4) -> frozenset:
    """Rows whose Euclidean norm exceeds the threshold.

    Default threshold is ``rel`` times the largest row norm, floored at 1e-10.
    """
    norms = coef.row_norms()
    thr = _df_threshold(norms, threshold, rel)
    if not thr > 0:
        raise ValueError("threshold must be positive")
    return frozenset(int(j) for j in np.flatnonzero(norms > thr))


def count_df(coef: CoefficientMatrix, threshold: float | None = None, rel: float = 1e-4) -> int:
    """Number of non-zero coefficient functions."""
    return len(selected_rows(coef, threshold, rel))


def adaptive_weights(coef: CoefficientMatrix, zero_floor: float = 1e-8) -> np.ndarray:
    """Reciprocal row norms; rows below ``zero_floor`` get ``1 / zero_floor``."""
    norms = coef.row_norms()
    return 1.0 / np.maximum(norms, zero_floor)


def unpenalized_baseline(data, r: int, cfg: FitConfig = FitConfig()) -> CoefficientMatrix:
    """Coefficients of the fit with ``lam = 0``."""
    return fit(data, r, 0.0, cfg).coef


def default_nu_grid(weights, rss_norm: float, n_units: int, n_periods: int, n_grid: int = 40,
                    low: float = 1e-4, high: float = 1e1) -> np.ndarray:
    scale = n_units * n_periods * max(rss_norm, RSS_FLOOR) / float(np.sum(weights))
    return np.geomspace(low * scale, high * scale, n_grid)


def select_lambda(data, r: int, path: LambdaPath, cfg: FitConfig = FitConfig(),
                  baseline: FitResult | None = None, df_rel_threshold: float = 1e-4
                  ) -> SelectionResult:
    """Scan ``nu`` upward, score each fit by BIC and refit on the winner's support.

    Every fit after the first is warm-started from the previous solution
    (coefficients and factors) and uses a single start; the first honours
    ``cfg.n_starts``.  Ties in BIC go to the smaller ``nu``.

    A row counts towards ``df`` when its norm exceeds ``df_rel_threshold``
    times the largest row norm of the reference fit (the baseline when given,
    otherwise the first fit on the path), so rows shrunk towards zero by a
    large penalty stop counting even when every row is small.
    """
    design = SieveDesign.build(data, cfg.m if not isinstance(data, SieveDesign) else None)
    n, t = design.n, design.t
    if path.weights.shape != (design.p,):
        raise ValueError("path weights do not match the number of regressors")
    xi = min(n, t)
    c_prev = baseline.coef if baseline is not None else None
    f_prev = None
    threshold = None
    if baseline is not None:
        threshold = _df_threshold(baseline.coef.row_norms(), None, df_rel_threshold)
    rows, fits = [], []
    for k, nu in enumerate(path.nu_grid):
        run_cfg = cfg if k == 0 else replace(cfg, n_starts=1)
        try:
            res = fit(design, r, path.lam(nu), run_cfg, c_init=c_prev, f_init=f_prev)
        except np.linalg.LinAlgError as exc:
            log.warning("fit failed at nu=%g: %s", nu, exc)
            rows.append({"nu": float(nu), "rss": math.nan, "df": -1, "bic": math.inf,
                         "converged": False})
            fits.append(None)
            continue
        if threshold is None:
            threshold = _df_threshold(res.coef.row_norms(), None, df_rel_threshold)
        rss_norm = max(res.rss_norm, RSS_FLOOR)
        df = count_df(res.coef, threshold)
        bic = bic_value(rss_norm, df, n, path.regime, xi)
        rows.append({"nu": float(nu), "rss": rss_norm, "df": df, "bic": bic,
                     "converged": res.converged})
        fits.append(res)
        c_prev, f_prev = res.coef, (res.factors.f if r > 0 else None)
    if all(f is None for f in fits):
        raise RuntimeError("every fit along the nu path failed")
    best = int(np.argmin([row["bic"] for row in rows]))
    best_fit = fits[best]
    selected = selected_rows(best_fit.coef, threshold)
    if selected:
        post = post_selection_fit(design, selected, r, cfg)
    else:
        post = factor_only_fit(design, r, cfg)
    nu = float(path.nu_grid[best])
    return SelectionResult(best_nu=nu, best_lambda=path.lam(nu), selected=selected,
                           bic_table=rows, fit=best_fit, post_fit=post, path=path,
                           baseline=baseline, df_threshold=threshold)


def run_pipeline(data, r: int, pipe: PipelineConfig = PipelineConfig(),
                 nu: float | None = None) -> SelectionResult:
    """Unpenalised baseline -> adaptive weights -> BIC scan -> post-selection fit.

    A fixed ``nu`` replaces the default grid by that single value.
    """
    design = SieveDesign.build(data, pipe.fit.m if not isinstance(data, SieveDesign) else None)
    base = fit(design, r, 0.0, pipe.fit)
    w = adaptive_weights(base.coef, pipe.fit.zero_floor)
    regime = pipe.regime or default_regime(design.n, design.t, design.p)
    if nu is None:
        grid = default_nu_grid(w, base.rss_norm, design.n, design.t, pipe.n_grid,
                               pipe.nu_low, pipe.nu_high)
    else:
        grid = np.array([float(nu)])
    path = LambdaPath(w, grid, regime)
    return select_lambda(design, r, path, pipe.fit, baseline=base,
                         df_rel_threshold=pipe.df_rel_threshold)


def select_num_factors(data, r_max: int, pipe: PipelineConfig = PipelineConfig(),
                       nu: float | None = None) -> tuple[int, list, dict]:
    """Choose ``r`` in ``1..r_max`` by minimising PIC.

    For each ``r`` the full pipeline runs and ``sigma2`` is the normalised
    idiosyncratic RSS of its post-selection fit.  Ties go to the smaller ``r``.

    Returns
    -------
    r_star : int
    table : list of dict
        One record per ``r`` with ``sigma2``, ``pic`` and the selected set.
    results : dict
        ``r -> SelectionResult``.
    """
    design = SieveDesign.build(data, pipe.fit.m if not isinstance(data, SieveDesign) else None)
    bound = min(design.n, design.t) - 1
    if not 1 <= r_max <= bound:
        raise ValueError(f"r_max must lie in 1..{bound}")
    table, results = [], {}
    for r in range(1, r_max + 1):
        sel = run_pipeline(design, r, pipe, nu)
        sigma2 = sel.post_fit.rss_norm
        table.append({"r": r, "sigma2": sigma2,
                      "pic": pic_value(sigma2, r, design.n, design.t),
                      "selected": sorted(sel.selected), "converged": sel.post_fit.converged})
        results[r] = sel
    r_star = table[int(np.argmin([row["pic"] for row in table]))]["r"]
    return r_star, table, results
