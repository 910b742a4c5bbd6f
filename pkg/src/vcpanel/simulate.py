"""Simulation designs (LD / HD) and the Monte Carlo harness.

Regressor indices are 0-based throughout the library; regressor ``j``
carries the label ``x{j+1}`` so ``x1`` is the first true regressor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from ._parallel import parallel_map
from .basis import default_truncation
from .estimator import FitConfig
from .inference import coefficient_curves, default_grid
from .panel import PanelData
from .selection import PipelineConfig, run_pipeline, select_num_factors

log = logging.getLogger(__name__)

CASES = ("LD", "HD")


def _bump(z):
    return np.exp(-0.5 * np.square(z)) + 0.4


def _wave(z):
    return z * np.exp(-0.5 * np.square(z)) + 0.7


@dataclass(frozen=True)
class DgpConfig:
    """Settings of the simulated panel.

    ``noise_scale`` multiplies the idiosyncratic errors; 0 gives a
    noise-free panel (debug use).
    """

    n_units: int
    n_periods: int
    case: str = "LD"
    r_true: int = 3
    ar_coef: float = 0.5
    loading_mean: float = 0.5
    innovation_cross_corr: float = 0.5
    burn_in: int = 200
    seed: int = 0
    noise_scale: float = 1.0

    def __post_init__(self):
        case = str(self.case).upper()
        if case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        object.__setattr__(self, "case", case)
        if self.n_units < 2 or self.n_periods < 2:
            raise ValueError("need n_units >= 2 and n_periods >= 2")
        if not abs(self.ar_coef) < 1:
            raise ValueError("|ar_coef| must be < 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.r_true < 0:
            raise ValueError("r_true must be >= 0")
        if not abs(self.innovation_cross_corr) < 1:
            raise ValueError("|innovation_cross_corr| must be < 1")

    @property
    def p(self) -> int:
        return 5 if self.case == "LD" else 30

    @property
    def p_star(self) -> int:
        if self.case == "LD":
            return 2
        return 2 * default_truncation(self.n_units, self.n_periods)


@dataclass(frozen=True)
class SimTruth:
    true_support: frozenset
    beta_fn: dict
    f0: np.ndarray
    gamma0: np.ndarray
    eps: np.ndarray


def true_beta(j: int, z, case: str = "LD", p_star: int | None = None, p: int | None = None):
    """True coefficient function ``beta_j(z)`` with 1-based ``j``.

    Within the support, odd ``j`` gives ``exp(-z^2/2) + 0.4`` and even ``j``
    gives ``z exp(-z^2/2) + 0.7``; regressors beyond ``p_star`` have zero
    coefficients.  ``p_star``/``p`` default to the LD design (2 and 5).
    """
    case = case.upper()
    if case == "LD":
        p_star = 2 if p_star is None else p_star
        p = 5 if p is None else p
    elif p_star is None:
        raise ValueError("HD case needs p_star (it depends on N and T)")
    p = 30 if p is None else p
    if not 1 <= j <= p:
        raise IndexError(f"regressor index {j} outside 1..{p}")
    if j > p_star:
        return np.zeros_like(np.asarray(z, dtype=float)) if np.ndim(z) else 0.0
    val = _bump(z) if j % 2 == 1 else _wave(z)
    return float(val) if np.ndim(val) == 0 else val


def _ar1(innov: np.ndarray, a: float, burn_in: int) -> np.ndarray:
    """AR(1) along axis 0 from a zero state, dropping the first ``burn_in`` steps."""
    out = np.empty_like(innov)
    prev = np.zeros(innov.shape[1:])
    for t in range(innov.shape[0]):
        prev = a * prev + innov[t]
        out[t] = prev
    return out[burn_in:]


def generate(cfg: DgpConfig) -> tuple[PanelData, SimTruth]:
    """Draw one panel from the LD or HD design.

    Factors ``f_t ~ N(0, I_r)``, loadings ``gamma_i ~ N(loading_mean 1, I_r)``,
    ``v_it = a v_i,t-1 + xi_it``, ``x_it = v_it + |gamma_i' f_t|``,
    ``z_it = |v_it,1| + N(0, 1)`` and ``eps_t = a eps_t-1 + zeta_t`` with
    ``zeta_t ~ N(0, {rho^|i-j|})``.  Both AR recursions start at zero and
    discard ``burn_in`` periods.
    """
    rng = np.random.default_rng(cfg.seed)
    n, t, p, r, b = cfg.n_units, cfg.n_periods, cfg.p, cfg.r_true, cfg.burn_in
    f0 = rng.standard_normal((t, r))
    gamma0 = cfg.loading_mean + rng.standard_normal((n, r))
    v = _ar1(rng.standard_normal((t + b, n, p)), cfg.ar_coef, b).transpose(1, 0, 2)
    common = gamma0 @ f0.T                                   # N x T
    x = v + np.abs(common)[:, :, None]
    z = np.abs(v[:, :, 0]) + rng.standard_normal((n, t))
    sigma = cfg.innovation_cross_corr ** np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    chol = linalg.cholesky(sigma, lower=True)
    zeta = rng.standard_normal((t + b, n)) @ chol.T
    eps = cfg.noise_scale * _ar1(zeta, cfg.ar_coef, b).T     # N x T

    p_star = cfg.p_star
    beta = np.zeros((n, t, p))
    for j in range(p_star):
        beta[:, :, j] = _bump(z) if j % 2 == 0 else _wave(z)
    y = np.sum(x * beta, axis=2) + common + eps
    data = PanelData(y, x, z)
    truth = SimTruth(
        true_support=frozenset(range(p_star)),
        beta_fn={j: ("bump" if j % 2 == 0 else "wave") for j in range(p_star)},
        f0=f0, gamma0=gamma0, eps=eps)
    return data, truth


@dataclass(frozen=True)
class McReport:
    """Aggregated Monte Carlo output.

    ``curves`` maps a 0-based regressor index to a dict with ``mean``,
    ``lower`` and ``upper`` arrays over ``grid`` (2.5 / 97.5 percentiles of
    the replication estimates, zero where a regressor was not selected).
    """

    dgp: DgpConfig
    reps: int
    fnr: float
    fpr: float
    n_missed: int
    n_false: int
    n_nonconverged: int
    grid: np.ndarray
    curves: dict
    selected: list
    r_used: list
    converged: list
    draws: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "dgp": asdict(self.dgp),
            "reps": self.reps,
            "p": self.dgp.p,
            "p_star": self.dgp.p_star,
            "fnr_pct": self.fnr,
            "fpr_pct": self.fpr,
            "n_missed": self.n_missed,
            "n_false_positive": self.n_false,
            "n_nonconverged": self.n_nonconverged,
            "selected": [[j + 1 for j in s] for s in self.selected],
            "r_used": self.r_used,
        }

    def band_width(self, j: int, z: float = 0.0) -> float:
        k = int(np.argmin(np.abs(self.grid - z)))
        c = self.curves[j]
        return float(c["upper"][k] - c["lower"][k])


def _replication(args):
    dgp, index, pipe, grid, select_r, r_max = args
    rep_dgp = replace(dgp, seed=dgp.seed + index)
    data, truth = generate(rep_dgp)
    fit_cfg = replace(pipe.fit, seed=pipe.fit.seed + index)
    pipe = replace(pipe, fit=fit_cfg)
    if select_r:
        r_used, _, results = select_num_factors(data, r_max, pipe)
        sel = results[r_used]
    else:
        r_used = dgp.r_true
        sel = run_pipeline(data, r_used, pipe)
    post = sel.post_fit
    curves = np.zeros((data.n_regressors, grid.size))
    for ce in coefficient_curves(post, grid, regressors=sorted(sel.selected)):
        curves[ce.regressor] = ce.point
    converged = bool(sel.fit.converged and post.converged)
    return sorted(sel.selected), r_used, converged, curves


def monte_carlo(cfg: DgpConfig, reps: int, pipeline: PipelineConfig | None = None,
                grid=None, threads: int = 1, select_r: bool = False,
                r_max: int = 6) -> McReport:
    """Repeat generate -> tune -> post-selection fit ``reps`` times.

    Replication ``k`` uses seed ``cfg.seed + k`` for the data and
    ``pipeline.fit.seed + k`` for the random starts, so results do not depend
    on ``threads``.  Unless the pipeline fixes a regime, the BIC regime
    follows ``cfg.case``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    pipeline = pipeline or PipelineConfig()
    if pipeline.regime is None:
        pipeline = replace(pipeline, regime=cfg.case)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    tasks = [(cfg, k, pipeline, grid, select_r, r_max) for k in range(reps)]
    out = parallel_map(_replication, tasks, threads)

    support = set(range(cfg.p_star))
    p = cfg.p
    missed = sum(len(support - set(s)) for s, *_ in out)
    false = sum(len(set(s) - support) for s, *_ in out)
    fnr = 100.0 * missed / (reps * len(support)) if support else 0.0
    fpr = 100.0 * false / (reps * (p - len(support))) if p > len(support) else 0.0
    draws = np.stack([c for *_, c in out])                    # reps x p x G
    ever = sorted(set().union(*(set(s) for s, *_ in out)))
    curves = {}
    for j in ever:
        d = draws[:, j, :]
        curves[j] = {
            "mean": d.mean(axis=0),
            "lower": np.percentile(d, 2.5, axis=0),
            "upper": np.percentile(d, 97.5, axis=0),
        }
    conv = [c for _, _, c, _ in out]
    nonconv = sum(not c for c in conv)
    if nonconv:
        log.warning("%d of %d replications did not converge", nonconv, reps)
    return McReport(dgp=cfg, reps=reps, fnr=fnr, fpr=fpr, n_missed=missed, n_false=false,
                    n_nonconverged=nonconv, grid=grid, curves=curves,
                    selected=[s for s, *_ in out], r_used=[r for _, r, _, _ in out],
                    converged=conv, draws={j: draws[:, j, :] for j in ever})
