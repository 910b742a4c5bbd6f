"""Penalised sieve estimation with an interactive factor error structure.

The estimator minimises

    Q(C, F) = sum_i (Y_i - Z_i vec(C))' M_F (Y_i - Z_i vec(C)) + sum_j lam_j ||C_j||

over ``C`` (p x m) and ``F`` (T x r, F'F/T = I) by alternating

1. a ridge-type coefficient update given ``F`` in which the group penalty is
   replaced by its local quadratic approximation around the previous
   iterate, and
2. a principal-component update of ``F`` given ``C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .basis import SieveConfig, design_tensor, unvec, vec
from .panel import PanelData

NORMALIZATION_TOL = 1e-6
SOLVE_RTOL = 1e-8


class SingularDesignError(np.linalg.LinAlgError):
    """The coefficient-update system is not positive definite."""


@dataclass(frozen=True)
class FitConfig:
    """Controls for the alternating minimisation.

    ``m=None`` uses the default truncation rule for the panel size.
    """

    tol: float = 1e-6
    max_iter: int = 500
    n_starts: int = 3
    seed: int = 0
    zero_floor: float = 1e-8
    m: int | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if not self.zero_floor > 0:
            raise ValueError("zero_floor must be positive")
        SieveConfig(self.m)


@dataclass(frozen=True)
class CoefficientMatrix:
    """Sieve coefficients, row ``j`` holding the expansion of beta_j."""

    c: np.ndarray
    zero_rows: frozenset = frozenset()

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 2:
            raise ValueError("coefficient matrix must be 2-d (p x m)")
        zr = frozenset(int(j) for j in self.zero_rows)
        if zr:
            c[sorted(zr)] = 0.0
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficient matrix has non-finite entries")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "zero_rows", zr)

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.c.shape[1]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.c, axis=1)


@dataclass(frozen=True)
class FactorEstimate:
    """Factors ``f`` (T x r, f'f/T = I) and loadings ``gamma`` (N x r)."""

    f: np.ndarray
    gamma: np.ndarray
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def r(self) -> int:
        return self.f.shape[1]

    def common_component(self) -> np.ndarray:
        """N x T matrix with entries gamma_i' f_t."""
        return self.gamma @ self.f.T


@dataclass(frozen=True)
class FitResult:
    """Converged (or best) iterate of :func:`fit`.

    ``rss`` is the unnormalised residual sum of squares after projecting out
    the factors; ``rss / (N T)`` is the normalised version used by the
    information criteria.  ``residuals`` holds ``Y_i - Z_i vec(C)`` before the
    factor projection.
    """

    coef: CoefficientMatrix
    factors: FactorEstimate
    rss: float
    objective: float
    iterations: int
    converged: bool
    objective_trace: tuple
    lam: np.ndarray
    residuals: np.ndarray
    cfg: FitConfig
    start: int = 0

    @property
    def m(self) -> int:
        return self.coef.m

    @property
    def r(self) -> int:
        return self.factors.r

    @property
    def rss_norm(self) -> float:
        return self.rss / self.residuals.size

    @property
    def penalty(self) -> float:
        return float(np.dot(self.lam, self.coef.row_norms()))

    def idiosyncratic(self) -> np.ndarray:
        """Residuals after removing both the sieve fit and the factors."""
        return self.residuals - self.factors.common_component()

    def fitted(self, data: PanelData) -> np.ndarray:
        return data.y - self.idiosyncratic()


class SieveDesign:
    """Design tensor and cross products for one panel and truncation ``m``.

    Building this once and reusing it across many fits (a tuning path, a
    multi-start) avoids recomputing the ``N x T x mp`` tensor.
    """

    def __init__(self, data: PanelData, m: int):
        self.data = data
        self.m = int(m)
        self.p = data.n_regressors
        self.n, self.t = data.y.shape
        self.z = design_tensor(data.x, data.z, self.m)
        flat = self.z.reshape(-1, self.m * self.p)
        self.gram = flat.T @ flat
        self.zty = flat.T @ data.y.reshape(-1)

    @classmethod
    def build(cls, data, m: int | None = None) -> "SieveDesign":
        if isinstance(data, SieveDesign):
            if m is not None and int(m) != data.m:
                raise ValueError(f"design built with m={data.m}, requested m={m}")
            return data
        if m is None:
            m = SieveConfig().resolve(data.n_units, data.n_periods)
        return cls(data, m)

    def fitted(self, c: np.ndarray) -> np.ndarray:
        """``phi_i[beta_m]`` for every unit, as an N x T matrix."""
        return self.z @ vec(c)

    def residuals(self, c: np.ndarray) -> np.ndarray:
        return self.data.y - self.fitted(c)


def _check_normalized(f: np.ndarray) -> None:
    t, r = f.shape
    if r == 0:
        return
    err = np.max(np.abs(f.T @ f / t - np.eye(r)))
    if err > NORMALIZATION_TOL:
        raise ValueError(f"factor matrix violates F'F/T = I (max deviation {err:.3g})")


def residual_projector_apply(f: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply ``M_F = I - F F'/T`` to ``v`` (a T-vector or T x k matrix).

    Relies on the normalisation ``F'F/T = I`` so the T x T projector is never
    formed.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    v = np.asarray(v, dtype=float)
    _check_normalized(f)
    if f.shape[1] == 0:
        return v.copy()
    t = f.shape[0]
    return v - f @ (f.T @ v) / t


def _solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Diagonally scaled Cholesky solve with a relative residual check."""
    d = np.sqrt(np.diag(a))
    if np.any(~(d > 0)):
        raise SingularDesignError(
            "coefficient system has a zero diagonal entry (a regressor is identically "
            "zero after projection); drop it, add ridge jitter or use a smaller m")
    s = 1.0 / d
    a_s = a * s[:, None] * s[None, :]
    try:
        cho = linalg.cho_factor(a_s, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise SingularDesignError(
            "coefficient system is singular (m*p too large for the panel?); "
            "add ridge jitter or use a smaller m") from None
    if np.min(np.diag(cho[0])) ** 2 < 1e-13:
        raise SingularDesignError(
            "coefficient system is numerically singular (m*p too large for the panel?); "
            "add ridge jitter or use a smaller m")
    bn = np.linalg.norm(b)
    x_s = linalg.cho_solve(cho, b * s, check_finite=False)
    for _ in range(2):
        x = x_s * s
        resid = a @ x - b
        if np.linalg.norm(resid) <= SOLVE_RTOL * bn:
            return x
        x_s = x_s - linalg.cho_solve(cho, resid * s, check_finite=False)
    x = x_s * s
    if np.linalg.norm(a @ x - b) > SOLVE_RTOL * bn:
        raise SingularDesignError("coefficient system too ill-conditioned to solve accurately")
    return x


def projected_system(design: SieveDesign, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``sum_i Z_i' M_F Z_i`` and ``sum_i Z_i' M_F Y_i``."""
    if f.shape[1] == 0:
        return design.gram, design.zty
    t = design.t
    zf = np.matmul(design.z.transpose(0, 2, 1), f)        # N x mp x r
    fy = design.data.y @ f                                  # N x r
    b = zf.transpose(0, 2, 1).reshape(-1, zf.shape[1])      # (N r) x mp
    a = design.gram - (b.T @ b) / t
    rhs = design.zty - np.einsum("ikr,ir->k", zf, fy) / t
    return a, rhs


def _active_rows(lam, c_prev: CoefficientMatrix | None, p: int, m: int, zero_floor: float):
    frozen = set(c_prev.zero_rows) if c_prev is not None else set()
    if c_prev is not None:
        norms = c_prev.row_norms()
        for j in range(p):
            if lam[j] > 0 and norms[j] < zero_floor * math.sqrt(m):
                frozen.add(j)
    return [j for j in range(p) if j not in frozen], frozenset(frozen)


def _penalty_diag(lam, c_prev, active, m, p) -> np.ndarray:
    if c_prev is None:
        w = np.zeros(p)
    else:
        norms = c_prev.row_norms()
        w = np.where(lam > 0, lam / np.where(norms > 0, norms, 1.0), 0.0)
    return np.tile(w, m)


def update_coefficients(data, f, lam, c_prev: CoefficientMatrix | None = None,
                        zero_floor: float = 1e-8, m: int | None = None,
                        system=None) -> CoefficientMatrix:
    """Coefficient update given the factors.

    Solves ``(sum_i Z_i' M_F Z_i + D/2) vec(C) = sum_i Z_i' M_F Y_i`` with
    ``D = I_m kron diag(lam_j / ||c_prev_j||)``.  Penalised rows whose previous
    norm fell below ``zero_floor * sqrt(m)`` are removed from the system and
    stay at zero.  With ``c_prev=None`` the penalty is dropped (this is the
    first update of a cold start).

    Parameters
    ----------
    data : PanelData or SieveDesign
    f : (T, r) array
        Current factors, ``f'f/T = I``; ``r = 0`` means no factor structure.
    lam : (p,) array
        Non-negative group penalties.
    c_prev : CoefficientMatrix, optional
        Previous iterate, linearisation point of the penalty.
    """
    if m is None and c_prev is not None:
        m = c_prev.m
    design = SieveDesign.build(data, m)
    p, m = design.p, design.m
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (p,) or np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError(f"lam must be a finite non-negative vector of length {p}")
    f = np.asarray(f, dtype=float).reshape(design.t, -1)
    _check_normalized(f)
    if c_prev is not None and c_prev.c.shape != (p, m):
        raise ValueError(f"c_prev has shape {c_prev.c.shape}, expected {(p, m)}")

    a, rhs = system if system is not None else projected_system(design, f)
    active, frozen = _active_rows(lam, c_prev, p, m, zero_floor)
    c = np.zeros((p, m))
    if active:
        idx = np.array([j * p + k for j in range(m) for k in active])
        d = _penalty_diag(lam, c_prev, active, m, p)
        a_act = a[np.ix_(idx, idx)] + np.diag(d[idx] / 2.0)
        sol = _solve_spd(a_act, rhs[idx])
        full = np.zeros(m * p)
        full[idx] = sol
        c = unvec(full, p)
    return CoefficientMatrix(c, frozen)


def _factors_from_residuals(w: np.ndarray, r: int) -> FactorEstimate:
    n, t = w.shape
    if r == 0:
        return FactorEstimate(np.zeros((t, 0)), np.zeros((n, 0)), np.zeros(0))
    s = w.T @ w / (n * t)
    vals, vecs = linalg.eigh(s, subset_by_index=(t - r, t - 1))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # orthonormalise again: eigh is accurate to ~1e-15 but the contract is tight
    q, rr = np.linalg.qr(vecs)
    vecs = q * np.sign(np.diag(rr))
    big = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[big, np.arange(r)])
    f = math.sqrt(t) * vecs
    gamma = w @ f / t
    return FactorEstimate(f, gamma, vals)


def update_factors(data, coef: CoefficientMatrix, r: int) -> FactorEstimate:
    """Principal-component factor update given the coefficients.

    Factors are ``sqrt(T)`` times the leading ``r`` eigenvectors of
    ``S = (1/NT) sum_i W_i W_i'`` with ``W_i = Y_i - phi_i[beta_m]``; loadings
    are ``f' W_i / T``.  Each factor column is signed so its largest-magnitude
    entry is positive.
    """
    design = SieveDesign.build(data, coef.m)
    bound = min(design.n, design.t) - 1
    if r < 1 or r > bound:
        raise ValueError(f"r must lie in 1..{bound}, got {r}")
    return _factors_from_residuals(design.residuals(coef.c), r)


def _rss(w: np.ndarray, f: np.ndarray) -> float:
    if f.shape[1] == 0:
        return float(np.sum(w * w))
    t = f.shape[0]
    mw = w - (w @ f) @ f.T / t
    return float(np.sum(mw * mw))


def objective_value(data, coef: CoefficientMatrix, f, lam) -> float:
    """Penalised objective ``sum_i W_i' M_F W_i + sum_j lam_j ||C_j||``."""
    design = SieveDesign.build(data, coef.m)
    f = np.asarray(f, dtype=float).reshape(design.t, -1)
    _check_normalized(f)
    lam = np.asarray(lam, dtype=float)
    return _rss(design.residuals(coef.c), f) + float(np.dot(lam, coef.row_norms()))


def random_factors(t: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian draw orthonormalised to ``F'F/T = I``."""
    if r == 0:
        return np.zeros((t, 0))
    q, rr = np.linalg.qr(rng.standard_normal((t, r)))
    return math.sqrt(t) * q * np.sign(np.diag(rr))


def _single_start(design: SieveDesign, r: int, lam: np.ndarray, cfg: FitConfig,
                  f0: np.ndarray, c_init: CoefficientMatrix | None, start: int) -> FitResult:
    f = f0
    c_prev = c_init
    trace = []
    converged = False
    exact = r == 0 and not np.any(lam > 0)
    for it in range(1, cfg.max_iter + 1):
        coef = update_coefficients(design, f, lam, c_prev, cfg.zero_floor)
        w = design.residuals(coef.c)
        fac = _factors_from_residuals(w, r)
        f = fac.f
        rss = _rss(w, f)
        trace.append(rss + float(np.dot(lam, coef.row_norms())))
        if exact:
            # plain least squares: one solve is the minimiser
            c_prev, converged = coef, True
            break
        if c_prev is not None:
            change = np.linalg.norm(coef.c - c_prev.c) / (1.0 + np.linalg.norm(c_prev.c))
            if change <= cfg.tol:
                c_prev, converged = coef, True
                break
        c_prev = coef
    coef = c_prev
    return FitResult(coef=coef, factors=fac, rss=rss, objective=trace[-1], iterations=it,
                     converged=converged, objective_trace=tuple(trace), lam=lam, residuals=w,
                     cfg=cfg, start=start)


def fit(data, r: int, lam, cfg: FitConfig = FitConfig(), c_init: CoefficientMatrix | None = None,
        f_init: np.ndarray | None = None) -> FitResult:
    """Minimise the penalised objective by alternating coefficient/factor updates.

    Each of ``cfg.n_starts`` starts draws ``F0`` with i.i.d. N(0, 1) entries
    (seeded by ``(cfg.seed, start)``), orthonormalises it and alternates the
    two updates until ``||C_new - C_old|| / (1 + ||C_old||) <= tol``.  The
    start with the smallest final objective wins.  When ``f_init`` is given
    it replaces the first random draw; ``c_init`` (if any) is the
    linearisation point of the first penalty update for every start.

    Parameters
    ----------
    data : PanelData or SieveDesign
    r : int
        Number of factors; 0 disables the factor structure.
    lam : float or (p,) array
        Group penalties.
    """
    design = SieveDesign.build(data, cfg.m if not isinstance(data, SieveDesign) else None)
    if cfg.m is not None and design.m != cfg.m:
        raise ValueError(f"design built with m={design.m} but cfg.m={cfg.m}")
    p = design.p
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (p,)).copy()
    bound = min(design.n, design.t) - 1
    if r < 0 or r > bound:
        raise ValueError(f"r must lie in 0..{bound}, got {r}")
    if c_init is not None and c_init.c.shape != (p, design.m):
        raise ValueError("c_init has the wrong shape")

    n_starts = 1 if r == 0 else cfg.n_starts
    best = None
    for s in range(n_starts):
        if s == 0 and f_init is not None:
            f0 = np.asarray(f_init, dtype=float).reshape(design.t, r)
        else:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, s]))
            f0 = random_factors(design.t, r, rng)
        res = _single_start(design, r, lam, cfg, f0, c_init, s)
        if best is None or res.objective < best.objective:
            best = res
    return best


def post_selection_fit(data, selected, r: int, cfg: FitConfig = FitConfig()) -> FitResult:
    """Unpenalised refit on the selected regressors.

    The coefficient rows of the excluded regressors are re-inserted as zeros
    so the result keeps the full ``p x m`` shape.
    """
    if isinstance(data, SieveDesign):
        m = data.m
        data = data.data
    else:
        m = cfg.m if cfg.m is not None else SieveConfig().resolve(data.n_units, data.n_periods)
    selected = sorted({int(j) for j in selected})
    if not selected:
        raise ValueError("post-selection fit needs a non-empty selection")
    p = data.n_regressors
    if selected[0] < 0 or selected[-1] >= p:
        raise ValueError(f"selected indices must lie in 0..{p - 1}")
    sub = data.subset_regressors(selected)
    res = fit(SieveDesign(sub, m), r, 0.0, replace(cfg, m=m))
    c = np.zeros((p, m))
    c[selected] = res.coef.c
    zero = frozenset(range(p)) - set(selected)
    lam = np.zeros(p)
    return replace(res, coef=CoefficientMatrix(c, zero), lam=lam)


def factor_only_fit(data, r: int, cfg: FitConfig = FitConfig()) -> FitResult:
    """Fit with every coefficient row at zero (pure factor model)."""
    design = SieveDesign.build(data, cfg.m if not isinstance(data, SieveDesign) else None)
    p, m = design.p, design.m
    coef = CoefficientMatrix(np.zeros((p, m)), frozenset(range(p)))
    w = np.array(design.data.y)
    fac = _factors_from_residuals(w, r)
    rss = _rss(w, fac.f)
    return FitResult(coef=coef, factors=fac, rss=rss, objective=rss, iterations=0,
                     converged=True, objective_trace=(rss,), lam=np.zeros(p), residuals=w,
                     cfg=cfg)
