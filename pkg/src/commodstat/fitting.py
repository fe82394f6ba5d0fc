"""Nonlinear least squares for the trend family by exhaustive grid search.

Change locations run over every admissible observation fraction and logistic
speeds over a fixed grid; the linear coefficients are profiled out. The search
residualizes every candidate change column on the polynomial base once, so the
profiled SSR of a candidate is ``||y~||^2 - b' G^{-1} b`` with ``G`` the Gram
matrix of its residualized columns and ``b = C~' y~``. ``G`` does not depend on
the data, which lets Monte Carlo replications share it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize_scalar

from .dataset import MIN_LENGTH, TimeSeries
from .trend import (
    TrendParams,
    TrendSpec,
    change_columns,
    design,
    params_from_vector,
    polynomial_columns,
    transition,
)


class RankDeficientError(np.linalg.LinAlgError):
    pass


class NoCandidateError(ValueError):
    pass


def default_gamma_grid(n: int = 40, lo: float = 2.0, hi: float = 300.0) -> tuple[float, ...]:
    return tuple(float(g) for g in np.geomspace(lo, hi, n))


@dataclass(frozen=True)
class GridConfig:
    """Candidate grid for the nonlinear parameters.

    Break fractions are taken at observation resolution, ``t/T``. ``trim_edge``
    keeps them away from both ends and ``min_separation`` is the smallest
    admissible ``lambda_2 - lambda_1``.
    """

    trim_edge: float = 0.05
    min_separation: float = 0.10
    gamma_grid: tuple[float, ...] = field(default_factory=default_gamma_grid)
    polish: bool = False
    rank_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.trim_edge < 0.5:
            raise ValueError("trim_edge must lie in (0, 0.5)")
        if self.min_separation <= 0:
            raise ValueError("min_separation must be positive")
        g = np.asarray(self.gamma_grid, dtype=float)
        if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise ValueError("gamma_grid must be positive and strictly increasing")
        object.__setattr__(self, "gamma_grid", tuple(float(x) for x in g))

    def lambda_indices(self, T: int) -> np.ndarray:
        t = np.arange(1, T)
        lam = t / T
        eps = 1e-12
        return t[(lam >= self.trim_edge - eps) & (lam <= 1 - self.trim_edge + eps)]

    def separation_steps(self, T: int) -> int:
        return max(1, int(np.ceil(self.min_separation * T - 1e-9)))

    def to_dict(self) -> dict:
        return {"trim_edge": self.trim_edge, "min_separation": self.min_separation,
                "gamma_grid": list(self.gamma_grid), "polish": self.polish}


@dataclass
class FitResult:
    spec: TrendSpec
    params: TrendParams
    residuals: np.ndarray
    ssr: float
    T: int
    p: int
    data: np.ndarray
    fitted: np.ndarray
    mode: str = "levels"
    start_year: int | None = None
    level_path: np.ndarray | None = None

    @property
    def tss(self) -> float:
        return float(np.sum((self.data - self.data.mean()) ** 2))

    @property
    def p_linear(self) -> int:
        return self.p - self.spec.n_nonlinear

    def to_dict(self, with_arrays: bool = True) -> dict:
        d = {"spec": self.spec.to_dict(), "label": self.spec.label(),
             "params": self.params.to_dict(), "ssr": self.ssr, "T": self.T,
             "p": self.p, "mode": self.mode, "start_year": self.start_year}
        if with_arrays:
            d["residuals"] = self.residuals.tolist()
            d["fitted"] = self.fitted.tolist()
            if self.level_path is not None:
                d["level_path"] = self.level_path.tolist()
        return d


def profile_ols(X: np.ndarray, y: np.ndarray, tol: float = 1e-10):
    """Least squares by Householder QR with a rank check.

    Returns ``(coef, residuals, ssr)``; ``y`` may be a matrix of columns.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    T, p = X.shape
    if T <= p:
        raise RankDeficientError(f"need T > p (T={T}, p={p})")
    Q, R = np.linalg.qr(X)
    norms = np.linalg.norm(X, axis=0)
    if np.any(np.abs(np.diag(R)) <= tol * np.maximum(norms, 1e-300)):
        raise RankDeficientError("design matrix is rank deficient")
    coef = solve_triangular(R, Q.T @ y)
    resid = y - X @ coef
    return coef, resid, np.sum(resid ** 2, axis=0)


def _values(series) -> tuple[np.ndarray, int | None]:
    if isinstance(series, TimeSeries):
        return series.values, series.start_year
    return np.asarray(series, dtype=float), None


class _Problem:
    """Design pieces of one (spec, T, mode) search, independent of the data."""

    def __init__(self, spec: TrendSpec, n_obs: int, grid: GridConfig, differenced: bool):
        self.spec, self.grid, self.differenced = spec, grid, differenced
        if differenced:
            # levels indexed t = 0..T', differenced observations t = 1..T'
            self.T = n_obs - 1
            self.s_levels = np.arange(0, self.T + 1) / self.T
            base = np.diff(polynomial_columns(spec.order, self.s_levels), axis=0)[:, 1:]
        else:
            self.T = n_obs
            self.s_levels = np.arange(1, self.T + 1) / self.T
            base = polynomial_columns(spec.order, self.s_levels)
        self.base = base
        if base.shape[1]:
            self.Q = np.linalg.qr(base)[0]
        else:
            self.Q = np.zeros((self.T, 0))

        t_idx = grid.lambda_indices(self.T)
        if spec.n_changes and t_idx.size == 0:
            raise NoCandidateError("no admissible change location at this trimming")
        if spec.shape == "logistic":
            gam = np.asarray(grid.gamma_grid)
            self.cand_t = np.repeat(t_idx, gam.size)
            self.cand_g = np.tile(gam, t_idx.size)
        else:
            self.cand_t = t_idx
            self.cand_g = np.full(t_idx.size, np.nan)
        self.sep = grid.separation_steps(self.T)
        if spec.n_changes == 2 and not np.any(self.cand_t[-1] - self.cand_t >= self.sep):
            raise NoCandidateError("no admissible pair of change locations")

    def pi(self, c: int) -> tuple[float, ...]:
        lam = self.cand_t[c] / self.T
        return (lam,) if self.spec.shape == "step" else (lam, float(self.cand_g[c]))

    def columns(self, idx: np.ndarray) -> np.ndarray:
        """Change columns for candidates ``idx``: shape (n, T, k)."""
        lam = self.cand_t[idx] / self.T
        s = self.s_levels[None, :]
        if self.spec.shape == "step":
            F = transition("step", s, (lam[:, None],))
        else:
            F = transition("logistic", s, (lam[:, None], self.cand_g[idx][:, None]))
        cols = [F, s * F] if self.spec.model_class == "III" else [F]
        C = np.stack(cols, axis=-1)
        if self.differenced:
            C = np.diff(C, axis=1)
        return C

    def residualize(self, A: np.ndarray) -> np.ndarray:
        """Project out the base along the time axis (axis -2 for 3-d input)."""
        if self.Q.shape[1] == 0:
            return A
        if A.ndim == 2:
            return A - self.Q @ (self.Q.T @ A)
        return A - np.einsum("tq,nqk->ntk", self.Q, np.einsum("tq,ntk->nqk", self.Q, A))

    def full_design(self, nonlinear: Sequence[Sequence[float]]) -> np.ndarray:
        X = design(self.spec, nonlinear, self.s_levels)
        if self.differenced:
            X = np.diff(X, axis=0)[:, 1:]
        return X


def _cholesky(M: np.ndarray, raw: np.ndarray, tol: float):
    """Batched Cholesky of (N, m, m) Gram matrices; flags near-singular ones."""
    N, m, _ = M.shape
    L = np.zeros_like(M)
    ok = np.ones(N, dtype=bool)
    for j in range(m):
        d = M[:, j, j] - np.sum(L[:, j, :j] ** 2, axis=1)
        ok &= d > tol * np.maximum(raw[:, j], 1e-300)
        L[:, j, j] = np.sqrt(np.where(ok, d, 1.0))
        for i in range(j + 1, m):
            L[:, i, j] = (M[:, i, j] - np.sum(L[:, i, :j] * L[:, j, :j], axis=1)) / L[:, j, j]
    return L, ok


def _reduction(L: np.ndarray, ok: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``b' (L L')^{-1} b`` for b of shape (N, m, R); -inf where singular."""
    N, m, R = b.shape
    z = np.empty_like(b)
    for i in range(m):
        acc = b[:, i, :]
        if i:
            acc = acc - np.einsum("nj,njr->nr", L[:, i, :i], z[:, :i, :])
        z[:, i, :] = acc / L[:, i, i][:, None]
    red = np.sum(z ** 2, axis=1)
    red[~ok] = -np.inf
    return red


_CHUNK = 2_000_000


def _search(prob: _Problem, Y: np.ndarray):
    """Best candidate per column of ``Y`` (T x R).

    Returns ``(best, ssr)`` where ``best`` holds candidate-index tuples in grid
    order (lambda_1, gamma_1, lambda_2, gamma_2) and ties go to the first.
    """
    spec, tol = prob.spec, prob.grid.rank_tol
    R = Y.shape[1]
    Yt = prob.residualize(Y)
    tss = np.sum(Yt ** 2, axis=0)
    if spec.n_changes == 0:
        return [()] * R, tss

    N1 = prob.cand_t.size
    C_raw = prob.columns(np.arange(N1))
    raw = np.sum(C_raw ** 2, axis=1)                                  # (N1, k)
    C = prob.residualize(C_raw)
    G = np.einsum("ntk,ntl->nkl", C, C)
    b = np.einsum("ntk,tr->nkr", C, Yt)                               # (N1, k, R)

    if spec.n_changes == 1:
        L, ok = _cholesky(G, raw, tol)
        ssr = tss[None, :] - _reduction(L, ok, b)
        best = np.argmin(ssr, axis=0)
        return [(int(c),) for c in best], ssr[best, np.arange(R)]

    k = spec.k
    best_ssr = np.full(R, np.inf)
    best = [None] * R
    t = prob.cand_t
    starts = np.flatnonzero(np.r_[True, t[1:] != t[:-1]])
    ends = np.r_[starts[1:], N1]
    flatC = C.transpose(0, 2, 1).reshape(N1 * k, -1)                  # row = (cand, col)
    for a, e in zip(starts, ends):
        c2 = int(np.searchsorted(t, t[a] + prob.sep, side="left"))
        if c2 >= N1:
            break
        n1, n2 = e - a, N1 - c2
        G12 = (flatC[a * k:e * k] @ flatC[c2 * k:].T).reshape(n1, k, n2, k).transpose(0, 2, 1, 3)
        M = np.empty((n1, n2, 2 * k, 2 * k))
        M[:, :, :k, :k] = G[a:e, None]
        M[:, :, :k, k:] = G12
        M[:, :, k:, :k] = G12.transpose(0, 1, 3, 2)
        M[:, :, k:, k:] = G[None, c2:]
        P = n1 * n2
        rw = np.concatenate([np.broadcast_to(raw[a:e, None], (n1, n2, k)),
                             np.broadcast_to(raw[None, c2:], (n1, n2, k))], axis=-1).reshape(P, 2 * k)
        L, ok = _cholesky(M.reshape(P, 2 * k, 2 * k), rw, tol)
        step = max(1, _CHUNK // (P * 2 * k))
        for r0 in range(0, R, step):
            r1 = min(R, r0 + step)
            bb = np.empty((n1, n2, 2 * k, r1 - r0))
            bb[:, :, :k] = b[a:e, None, :, r0:r1]
            bb[:, :, k:] = b[None, c2:, :, r0:r1]
            ssr = tss[None, r0:r1] - _reduction(L, ok, bb.reshape(P, 2 * k, r1 - r0))
            arg = np.argmin(ssr, axis=0)
            val = ssr[arg, np.arange(r1 - r0)]
            for j in np.flatnonzero(val < best_ssr[r0:r1]):
                r = r0 + j
                best_ssr[r] = val[j]
                i1, i2 = divmod(int(arg[j]), n2)
                best[r] = (a + i1, c2 + i2)
    return best, best_ssr


def _polish(prob: _Problem, y: np.ndarray, nonlinear: list[tuple[float, ...]]):
    """Golden-section refinement of each gamma between its grid neighbours."""
    gam = np.asarray(prob.grid.gamma_grid)
    nl = [list(p) for p in nonlinear]

    def ssr_at(j, lg):
        trial = [tuple(p) for p in nl]
        trial[j] = (trial[j][0], float(np.exp(lg)))
        try:
            return float(profile_ols(prob.full_design(trial), y, prob.grid.rank_tol)[2])
        except RankDeficientError:
            return np.inf

    for j in range(len(nl)):
        i = int(np.argmin(np.abs(gam - nl[j][1])))
        lo, hi = np.log(gam[max(i - 1, 0)]), np.log(gam[min(i + 1, gam.size - 1)])
        if hi <= lo:
            continue
        res = minimize_scalar(lambda lg: ssr_at(j, lg), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-6})
        if res.fun < ssr_at(j, np.log(nl[j][1])):
            nl[j][1] = float(np.exp(res.x))
    return [tuple(p) for p in nl]


def _finish(prob: _Problem, y_levels: np.ndarray, nonlinear, start_year) -> FitResult:
    spec = prob.spec
    y = np.diff(y_levels) if prob.differenced else y_levels
    X = prob.full_design(nonlinear)
    coef, resid, ssr = profile_ols(X, y, prob.grid.rank_tol)
    fitted = X @ coef
    if prob.differenced:
        # intercept is not identified in differences; align the level path on the mean
        Xl = design(spec, nonlinear, prob.s_levels)[:, 1:]
        path0 = Xl @ coef
        beta0 = float(np.mean(y_levels - path0))
        params = params_from_vector(spec, np.r_[beta0, coef], nonlinear)
        level_path = beta0 + path0
        p = spec.n_params - 1
        start = None if start_year is None else start_year + 1
        mode = "differences"
    else:
        params = params_from_vector(spec, coef, nonlinear)
        level_path = fitted
        p = spec.n_params
        start = start_year
        mode = "levels"
    return FitResult(spec, params, resid, float(ssr), prob.T, p, y, fitted, mode, start, level_path)


def _fit(series, spec: TrendSpec, grid: GridConfig, differenced: bool) -> FitResult:
    y, start = _values(series)
    if y.size < MIN_LENGTH:
        raise ValueError(f"need at least {MIN_LENGTH} observations, got {y.size}")
    prob = _Problem(spec, y.size, grid, differenced)
    target = np.diff(y) if differenced else y
    best, ssr = _search(prob, target[:, None])
    if best[0] is None or not np.isfinite(ssr[0]):
        raise NoCandidateError("every grid candidate is rank deficient")
    nonlinear = [prob.pi(c) for c in best[0]]
    if grid.polish and spec.shape == "logistic":
        nonlinear = _polish(prob, target, nonlinear)
    return _finish(prob, y, nonlinear, start)


def fit_nls(series, spec: TrendSpec, grid: GridConfig | None = None) -> FitResult:
    """Fit ``spec`` to the series in levels by profiled grid search."""
    return _fit(series, spec, grid or GridConfig(), differenced=False)


def fit_differenced(series, spec: TrendSpec, grid: GridConfig | None = None) -> FitResult:
    """Fit the first difference of the trend to the differenced series.

    Step changes turn into impulses (plus a slope step under Model III). The
    differenced sample has ``T - 1`` observations and change fractions are
    expressed on that sample, so ``start_year`` of the result is one year
    later than the input's.
    """
    return _fit(series, spec, grid or GridConfig(), differenced=True)


def fit_residuals_batch(Y: np.ndarray, spec: TrendSpec, grid: GridConfig,
                        differenced: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Residuals and SSR of the grid-optimal fit for every column of ``Y``.

    Failed columns (no full-rank candidate) get NaN residuals.
    """
    Y = np.asarray(Y, dtype=float)
    prob = _Problem(spec, Y.shape[0], grid, differenced)
    target = np.diff(Y, axis=0) if differenced else Y
    best, ssr = _search(prob, target)
    resid = np.full(target.shape, np.nan)
    if spec.n_changes == 0:
        if prob.base.shape[1]:
            resid = prob.residualize(target)
        else:
            resid = target.copy()
        return resid, np.sum(resid ** 2, axis=0)
    out_ssr = np.full(target.shape[1], np.nan)
    for r, cand in enumerate(best):
        if cand is None or not np.isfinite(ssr[r]):
            continue
        X = prob.full_design([prob.pi(c) for c in cand])
        try:
            _, e, s = profile_ols(X, target[:, r], grid.rank_tol)
        except RankDeficientError:
            continue
        resid[:, r], out_ssr[r] = e, s
    return resid, out_ssr
