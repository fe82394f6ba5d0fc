"""Counting structural changes in trend with I(0)/I(1)-robust tests.

Contains the Exp-Wald trend-break statistic on quasi-GLS transformed data
(full and slope-only restrictions), the sequential one-versus-two statistic,
a level-break statistic on differenced detrended data, and the protocol that
combines them into a change count and model label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dataset import TimeSeries
from .fitting import GridConfig, fit_nls
from .stationarity import LEVELS
from .trend import TrendSpec, polynomial_columns

FAMILIES = {"linear": 1, "quadratic": 2}
RESTRICTIONS = ("full", "slope")
TESTS = ("expw", "expw_unrestricted", "expw21", "expw21_unrestricted", "U")


@dataclass(frozen=True)
class TrimmingConfig:
    """Edge trimming ``epsilon``, minimum segment fraction ``delta``, level-test trimming ``m``."""

    epsilon: float = 0.05
    delta: float = 0.5
    m: float = 0.1

    def __post_init__(self):
        for name in ("epsilon", "delta", "m"):
            v = getattr(self, name)
            if not 0 < v <= 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5]")

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta, "m": self.m}


@dataclass(frozen=True)
class TrimmingSet:
    expw: TrimmingConfig = TrimmingConfig(0.05, 0.5, 0.1)
    expw21: TrimmingConfig = TrimmingConfig(0.1, 0.1, 0.1)
    level: TrimmingConfig = TrimmingConfig(0.05, 0.5, 0.1)


def _order(family) -> int:
    if isinstance(family, str):
        return FAMILIES[family]
    return int(family)


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)


def quasi_gls_rho(residuals, truncation: float = 1.0) -> float:
    """AR(1) coefficient of residuals with superefficient truncation to one.

    Returns 1 when ``|rho - 1| < truncation * T^-1/2``; otherwise ``rho`` clipped
    to [-0.99, 0.99].
    """
    u = np.asarray(residuals, dtype=float)
    return float(_rho_batch(u[None, :], truncation)[0])


def _rho_batch(U: np.ndarray, truncation: float) -> np.ndarray:
    T = U.shape[-1]
    num = np.sum(U[..., 1:] * U[..., :-1], axis=-1)
    den = np.sum(U[..., :-1] ** 2, axis=-1)
    rho = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.where(np.abs(rho - 1) < truncation / np.sqrt(T), 1.0, np.clip(rho, -0.99, 0.99))


def candidate_breaks(T: int, epsilon: float) -> np.ndarray:
    """Break indices ``tb`` (last pre-break observation) with ``epsilon <= tb/T <= 1-epsilon``."""
    tb = np.arange(1, T)
    lam = tb / T
    return tb[(lam >= epsilon - 1e-12) & (lam <= 1 - epsilon + 1e-12)]


def _break_designs(T: int, order: int, tbs: np.ndarray) -> np.ndarray:
    s = np.arange(1, T + 1) / T
    base = polynomial_columns(order, s)
    F = (np.arange(1, T + 1)[None, :] > tbs[:, None]).astype(float)
    X = np.empty((tbs.size, T, order + 3))
    X[:, :, :order + 1] = base
    X[:, :, order + 1] = F
    X[:, :, order + 2] = s * F
    return X


def _quasi_difference(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``a_1, a_t - rho a_{t-1}`` along axis 1 with one rho per leading index."""
    out = A.copy()
    r = rho.reshape((-1,) + (1,) * (A.ndim - 1))
    out[:, 1:] = A[:, 1:] - r * A[:, :-1]
    return out


def wald_profile(series, family, tbs: np.ndarray, restriction: str = "full",
                 truncation: float = 1.0, tol: float = 1e-10) -> np.ndarray:
    """Quasi-GLS Wald statistics for a Model III break at each index in ``tbs``.

    ``restriction='full'`` tests the level and slope shifts jointly;
    ``'slope'`` tests the slope shift only, leaving the level shift free.
    Rank-deficient candidates give NaN.
    """
    if restriction not in RESTRICTIONS:
        raise ValueError(f"restriction must be one of {RESTRICTIONS}")
    y = _values(series)
    order, T = _order(family), y.size
    tbs = np.asarray(tbs, dtype=int)
    X = _break_designs(T, order, tbs)
    p = X.shape[2]
    Q, _ = np.linalg.qr(X)
    u = y[None, :] - np.einsum("ntp,np->nt", Q, np.einsum("ntp,t->np", Q, y))
    rho = _rho_batch(u, truncation)
    Xq = _quasi_difference(X, rho)
    zq = _quasi_difference(np.broadcast_to(y, (tbs.size, T)), rho)
    Q2, R2 = np.linalg.qr(Xq)
    diag = np.abs(np.diagonal(R2, axis1=1, axis2=2))
    ok = np.all(diag > tol * np.linalg.norm(Xq, axis=1), axis=1)
    R2 = np.where(ok[:, None, None], R2, np.eye(p))
    qz = np.einsum("ntp,nt->np", Q2, zq)
    beta = np.linalg.solve(R2, qz[..., None])[..., 0]
    ssr = np.sum(zq ** 2, axis=1) - np.sum(qz ** 2, axis=1)
    sigma2 = np.maximum(ssr, 0) / (T - p)
    Rinv = np.linalg.inv(R2)
    V = Rinv @ Rinv.transpose(0, 2, 1)
    idx = [p - 2, p - 1] if restriction == "full" else [p - 1]
    b = beta[:, idx]
    Vr = V[:, idx][:, :, idx]
    W = np.einsum("ni,ni->n", b, np.linalg.solve(Vr, b[..., None])[..., 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        W = W / sigma2
    W[~ok | ~(sigma2 > 0)] = np.nan
    return W


def wald_break(series, family, break_fraction: float, restriction: str = "full",
               truncation: float = 1.0) -> float:
    y = _values(series)
    tb = int(round(break_fraction * y.size))
    return float(wald_profile(y, family, np.array([tb]), restriction, truncation)[0])


def expw(series, family, trimming: TrimmingConfig | None = None, restriction: str = "full",
         truncation: float = 1.0) -> float:
    """Exp functional ``ln(T^-1 sum_tb exp(W(tb)/2))`` over the trimmed break dates."""
    trimming = trimming or TrimmingSet().expw
    y = _values(series)
    tbs = candidate_breaks(y.size, trimming.epsilon)
    if tbs.size == 0:
        raise ValueError("empty candidate set of break dates")
    W = wald_profile(y, family, tbs, restriction, truncation)
    W = W[np.isfinite(W)]
    if W.size == 0:
        raise ValueError("no estimable break date")
    return float(logsumexp(W / 2) - np.log(y.size))


def _min_segment(order: int) -> int:
    # room for the break regression plus at least a few degrees of freedom
    return 2 * (order + 3)


@dataclass
class SegmentResult:
    statistic: float
    segments: list[float]
    excluded: list[int]


def expw_2v1(series, family, break_index: int, trimming: TrimmingConfig | None = None,
             restriction: str = "full", truncation: float = 1.0,
             detail: bool = False):
    """Maximum of the one-break statistics on the two segments split at ``break_index``.

    ``break_index`` is the last observation of the first segment. Segments
    shorter than ``delta * T`` (or too short to estimate) are excluded.
    """
    trimming = trimming or TrimmingSet().expw21
    y = _values(series)
    order, T = _order(family), y.size
    if not 0 < break_index < T:
        raise ValueError("break index outside the sample")
    min_len = max(int(np.ceil(trimming.delta * T - 1e-9)), _min_segment(order))
    stats, excluded = [], []
    for i, seg in enumerate((y[:break_index], y[break_index:])):
        if seg.size < min_len:
            stats.append(-np.inf)
            excluded.append(i)
            continue
        try:
            stats.append(expw(seg, order, trimming, restriction, truncation))
        except ValueError:
            stats.append(-np.inf)
            excluded.append(i)
    value = float(max(stats))
    return SegmentResult(value, stats, excluded) if detail else value


def level_break_U(series, family, m: float = 0.1, exclude=()) -> tuple[float, int]:
    """Largest standardized jump in the differenced detrended series.

    ``U = max_j |d_j - mean(d)| / (sqrt(n) sd(d))`` over jumps ``d_j`` between
    observations ``j`` and ``j + 1`` with ``m <= j/T <= 1 - m``, where ``d`` is
    the first difference of OLS-detrended data (``n`` jumps). Returns the
    statistic and the index ``j`` of the last pre-break observation. Jumps in
    ``exclude`` are removed before standardizing.
    """
    y = _values(series)
    order, T = _order(family), y.size
    s = np.arange(1, T + 1) / T
    X = polynomial_columns(order, s)
    u = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
    d = np.diff(u)
    j = np.arange(1, T)
    keep = np.ones(T - 1, dtype=bool)
    for e in exclude:
        keep[e - 1] = False
    dk = d[keep]
    sd = dk.std()
    if not sd > 0:
        return 0.0, int(j[0])
    z = np.abs(d - dk.mean()) / (np.sqrt(dk.size) * sd)
    cand = keep & (j / T >= m - 1e-12) & (j / T <= 1 - m + 1e-12)
    if not cand.any():
        raise ValueError("no candidate level-break date at this trimming")
    z = np.where(cand, z, -np.inf)
    i = int(np.argmax(z))
    return float(z[i]), int(j[i])


@dataclass
class BreakDecision:
    family: str
    n_changes: int
    alternatives: tuple[int, ...] | None
    components: str | None
    model: str
    statistics: dict[str, dict]
    level_changes: int = 0
    u_applied: bool = True
    level_break_indices: list[int] = field(default_factory=list)
    one_break_index: int | None = None

    @property
    def order(self) -> int:
        return FAMILIES[self.family]

    @property
    def model_class(self) -> str:
        return "I" if self.components == "level-only" else "III"

    @property
    def counts(self) -> tuple[int, ...]:
        return self.alternatives if self.alternatives else (self.n_changes,)

    @property
    def changes_label(self) -> str:
        if self.alternatives:
            return "/".join(str(c) for c in self.alternatives)
        return str(self.n_changes)

    def to_dict(self) -> dict:
        return {"family": self.family, "n_changes": self.n_changes,
                "alternatives": list(self.alternatives) if self.alternatives else None,
                "components": self.components, "model": self.model,
                "changes_label": self.changes_label, "level_changes": self.level_changes,
                "u_applied": self.u_applied, "level_break_indices": self.level_break_indices,
                "one_break_index": self.one_break_index, "statistics": self.statistics}


def one_break_index(series, family, trimming: TrimmingConfig | None = None) -> int:
    """Last pre-break observation of the least-squares Model III one-break fit.

    Break dates are kept at least ``max(epsilon, delta)`` from either end so
    both segments of the one-versus-two statistic are long enough.
    """
    trimming = trimming or TrimmingSet().expw21
    y = _values(series)
    edge = min(max(trimming.epsilon, trimming.delta), 0.45)
    one = fit_nls(y, TrendSpec(_order(family), "III", "step", 1), GridConfig(trim_edge=edge))
    return int(round(one.params.changes[0].lam * y.size))


def _significance(value: float, cv: dict[str, float]) -> str:
    letter = ""
    for lvl, mark in zip(LEVELS, "abc"):
        if np.isfinite(value) and value > cv[lvl]:
            letter = mark
    return letter


def _rejects(entry: dict, level: str) -> bool:
    return bool(entry.get("applied", True)) and entry["value"] > entry["cv"][level]


def decide_changes(series, family, trimming: TrimmingSet | None = None, mc=None, cache=None,
                   count_level: str = "10%", slope_level: str = "5%",
                   truncation: float = 1.0) -> BreakDecision:
    """Number (0, 1, 2) and type of trend changes for one polynomial family.

    A trend break is counted when ExpW rejects at ``count_level``; a second one
    when either one-versus-two statistic rejects at ``count_level``. A
    rejection of the one-versus-two test without a first-stage rejection is a
    contradiction and both counts (0 and 2) are carried forward. Slopes are
    judged unstable when either slope-only statistic rejects at
    ``slope_level``; otherwise the level-break test is applied and, when it
    rejects, the model is reduced to level changes only (Model I).
    """
    from .montecarlo import McConfig, simulate_test_cv

    trimming = trimming or TrimmingSet()
    mc = mc or McConfig()
    y = _values(series)
    T = y.size
    fam = family if isinstance(family, str) else {1: "linear", 2: "quadratic"}[family]
    order = FAMILIES[fam]

    tb = one_break_index(y, order, trimming.expw21)

    values = {
        "expw": expw(y, order, trimming.expw, "full", truncation),
        "expw_unrestricted": expw(y, order, trimming.expw, "slope", truncation),
        "expw21": expw_2v1(y, order, tb, trimming.expw21, "full", truncation),
        "expw21_unrestricted": expw_2v1(y, order, tb, trimming.expw21, "slope", truncation),
    }
    stats = {}
    for test, v in values.items():
        trim = trimming.expw21 if test.startswith("expw21") else trimming.expw
        cv = simulate_test_cv(test, order, T, mc, trim, break_index=tb if test.startswith("expw21") else None,
                              cache=cache, truncation=truncation).values
        stats[test] = {"value": v, "cv": cv, "significance": _significance(v, cv), "applied": True}

    first = _rejects(stats["expw"], count_level)
    second = _rejects(stats["expw21"], count_level) or _rejects(stats["expw21_unrestricted"], count_level)
    slope_unstable = (_rejects(stats["expw_unrestricted"], slope_level)
                      or _rejects(stats["expw21_unrestricted"], slope_level))

    if first and second:
        n, alternatives = 2, None
    elif first:
        n, alternatives = 1, None
    elif second:
        n, alternatives = 2, (0, 2)
    else:
        n, alternatives = 0, None

    level_changes, level_idx = 0, []
    if slope_unstable:
        stats["U"] = {"value": None, "cv": None, "significance": "", "applied": False}
    else:
        cv = simulate_test_cv("U", order, T, mc, trimming.level, cache=cache).values
        u, j = level_break_U(y, order, trimming.level.m)
        stats["U"] = {"value": u, "cv": cv, "significance": _significance(u, cv), "applied": True}
        while level_changes < 2 and u > cv[count_level]:
            level_changes += 1
            level_idx.append(j)
            try:
                u, j = level_break_U(y, order, trimming.level.m, exclude=level_idx)
            except ValueError:
                break

    if level_changes:
        n, alternatives, components = level_changes, None, "level-only"
        model = f"I({n})"
    elif n == 0 and alternatives is None:
        components, model = None, "0"
    else:
        components = "level-and-slope"
        model = "0/III(2)" if alternatives else f"III({n})"
    return BreakDecision(fam, n, alternatives, components, model, stats, level_changes,
                         not slope_unstable, level_idx, tb)
