"""KPSS-type LM stationarity statistic around a fitted nonlinear trend."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fitting import FitResult, GridConfig, fit_nls
from .trend import TrendSpec

LEVELS = ("10%", "5%", "1%")
QUANTILES = {"10%": 0.90, "5%": 0.95, "1%": 0.99}
DEFAULT_KS = (0.5, 0.8, 0.9)

_ANDREWS_CONST = 1.1447
_RHO_CLAMP = 0.999


class LrvError(ArithmeticError):
    """Non-positive long-run variance estimate."""


@dataclass(frozen=True)
class LrvConfig:
    k: float = 0.5
    kernel: str = "bartlett"

    def __post_init__(self):
        if not 0 < self.k < 1:
            raise ValueError("k must lie in (0, 1)")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")


def kpss_stat(residuals, sigma2: float) -> float:
    """``sigma2^-1 T^-2 sum_t (sum_{i<=t} e_i)^2``."""
    if not sigma2 > 0:
        raise LrvError("long-run variance must be positive")
    e = np.asarray(residuals, dtype=float)
    T = e.shape[0]
    return float(np.sum(np.cumsum(e) ** 2) / (T * T * sigma2))


def autocovariances(e: np.ndarray, max_lag: int) -> np.ndarray:
    """Uncentred sample autocovariances ``(1/T) sum e_t e_{t-j}``, j = 0..max_lag."""
    T = e.shape[0]
    return np.array([e[j:] @ e[:T - j] / T for j in range(max_lag + 1)])


def _bartlett(j: np.ndarray, l: int) -> np.ndarray:
    return 1.0 - j / (l + 1.0)


def _parzen(j: np.ndarray, l: int) -> np.ndarray:
    x = j / (l + 1.0)
    return np.where(x <= 0.5, 1 - 6 * x ** 2 + 6 * x ** 3, 2 * (1 - x) ** 3)


def _quadratic_spectral(j: np.ndarray, l: int) -> np.ndarray:
    x = 6 * np.pi * (j / (l + 1.0)) / 5
    return 3 / x ** 2 * (np.sin(x) / x - np.cos(x))


KERNELS = {"bartlett": _bartlett, "parzen": _parzen, "qs": _quadratic_spectral}


def lrv_bartlett(residuals, bandwidth: int, kernel: str = "bartlett") -> float:
    """Kernel long-run variance ``g0 + 2 sum_{j<=l} w_j g_j`` (Bartlett weights)."""
    e = np.asarray(residuals, dtype=float)
    l = int(bandwidth)
    if l < 0 or l >= e.shape[0]:
        raise ValueError(f"bandwidth {l} outside [0, T)")
    g = autocovariances(e, l)
    j = np.arange(1, l + 1)
    s2 = g[0] + 2.0 * np.sum(KERNELS[kernel](j, l) * g[1:]) if l else g[0]
    if not s2 > 0:
        raise LrvError("inadmissible (non-positive) long-run variance")
    return float(s2)


def _andrews_term(r: float, T: int) -> float:
    return _ANDREWS_CONST * (4 * r * r * T / ((1 + r) ** 2 * (1 - r) ** 2)) ** (1 / 3)


def lag1_autocorrelation(e: np.ndarray) -> float:
    den = e @ e
    return float(e[1:] @ e[:-1] / den) if den > 0 else 0.0


def kurozumi_bandwidth(residuals, k: float) -> int:
    """Data-driven Bartlett bandwidth capped by the user constant ``k``.

    ``l = floor(min(A(rho), A(k)))`` with ``A(r) = 1.1447 (4 r^2 T / ((1+r)^2 (1-r)^2))^(1/3)``
    and ``rho`` the lag-1 autocorrelation of the residuals.
    """
    if not 0 < k < 1:
        raise ValueError("k must lie in (0, 1)")
    e = np.asarray(residuals, dtype=float)
    T = e.shape[0]
    rho = min(max(lag1_autocorrelation(e), -_RHO_CLAMP), _RHO_CLAMP)
    l = int(math.floor(min(_andrews_term(rho, T), _andrews_term(k, T))))
    return min(l, T - 1)


def kpss_from_residuals(residuals, k: float, kernel: str = "bartlett") -> float:
    """Statistic with the Kurozumi bandwidth; 0 for an exact (zero-residual) fit."""
    e = np.asarray(residuals, dtype=float)
    if not np.any(e):
        return 0.0
    l = kurozumi_bandwidth(e, k)
    return kpss_stat(e, lrv_bartlett(e, l, kernel))


def kpss_batch(E: np.ndarray, k: float, kernel: str = "bartlett") -> np.ndarray:
    """Column-wise statistics for a T x R residual matrix."""
    return np.array([kpss_from_residuals(E[:, r], k, kernel) for r in range(E.shape[1])])


@dataclass
class TestOutcome:
    """Observed statistics per bandwidth constant against simulated critical values."""

    spec: TrendSpec
    statistic_by_k: dict[float, float]
    critical_values: dict[str, float]
    mc_replications: int
    seed: int
    bandwidth_by_k: dict[float, int] = field(default_factory=dict)
    degenerate: bool = False
    fit: FitResult | None = field(default=None, repr=False)

    __test__ = False  # not a pytest class

    @property
    def decisions(self) -> dict[tuple[float, str], bool]:
        return {(k, lvl): stat > self.critical_values[lvl]
                for k, stat in self.statistic_by_k.items() for lvl in LEVELS}

    def rejects(self, level: str = "5%", k: float | None = None) -> bool:
        k = next(iter(self.statistic_by_k)) if k is None else k
        return self.statistic_by_k[k] > self.critical_values[level]

    def significance(self, k: float) -> str:
        """Table letter for the strongest rejection: a/b/c = 10/5/1%, '' if none."""
        letter = ""
        for lvl, mark in zip(LEVELS, "abc"):
            if self.statistic_by_k[k] > self.critical_values[lvl]:
                letter = mark
        return letter

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(), "label": self.spec.label(),
            "statistic_by_k": {str(k): v for k, v in self.statistic_by_k.items()},
            "bandwidth_by_k": {str(k): v for k, v in self.bandwidth_by_k.items()},
            "critical_values": dict(self.critical_values),
            "decisions": {f"{k}@{lvl}": bool(d) for (k, lvl), d in self.decisions.items()},
            "significance": {str(k): self.significance(k) for k in self.statistic_by_k},
            "mc_replications": self.mc_replications, "seed": self.seed,
            "degenerate": self.degenerate,
        }


def stationarity_test(series, spec: TrendSpec, grid: GridConfig | None = None,
                      lrv_ks: Sequence[float] = DEFAULT_KS, mc=None, cache=None,
                      kernel: str = "bartlett") -> TestOutcome:
    """Fit ``spec`` in levels and test the null of stationarity around it.

    Critical values come from :func:`commodstat.montecarlo.simulate_null_cv`
    for the same spec, sample size and bandwidth rule, using the first entry of
    ``lrv_ks``.
    """
    from .montecarlo import McConfig, simulate_null_cv

    grid = grid or GridConfig()
    mc = mc or McConfig()
    if mc.replications < 500:
        raise ValueError("stationarity tests need at least 500 Monte Carlo replications")
    fit = fit_nls(series, spec, grid)
    e = fit.residuals
    degenerate = fit.ssr == 0 or not np.any(e)
    stats, bws = {}, {}
    for k in lrv_ks:
        if degenerate:
            stats[k], bws[k] = 0.0, 0
            continue
        bws[k] = kurozumi_bandwidth(e, k)
        stats[k] = kpss_stat(e, lrv_bartlett(e, bws[k], kernel))
    cv = simulate_null_cv(spec, fit.T, grid, lrv_ks[0], mc, cache=cache, kernel=kernel)
    return TestOutcome(spec, stats, dict(cv.values), mc.replications, mc.seed, bws,
                       degenerate, fit)


def format_table(rows: Sequence[tuple[str, TestOutcome]], ks: Sequence[float] = DEFAULT_KS) -> str:
    """Plain-text rendering: model, statistic per k with significance letters, c.v. columns."""
    head = ["Series", "Model", *[f"k={k}" for k in ks], *[f"c.v. {lvl}" for lvl in LEVELS]]
    lines = ["\t".join(head)]
    for name, out in rows:
        cells = [name, out.spec.label()]
        for k in ks:
            mark = out.significance(k)
            cells.append(f"{out.statistic_by_k[k]:.4f}" + (f" ^{mark}" if mark else ""))
        cells += [f"{out.critical_values[lvl]:.4f}" for lvl in LEVELS]
        lines.append("\t".join(cells))
    return "\n".join(lines)
