"""Seeded Monte Carlo: null critical values and size/power experiments.

Replication ``r`` of every simulation draws from its own stream
``(seed, r)``, so a table is a pure function of its inputs, the seed and the
replication count. Batching changes results only at the level of
floating-point rounding.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import breaks
from .fitting import GridConfig, fit_residuals_batch
from .stationarity import LEVELS, QUANTILES, kpss_batch
from .trend import TrendParams, TrendSpec, eval_trend

DEFAULT_SEED = 20221114


@dataclass(frozen=True)
class McConfig:
    replications: int = 2000
    seed: int = DEFAULT_SEED
    quantiles: tuple[float, ...] = (0.90, 0.95, 0.99)
    batch: int = 200

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if not all(0 < q < 1 for q in self.quantiles):
            raise ValueError("quantiles must lie in (0, 1)")


def stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))))


def gaussian_stream(seed: int, stream_id: int, size: int) -> np.ndarray:
    """``size`` standard normal draws from stream ``(seed, stream_id)``."""
    return stream(seed, stream_id).standard_normal(size)


def _level_name(q: float) -> str:
    for lvl, v in QUANTILES.items():
        if abs(v - q) < 1e-12:
            return lvl
    return f"{100 * (1 - q):g}%"


@dataclass
class CvTable:
    test: str
    spec: dict
    T: int
    values: dict[str, float]
    replications: int
    seed: int
    params: dict = field(default_factory=dict)
    failures: int = 0
    draws: np.ndarray | None = field(default=None, repr=False)

    def key(self) -> dict:
        return cache_key(self.test, self.spec, self.T, self.params, self.seed, self.replications)

    def to_dict(self) -> dict:
        return {"test": self.test, "spec": self.spec, "T": self.T, "values": self.values,
                "replications": self.replications, "seed": self.seed,
                "params": self.params, "failures": self.failures}

    @classmethod
    def from_dict(cls, d: dict) -> "CvTable":
        # JSON sorts keys; restore the 10% < 5% < 1% order
        values = dict(sorted(d["values"].items(), key=lambda kv: -float(kv[0].rstrip("%"))))
        return cls(d["test"], d["spec"], d["T"], values, d["replications"], d["seed"],
                   d.get("params", {}), d.get("failures", 0))


def cache_key(test, spec, T, params, seed, replications) -> dict:
    return {"test": test, "spec": spec, "T": int(T), "params": params,
            "seed": int(seed), "replications": int(replications)}


class CvCache:
    """Content-addressed JSON store of critical-value tables."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._memo: dict[str, CvTable] = {}

    @staticmethod
    def digest(key: dict) -> str:
        blob = json.dumps(key, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:32]

    def path(self, key: dict) -> Path:
        return self.directory / f"{self.digest(key)}.json"

    def get(self, key: dict) -> CvTable | None:
        h = self.digest(key)
        if h in self._memo:
            return self._memo[h]
        p = self.directory / f"{h}.json"
        if p.exists():
            table = CvTable.from_dict(json.loads(p.read_text()))
            self._memo[h] = table
            return table
        return None

    def put(self, table: CvTable) -> None:
        key = table.key()
        h = self.digest(key)
        self._memo[h] = table
        tmp = self.directory / f".{h}.tmp"
        tmp.write_text(json.dumps(table.to_dict(), sort_keys=True, indent=1))
        tmp.replace(self.directory / f"{h}.json")


class MemoryCache(CvCache):
    def __init__(self):
        self._memo = {}

    def get(self, key):
        return self._memo.get(self.digest(key))

    def put(self, table):
        self._memo[self.digest(table.key())] = table


def _quantile_table(draws: np.ndarray, quantiles: Sequence[float]) -> dict[str, float]:
    qs = np.quantile(draws, quantiles)
    return {_level_name(q): float(v) for q, v in zip(quantiles, qs)}


def _simulate(stat_batch: Callable[[np.ndarray], np.ndarray], T: int, mc: McConfig):
    """Run ``mc.replications`` null draws; NaN statistics are redrawn from fresh streams."""
    R = mc.replications
    out = np.empty(R)
    failures = 0
    next_id = R
    for r0 in range(0, R, mc.batch):
        ids = list(range(r0, min(R, r0 + mc.batch)))
        Z = np.column_stack([gaussian_stream(mc.seed, i, T) for i in ids])
        vals = stat_batch(Z)
        bad = np.flatnonzero(~np.isfinite(vals))
        while bad.size:
            failures += bad.size
            if failures > max(10, R):
                raise RuntimeError("too many failed Monte Carlo replications")
            Zr = np.column_stack([gaussian_stream(mc.seed, next_id + i, T) for i in range(bad.size)])
            next_id += bad.size
            vals[bad] = stat_batch(Zr)
            bad = bad[~np.isfinite(vals[bad])]
        out[r0:r0 + len(ids)] = vals
    if failures > 0.01 * R:
        warnings.warn(f"{failures} of {R} replications failed and were redrawn", RuntimeWarning)
    return out, failures


def _cached(cache, key, compute):
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    table = compute()
    if cache is not None:
        cache.put(table)
    return table


def null_statistics(spec: TrendSpec, Z: np.ndarray, grid: GridConfig, k: float,
                    kernel: str = "bartlett") -> np.ndarray:
    """Stationarity statistics for a T x R block of null draws (full refit per column)."""
    E, _ = fit_residuals_batch(Z, spec, grid)
    out = np.full(Z.shape[1], np.nan)
    ok = np.all(np.isfinite(E), axis=0)
    if ok.any():
        out[ok] = kpss_batch(E[:, ok], k, kernel)
    return out


def simulate_null_cv(spec: TrendSpec, T: int, grid: GridConfig | None = None, k: float = 0.5,
                     mc: McConfig | None = None, cache=None, kernel: str = "bartlett",
                     keep_draws: bool = False) -> CvTable:
    """Critical values of the stationarity statistic under iid Gaussian errors.

    Every replication re-estimates all trend parameters, including change
    locations and speeds, before computing the statistic.
    """
    grid = grid or GridConfig()
    mc = mc or McConfig()
    if T < 20:
        raise ValueError("need T >= 20")
    params = {"k": k, "kernel": kernel, "grid": grid.to_dict()}
    key = cache_key("kpss", spec.to_dict(), T, params, mc.seed, mc.replications)

    def compute():
        draws, failures = _simulate(lambda Z: null_statistics(spec, Z, grid, k, kernel), T, mc)
        return CvTable("kpss", spec.to_dict(), T, _quantile_table(draws, mc.quantiles),
                       mc.replications, mc.seed, params, failures, np.sort(draws))

    table = _cached(None if keep_draws else cache, key, compute)
    return table


def test_statistic(test: str, y: np.ndarray, order: int, trimming: breaks.TrimmingConfig,
                   break_index: int | None = None, truncation: float = 1.0) -> float:
    """One break-test statistic on data ``y`` (the function the null simulation uses)."""
    if test == "expw":
        return breaks.expw(y, order, trimming, "full", truncation)
    if test == "expw_unrestricted":
        return breaks.expw(y, order, trimming, "slope", truncation)
    if test in ("expw21", "expw21_unrestricted"):
        if break_index is None:
            raise ValueError(f"{test} needs the fitted break index")
        r = "full" if test == "expw21" else "slope"
        v = breaks.expw_2v1(y, order, break_index, trimming, r, truncation)
        return v if np.isfinite(v) else np.nan
    if test == "U":
        return breaks.level_break_U(y, order, trimming.m)[0]
    raise ValueError(f"unknown test {test!r}; expected one of {breaks.TESTS}")


test_statistic.__test__ = False


def simulate_test_cv(test: str, family, T: int, mc: McConfig | None = None,
                     trimming: breaks.TrimmingConfig | None = None,
                     break_index: int | None = None, cache=None,
                     truncation: float = 1.0, keep_draws: bool = False) -> CvTable:
    """Null critical values of a break statistic under iid Gaussian errors.

    For the one-versus-two statistics the null keeps the single break at
    ``break_index``: the statistic is computed on null draws split there. Both
    segment regressions include their own polynomial and so absorb any
    single-break trend exactly.
    """
    mc = mc or McConfig()
    order = breaks._order(family)
    if trimming is None:
        ts = breaks.TrimmingSet()
        trimming = ts.expw21 if test.startswith("expw21") else ts.level if test == "U" else ts.expw
    params = {"order": order, "trimming": trimming.to_dict(), "break_index": break_index,
              "truncation": truncation}
    key = cache_key(test, {"order": order}, T, params, mc.seed, mc.replications)

    def stat_batch(Z):
        return np.array([test_statistic(test, Z[:, r], order, trimming, break_index, truncation)
                         for r in range(Z.shape[1])])

    def compute():
        draws, failures = _simulate(stat_batch, T, mc)
        return CvTable(test, {"order": order}, T, _quantile_table(draws, mc.quantiles),
                       mc.replications, mc.seed, params, failures, np.sort(draws))

    return _cached(None if keep_draws else cache, key, compute)


@dataclass
class ErrorComponentDGP:
    """``y_t = mu_t + f(t/T) + eps_t`` with ``mu_t`` a random walk of variance ratio ``q``.

    ``q = inf`` gives a pure random walk (no stationary component). Optional
    GARCH(1,1) errors: ``garch=(omega, alpha, beta)`` scaled to unit variance.
    """

    T: int
    spec: TrendSpec | None = None
    params: TrendParams | None = None
    q: float = 0.0
    sigma: float = 1.0
    garch: tuple[float, float, float] | None = None
    ar: float = 0.0

    def _innovations(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal(n)
        if self.garch is None:
            return z
        omega, a, b = self.garch
        h = np.empty(n)
        e = np.empty(n)
        h[0] = omega / max(1 - a - b, 1e-8)
        for t in range(n):
            if t:
                h[t] = omega + a * e[t - 1] ** 2 + b * h[t - 1]
            e[t] = np.sqrt(h[t]) * z[t]
        return e / np.sqrt(omega / max(1 - a - b, 1e-8))

    def draw(self, seed: int, stream_id: int) -> np.ndarray:
        rng = stream(seed, stream_id)
        T = self.T
        trend = np.zeros(T)
        if self.spec is not None and self.params is not None:
            trend = eval_trend(self.spec, self.params, T)
        if np.isinf(self.q):
            return trend + self.sigma * np.cumsum(self._innovations(rng, T))
        eps = self._innovations(rng, T)
        if self.ar:
            for t in range(1, T):
                eps[t] += self.ar * eps[t - 1]
        y = trend + self.sigma * eps
        if self.q > 0:
            u = rng.standard_normal(T) * np.sqrt(self.q)
            y = y + self.sigma * np.cumsum(u)
        return y


@dataclass
class StudyResult:
    trials: int
    frequency: dict[str, float]
    std_error: dict[str, float]

    def within(self, level: str, nominal: float, n_se: float = 2.0) -> bool:
        se = np.sqrt(nominal * (1 - nominal) / self.trials)
        return abs(self.frequency[level] - nominal) <= n_se * se

    def to_dict(self) -> dict:
        return {"trials": self.trials, "frequency": self.frequency, "std_error": self.std_error}


def size_power_study(dgp, test: Callable[[np.ndarray], float | dict], trials: int = 500,
                     seed: int = DEFAULT_SEED + 1, cv: CvTable | dict | None = None) -> StudyResult:
    """Empirical rejection frequencies of ``test`` on ``trials`` draws of ``dgp``.

    ``test`` maps data to a statistic compared with ``cv`` (reject when larger),
    or, with ``cv=None``, directly to ``{level: reject}``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    draw = dgp.draw if hasattr(dgp, "draw") else dgp
    values = cv.values if isinstance(cv, CvTable) else cv
    hits: dict[str, int] = {}
    for i in range(trials):
        y = draw(seed, i)
        out = test(y)
        if values is not None:
            out = {lvl: out > c for lvl, c in values.items()}
        for lvl, rej in out.items():
            hits[lvl] = hits.get(lvl, 0) + bool(rej)
    freq = {lvl: h / trials for lvl, h in hits.items()}
    se = {lvl: float(np.sqrt(f * (1 - f) / trials)) for lvl, f in freq.items()}
    return StudyResult(trials, freq, se)
