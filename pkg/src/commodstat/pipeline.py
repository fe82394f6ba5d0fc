"""Per-series analysis (change counting, model choice, stationarity, change dating)
and the report bundle built from it."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .breaks import BreakDecision, TrimmingSet, decide_changes
from .dataset import DatasetManifest, TimeSeries
from .fitting import FitResult, GridConfig, fit_differenced, fit_nls
from .montecarlo import McConfig
from .selection import criteria, select
from .stationarity import DEFAULT_KS, LEVELS, TestOutcome, stationarity_test
from .trend import TrendSpec

log = logging.getLogger(__name__)

FAMILY_ORDER = (("linear", 1), ("quadratic", 2))


@dataclass
class PipelineConfig:
    ks: tuple[float, ...] = DEFAULT_KS
    trimming: TrimmingSet = field(default_factory=TrimmingSet)
    grid: GridConfig = field(default_factory=GridConfig)
    mc: McConfig = field(default_factory=McConfig)
    headline_level: str = "5%"
    count_level: str = "10%"
    slope_level: str = "5%"
    count_nonlinear: bool = True

    def to_dict(self) -> dict:
        return {"ks": list(self.ks), "grid": self.grid.to_dict(),
                "trimming": {k: getattr(self.trimming, k).to_dict() for k in ("expw", "expw21", "level")},
                "mc": {"replications": self.mc.replications, "seed": self.mc.seed},
                "headline_level": self.headline_level, "count_level": self.count_level,
                "slope_level": self.slope_level, "count_nonlinear": self.count_nonlinear}


def change_years(fit: FitResult, series: TimeSeries | None = None) -> list[dict]:
    """Calendar year of each change: ``start + round(lambda * T)``.

    That is the first observation after a break (``t/T > lambda``), or the
    observation at a logistic midpoint. ``start`` and ``T`` are those of the
    sample that was fitted, so differenced fits count from the second year.
    """
    start = fit.start_year
    if series is not None:
        start = series.start_year + (1 if fit.mode == "differences" else 0)
    if start is None:
        raise ValueError("fit carries no start year; pass the series")
    out = []
    for c in fit.params.changes:
        d = {"year": int(start + round(c.lam * fit.T)), "lambda": c.lam,
             "kind": "midpoint" if c.gamma is not None else "break"}
        if c.gamma is not None:
            d["gamma"] = c.gamma
        out.append(d)
    return out


def year_to_lambda(year: int, start_year: int, T: int) -> float:
    return (year - start_year) / T


def candidate_specs(decisions: Sequence[BreakDecision]) -> list[tuple[str, TrendSpec]]:
    """Break and smooth variants for each family at its decided change count(s)."""
    out = []
    for dec in decisions:
        for kind, shape in (("break", "step"), ("smooth", "logistic")):
            for n in dec.counts:
                if n == 0:
                    spec = TrendSpec(dec.order, "III", "none", 0)
                else:
                    spec = TrendSpec(dec.order, dec.model_class, shape, n)
                out.append((f"{kind} {dec.family}", spec))
    return out


def _verdict(test: TestOutcome, cfg: PipelineConfig) -> str:
    headline = cfg.ks[0]
    if test.rejects(cfg.headline_level, headline):
        return "integrated"
    at10 = sum(test.rejects("10%", k) for k in cfg.ks)
    return "mixed" if at10 * 2 > len(cfg.ks) else "stationary"


@dataclass
class SeriesReport:
    name: str
    start_year: int
    T: int
    decisions: dict[str, BreakDecision] = field(default_factory=dict)
    candidates: list[dict] = field(default_factory=list)
    selection: dict | None = None
    test: TestOutcome | None = None
    verdict: str | None = None
    fit_mode: str | None = None
    final_fit: FitResult | None = None
    change_dates: list[dict] = field(default_factory=list)
    plot: dict | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        d = {"name": self.name, "start_year": self.start_year, "T": self.T, "error": self.error}
        if self.failed:
            return d
        d.update({
            "decisions": {k: v.to_dict() for k, v in self.decisions.items()},
            "candidates": self.candidates,
            "selection": self.selection,
            "test": self.test.to_dict() if self.test else None,
            "verdict": self.verdict,
            "fit_mode": self.fit_mode,
            "final_fit": self.final_fit.to_dict(with_arrays=False) if self.final_fit else None,
            "change_dates": self.change_dates,
            "plot": self.plot,
        })
        return d


def run_series(series: TimeSeries, cfg: PipelineConfig | None = None, cache=None) -> SeriesReport:
    """Steps A-C for one series; errors are captured in the report entry."""
    cfg = cfg or PipelineConfig()
    rep = SeriesReport(series.name, series.start_year, series.T)
    try:
        _run(series, cfg, cache, rep)
    except Exception as exc:  # a failed series must not abort the batch
        log.exception("series %s failed", series.name)
        rep.error = f"{type(exc).__name__}: {exc}"
    return rep


def _run(series: TimeSeries, cfg: PipelineConfig, cache, rep: SeriesReport) -> None:
    if series.T < 20:
        raise ValueError("need at least 20 observations")
    for fam, order in FAMILY_ORDER:
        rep.decisions[fam] = decide_changes(series, fam, cfg.trimming, cfg.mc, cache,
                                            cfg.count_level, cfg.slope_level)

    cands = []
    for group, spec in candidate_specs(list(rep.decisions.values())):
        fit = fit_nls(series, spec, cfg.grid)
        cands.append((group, spec, fit))
    sel = select([(s, f) for _, s, f in cands], cfg.count_nonlinear)
    alt = [criteria(f, count_nonlinear=False) for _, _, f in cands]
    for i, ((group, spec, fit), sc, sc_lin) in enumerate(zip(cands, sel.scores, alt)):
        rep.candidates.append({
            "group": group, "spec": spec.to_dict(), "label": spec.label(),
            "n_changes": spec.n_changes, "ssr": fit.ssr,
            "scores": sc.to_dict(), "scores_linear_p": sc_lin.to_dict(),
            "selected": i == sel.winner,
            "nonlinear": [list(pi) for pi in fit.params.nonlinear()],
        })
    rep.selection = sel.to_dict()
    spec = sel.spec

    rep.test = stationarity_test(series, spec, cfg.grid, cfg.ks, cfg.mc, cache=cache)
    rep.verdict = _verdict(rep.test, cfg)

    if rep.verdict == "integrated" and spec.n_changes:
        fit = fit_differenced(series, spec, cfg.grid)
    else:
        fit = rep.test.fit
    rep.final_fit = fit
    rep.fit_mode = "differences" if rep.verdict == "integrated" else "levels"
    if fit.mode == "levels" or spec.n_changes:
        rep.change_dates = change_years(fit, series)
    if rep.verdict != "integrated":
        rep.plot = {"year": series.years.tolist(), "actual": series.values.tolist(),
                    "fitted": rep.test.fit.fitted.tolist()}


@dataclass
class PipelineReport:
    entries: list[SeriesReport]
    config: PipelineConfig

    def verdict_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            key = "failed" if e.failed else e.verdict
            out[key] = out.get(key, 0) + 1
        return out

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "verdict_counts": self.verdict_counts(),
                "series": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def run_all(manifest: DatasetManifest, cfg: PipelineConfig | None = None, cache=None,
            threads: int = 1) -> PipelineReport:
    """Independent per-series runs, reported in manifest order."""
    cfg = cfg or PipelineConfig()
    series = list(manifest.series.values())
    if threads > 1 and len(series) > 1:
        with ThreadPoolExecutor(threads) as pool:
            entries = list(pool.map(lambda s: run_series(s, cfg, cache), series))
    else:
        entries = [run_series(s, cfg, cache) for s in series]
    return PipelineReport(entries, cfg)


# ---- tables built from the JSON form, so ``report`` needs no recomputation ----

def _fmt(v, digits=3):
    return "" if v is None else f"{v:.{digits}f}"


def _stat_cell(entry: dict | None) -> str:
    if entry is None or not entry.get("applied", True) or entry.get("value") is None:
        return ""
    v = entry["value"]
    if not np.isfinite(v):
        return "excluded"
    sig = entry.get("significance", "")
    return f"{v:.3f}" + (f" ^{sig}" if sig else "")


def table1_rows(report: dict) -> list[dict]:
    rows = []
    for s in report["series"]:
        if s.get("error"):
            continue
        for fam in ("linear", "quadratic"):
            d = s["decisions"][fam]
            st = d["statistics"]
            rows.append({
                "series": s["name"], "family": fam,
                "ExpW": _stat_cell(st["expw"]),
                "ExpW_unrestricted": _stat_cell(st["expw_unrestricted"]),
                "ExpW21": _stat_cell(st["expw21"]),
                "ExpW21_unrestricted": _stat_cell(st["expw21_unrestricted"]),
                "n_changes": d["changes_label"],
                "U": _stat_cell(st["U"]),
                "level_changes": d["level_changes"] if st["U"].get("applied") else "",
                "model": d["model"],
            })
    return rows


def table2_rows(report: dict) -> list[dict]:
    rows = []
    for s in report["series"]:
        if s.get("error"):
            continue
        for c in s["candidates"]:
            sc, sl = c["scores"], c["scores_linear_p"]
            rows.append({
                "series": s["name"], "group": c["group"], "model": c["label"],
                "n_changes": c["n_changes"], "SIC": _fmt(sc["sic"], 2), "AIC": _fmt(sc["aic"], 2),
                "adj_R2": _fmt(sc["adj_r2"], 3), "p": sc["p"],
                "SIC_linear_p": _fmt(sl["sic"], 2), "AIC_linear_p": _fmt(sl["aic"], 2),
                "adj_R2_linear_p": _fmt(sl["adj_r2"], 3),
                "selected": "*" if c["selected"] else "",
            })
    return rows


def table3_rows(report: dict) -> list[dict]:
    rows = []
    for s in report["series"]:
        if s.get("error") or not s.get("test"):
            continue
        t = s["test"]
        row = {"series": s["name"], "model": t["label"]}
        for k, v in t["statistic_by_k"].items():
            sig = t["significance"][k]
            row[f"k={k}"] = f"{v:.4f}" + (f" ^{sig}" if sig else "")
        for lvl in LEVELS:
            row[f"cv {lvl}"] = f"{t['critical_values'][lvl]:.4f}"
        row["verdict"] = s["verdict"]
        rows.append(row)
    return rows


def table4_rows(report: dict) -> list[dict]:
    rows = []
    for s in report["series"]:
        if s.get("error") or not s.get("final_fit"):
            continue
        f = s["final_fit"]
        mode = "level" if s["fit_mode"] == "levels" else "differences"
        dates = " ".join(f"{c['year']}" + (" (midpoint)" if c["kind"] == "midpoint" else "")
                         for c in s["change_dates"]) or "-"
        est = "; ".join(
            f"lambda{j + 1}={c['lambda']:.4f}" + (f", gamma{j + 1}={c['gamma']:.3f}" if "gamma" in c else "")
            for j, c in enumerate(s["change_dates"]))
        rows.append({"series": f"{s['name']} ({mode})", "model": f["label"],
                     "change_dates": dates, "estimates": est})
    return rows


def _write_rows(rows: list[dict], path: Path) -> None:
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields or ["series"])
        w.writeheader()
        w.writerows(rows)


def write_tables(report: dict, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, fn in (("table1_changes", table1_rows), ("table2_selection", table2_rows),
                     ("table3_stationarity", table3_rows), ("table4_dates", table4_rows)):
        p = out / f"{name}.csv"
        _write_rows(fn(report), p)
        paths.append(p)
    plots = out / "plots"
    for s in report["series"]:
        if s.get("plot"):
            plots.mkdir(exist_ok=True)
            p = plots / f"{s['name']}.csv"
            _write_rows([{"year": y, "actual": repr(a), "fitted": repr(f)}
                         for y, a, f in zip(s["plot"]["year"], s["plot"]["actual"], s["plot"]["fitted"])], p)
            paths.append(p)
    return paths


def write_bundle(report: PipelineReport | dict, out_dir: str | os.PathLike) -> list[Path]:
    """``report.json`` plus the four tables and per-series plot data."""
    d = report.to_dict() if isinstance(report, PipelineReport) else report
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "report.json"
    p.write_text(json.dumps(d, sort_keys=True, indent=1), encoding="utf-8")
    return [p, *write_tables(d, out)]
