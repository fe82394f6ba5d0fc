"""Command-line entry point: ``commodstat <command> [options]``.

Exit status is 0 on success, 1 for data problems (missing or malformed input)
and 2 for usage errors. Output files are only written below ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .breaks import TESTS, TrimmingSet, decide_changes
from .dataset import DataError, DatasetManifest, load_bundled, load_csv, log_transform
from .fitting import GridConfig, default_gamma_grid, fit_differenced, fit_nls
from .montecarlo import DEFAULT_SEED, CvCache, McConfig, simulate_null_cv, simulate_test_cv
from .pipeline import PipelineConfig, change_years, run_all, write_bundle, write_tables
from .stationarity import DEFAULT_KS, format_table, stationarity_test
from .trend import parse_spec

OUT_ENV = "COMMODSTAT_OUT"
log = logging.getLogger("commodstat")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, series: bool = True) -> None:
    p.add_argument("--out", default=os.environ.get(OUT_ENV, "commodstat-out"),
                   help=f"output directory (default ${OUT_ENV} or ./commodstat-out)")
    p.add_argument("--format", choices=("json", "text"), default="text", help="stdout format")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--reps", type=int, default=2000, help="Monte Carlo replications")
    p.add_argument("--cache", help="directory for cached critical values")
    if series:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--data", default="bundled", help="'bundled' or a directory with prices.csv/cpi.csv")
        src.add_argument("--series-csv", help="CSV of analysis-ready series (year column first)")
        p.add_argument("--log", action="store_true", help="take logs of --series-csv values")
        p.add_argument("--series", action="append", help="restrict to these series (repeatable)")
        p.add_argument("--gamma-points", type=int, default=40,
                       help="log-spaced transition speeds on [2, 300] (default 40)")
        p.add_argument("--min-separation", type=float, default=0.10,
                       help="smallest admissible lambda_2 - lambda_1 (default 0.10)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="commodstat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, deflate and log-transform the data")
    _common(p)

    p = sub.add_parser("fit", help="least-squares fit of one trend specification")
    _common(p)
    p.add_argument("--spec", required=True, help="e.g. quad-break-III-2, lin-smooth-I-1")
    p.add_argument("--differences", action="store_true", help="fit in first differences")

    p = sub.add_parser("breaks", help="count trend changes with the break tests")
    _common(p)
    p.add_argument("--family", choices=("linear", "quadratic"), default="quadratic")

    p = sub.add_parser("kpss", help="stationarity test around a fitted trend")
    _common(p)
    p.add_argument("--spec", required=True)
    p.add_argument("--k", type=float, action="append", help="bandwidth constant(s)")

    p = sub.add_parser("cv", help="simulate null critical values")
    _common(p, series=False)
    p.add_argument("--test", choices=("kpss", *TESTS), default="kpss")
    p.add_argument("--spec", help="trend spec for kpss")
    p.add_argument("--family", choices=("linear", "quadratic"), default="quadratic")
    p.add_argument("--T", type=int, required=True, dest="T")
    p.add_argument("--k", type=float, default=DEFAULT_KS[0])
    p.add_argument("--break-index", type=int)

    p = sub.add_parser("pipeline", help="full analysis and report bundle")
    _common(p)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("report", help="rebuild the tables from a saved report.json")
    p.add_argument("report", help="path to report.json")
    p.add_argument("--out", default=os.environ.get(OUT_ENV, "commodstat-out"))
    return ap


def _load(args) -> DatasetManifest:
    if args.series_csv:
        series = load_csv(args.series_csv).series
        if args.log:
            series = {k: log_transform(v) for k, v in series.items()}
        man = DatasetManifest(series)
    else:
        directory = None if args.data == "bundled" else args.data
        man = load_bundled(directory)
    if args.series:
        missing = [s for s in args.series if s not in man.series]
        if missing:
            raise DataError(f"unknown series: {', '.join(missing)}")
        man = DatasetManifest({s: man.series[s] for s in args.series})
    return man


def _mc(args) -> McConfig:
    if args.reps < 1:
        raise UsageError("--reps must be positive")
    return McConfig(replications=args.reps, seed=args.seed)


def _grid(args) -> GridConfig:
    if args.gamma_points < 1:
        raise UsageError("--gamma-points must be positive")
    try:
        return GridConfig(gamma_grid=default_gamma_grid(args.gamma_points),
                          min_separation=args.min_separation)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _cache(args):
    return CvCache(args.cache) if args.cache else None


def _write_json(out: Path, name: str, obj) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(json.dumps(obj, sort_keys=True, indent=1, default=_jsonable), encoding="utf-8")
    return p


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _emit(args, obj, text: str) -> None:
    if args.format == "json":
        print(json.dumps(obj, sort_keys=True, indent=1, default=_jsonable))
    else:
        print(text)


def _spec(code: str):
    try:
        return parse_spec(code)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_ingest(args) -> None:
    man = _load(args)
    out = Path(args.out)
    rows = {n: {"start_year": s.start_year, "end_year": s.end_year, "T": s.T}
            for n, s in man.series.items()}
    from .dataset import save_csv
    out.mkdir(parents=True, exist_ok=True)
    save_csv(man.series, out / "series.csv")
    _write_json(out, "ingest.json", rows)
    _emit(args, rows, "\n".join(f"{n}\t{r['start_year']}-{r['end_year']}\tT={r['T']}" for n, r in rows.items()))


def cmd_fit(args) -> None:
    spec = _spec(args.spec)
    man = _load(args)
    res, lines = {}, []
    for name, s in man.series.items():
        grid = _grid(args)
        fit = fit_differenced(s, spec, grid) if args.differences else fit_nls(s, spec, grid)
        d = fit.to_dict(with_arrays=False)
        d["change_dates"] = change_years(fit, s)
        res[name] = d
        dates = ", ".join(str(c["year"]) for c in d["change_dates"]) or "-"
        lines.append(f"{name}\t{spec.label()}\tSSR={fit.ssr:.4f}\tdates: {dates}")
    _write_json(Path(args.out), "fit.json", res)
    _emit(args, res, "\n".join(lines))


def cmd_breaks(args) -> None:
    man = _load(args)
    mc, cache = _mc(args), _cache(args)
    res, lines = {}, []
    for name, s in man.series.items():
        dec = decide_changes(s, args.family, TrimmingSet(), mc, cache)
        res[name] = dec.to_dict()
        lines.append(f"{name}\t{args.family}\tchanges={dec.changes_label}\tmodel={dec.model}")
    _write_json(Path(args.out), "breaks.json", res)
    _emit(args, res, "\n".join(lines))


def cmd_kpss(args) -> None:
    spec = _spec(args.spec)
    ks = tuple(args.k) if args.k else DEFAULT_KS
    if not all(0 < k < 1 for k in ks):
        raise UsageError("--k must lie in (0, 1)")
    if args.reps < 500:
        raise UsageError("--reps must be at least 500 for critical values")
    man = _load(args)
    mc, cache = _mc(args), _cache(args)
    outs = [(n, stationarity_test(s, spec, _grid(args), ks, mc, cache)) for n, s in man.series.items()]
    res = {n: o.to_dict() for n, o in outs}
    _write_json(Path(args.out), "kpss.json", res)
    _emit(args, res, format_table(outs, ks))


def cmd_cv(args) -> None:
    mc, cache = _mc(args), _cache(args)
    if args.T < 20:
        raise UsageError("--T must be at least 20")
    if args.test == "kpss":
        if not args.spec:
            raise UsageError("--spec is required for --test kpss")
        table = simulate_null_cv(_spec(args.spec), args.T, GridConfig(), args.k, mc, cache)
    else:
        if args.test.startswith("expw21") and args.break_index is None:
            raise UsageError(f"--break-index is required for --test {args.test}")
        table = simulate_test_cv(args.test, args.family, args.T, mc, break_index=args.break_index,
                                 cache=cache)
    d = table.to_dict()
    _write_json(Path(args.out), f"cv_{args.test}_T{args.T}.json", d)
    _emit(args, d, "\t".join(f"{lvl}: {v:.4f}" for lvl, v in table.values.items()))


def cmd_pipeline(args) -> None:
    if args.reps < 500:
        raise UsageError("--reps must be at least 500 for critical values")
    man = _load(args)
    cfg = PipelineConfig(mc=_mc(args), grid=_grid(args))
    report = run_all(man, cfg, _cache(args), threads=max(1, args.threads))
    paths = write_bundle(report, args.out)
    counts = report.verdict_counts()
    _emit(args, {"files": [str(p) for p in paths], "verdict_counts": counts},
          "\n".join([f"{k}: {v}" for k, v in sorted(counts.items())] + [str(p) for p in paths]))
    failed = [e for e in report.entries if e.failed]
    for e in failed:
        log.error("%s: %s", e.name, e.error)


def cmd_report(args) -> None:
    try:
        d = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report: {exc}") from exc
    for p in write_tables(d, args.out):
        print(p)


COMMANDS = {"ingest": cmd_ingest, "fit": cmd_fit, "breaks": cmd_breaks, "kpss": cmd_kpss,
            "cv": cmd_cv, "pipeline": cmd_pipeline, "report": cmd_report}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"commodstat: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"commodstat: data error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
