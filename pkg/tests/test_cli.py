import csv
import json

import numpy as np
import pytest

from commodstat.cli import main


@pytest.fixture
def series_csv(tmp_path):
    rng = np.random.default_rng(8)
    T = 60
    s = np.arange(1, T + 1) / T
    a = 1 + 0.5 * s - 0.8 * (s > 0.5) + 0.2 * rng.standard_normal(T)
    b = 2 + 0.3 * rng.standard_normal(T)
    p = tmp_path / "in" / "series.csv"
    p.parent.mkdir()
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "a", "b"])
        for i in range(T):
            w.writerow([1950 + i, a[i], b[i]])
    return p


def _files(root):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())


def test_fit_writes_only_under_out(series_csv, tmp_path, capsys):
    out = tmp_path / "out"
    before = _files(tmp_path)
    assert main(["fit", "--series-csv", str(series_csv), "--spec", "lin-break-III-1", "--out", str(out)]) == 0
    assert "dates: 1980" in capsys.readouterr().out
    new = set(_files(tmp_path)) - set(before)
    assert new == {"out/fit.json"}
    d = json.loads((out / "fit.json").read_text())
    assert d["a"]["change_dates"][0]["year"] == 1980


def test_usage_and_data_errors(series_csv, tmp_path, monkeypatch, capsys):
    out = str(tmp_path / "o")
    assert main(["fit", "--series-csv", str(series_csv), "--spec", "cubic", "--out", out]) == 2
    assert main(["nonsense"]) == 2
    assert main(["fit", "--series-csv", str(tmp_path / "missing.csv"), "--spec", "lin", "--out", out]) == 1
    monkeypatch.setenv("COMMODSTAT_DATA", str(tmp_path / "empty"))
    assert main(["ingest", "--out", out]) == 1
    assert "prices.csv" in capsys.readouterr().err
    assert main(["fit", "--series-csv", str(series_csv), "--series", "zz", "--spec", "lin", "--out", out]) == 1
    assert main(["kpss", "--series-csv", str(series_csv), "--spec", "lin", "--reps", "100", "--out", out]) == 2


def test_ingest_and_cv(series_csv, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["ingest", "--series-csv", str(series_csv), "--out", str(out), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows["a"] == {"start_year": 1950, "end_year": 2009, "T": 60}
    cache = tmp_path / "cache"
    args = ["cv", "--test", "expw", "--family", "linear", "--T", "60", "--reps", "100",
            "--cache", str(cache), "--out", str(out)]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    assert len(list(cache.glob("*.json"))) == 1
    assert main(["cv", "--test", "expw21", "--T", "60", "--out", str(out)]) == 2


def test_pipeline_then_report(series_csv, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["pipeline", "--series-csv", str(series_csv), "--reps", "500", "--gamma-points", "4",
               "--out", str(out)])
    assert rc == 0
    for name in ("report.json", "table1_changes.csv", "table2_selection.csv",
                 "table3_stationarity.csv", "table4_dates.csv"):
        assert (out / name).exists()
    assert main(["report", str(out / "report.json"), "--out", str(tmp_path / "re")]) == 0
    assert (tmp_path / "re" / "table3_stationarity.csv").read_bytes() == \
        (out / "table3_stationarity.csv").read_bytes()
