"""Annual price series: CSV ingestion, CPI deflation and log transforms.

The bundled Grilli-Yang-extended files are looked up in the package ``data``
directory or in the directory named by ``COMMODSTAT_DATA``. See
``data/PROVENANCE.md`` for the expected layout.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

MIN_LENGTH = 20

COMMODITIES = (
    "coffee", "cocoa", "tea", "rice", "wheat", "maize", "sugar", "beef", "lamb",
    "banana", "palm_oil", "cotton", "jute", "wool", "hides", "tobacco", "rubber",
    "timber",
)

DATA_ENV = "COMMODSTAT_DATA"
PRICES_FILE = "prices.csv"
CPI_FILE = "cpi.csv"


class DataError(ValueError):
    """Malformed or inadmissible input data."""


@dataclass(frozen=True)
class TimeSeries:
    """A named, gap-free annual series; ``values[i]`` is year ``start_year + i``."""

    name: str
    start_year: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DataError(f"{self.name}: values must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(v)):
            raise DataError(f"{self.name}: non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "start_year", int(self.start_year))

    def __len__(self) -> int:
        return self.values.size

    @property
    def T(self) -> int:
        return self.values.size

    @property
    def end_year(self) -> int:
        return self.start_year + self.values.size - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.end_year + 1)

    def value_at(self, year: int) -> float:
        i = int(year) - self.start_year
        if not 0 <= i < self.T:
            raise DataError(f"{self.name}: year {year} outside {self.start_year}-{self.end_year}")
        return float(self.values[i])

    def window(self, first: int, last: int) -> "TimeSeries":
        i, j = first - self.start_year, last - self.start_year
        if i < 0 or j >= self.T or i > j:
            raise DataError(f"{self.name}: window {first}-{last} outside series range")
        return TimeSeries(self.name, first, self.values[i:j + 1])

    def with_values(self, values, name: str | None = None, start_year: int | None = None):
        return TimeSeries(name or self.name,
                          self.start_year if start_year is None else start_year, values)


@dataclass
class DatasetManifest:
    series: dict[str, TimeSeries]
    deflator: TimeSeries | None = None
    base_year: int | None = None

    def __post_init__(self):
        if self.deflator is None:
            return
        for s in self.series.values():
            if s.start_year < self.deflator.start_year or s.end_year > self.deflator.end_year:
                raise DataError(f"deflator does not cover {s.name} ({s.start_year}-{s.end_year})")
            if self.base_year is not None and not s.start_year <= self.base_year <= s.end_year:
                raise DataError(f"base year {self.base_year} missing from {s.name}")

    def __len__(self) -> int:
        return len(self.series)

    def names(self) -> list[str]:
        return list(self.series)

    def real_log_prices(self) -> "DatasetManifest":
        """Log of the CPI-deflated index (``base_year`` = 100) for every series."""
        if self.deflator is None or self.base_year is None:
            raise DataError("manifest has no deflator/base year")
        out = {name: log_transform(deflate(s, self.deflator, self.base_year))
               for name, s in self.series.items()}
        return DatasetManifest(out)


def _longest_run(mask: np.ndarray) -> tuple[int, int]:
    best, best_len, start = (0, 0), 0, None
    for i, ok in enumerate(np.append(mask, False)):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best_len:
                best, best_len = (start, i), i - start
            start = None
    return best


def load_csv(source: str | os.PathLike | IO[str] | IO[bytes],
             missing: Iterable[str] = ("", "NA", "NaN", "nan", ".."),
             contiguous: Iterable[str] = ()) -> DatasetManifest:
    """Read a ``year,<series>...`` CSV into a manifest.

    Each column becomes one :class:`TimeSeries`, truncated to its longest run of
    non-missing cells. Columns named in ``contiguous`` must not contain internal
    gaps (only leading/trailing missing cells are allowed).
    """
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="utf-8-sig")
    else:
        raw = source.read()
        text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if not rows:
        raise DataError("empty CSV")
    header = [h.strip() for h in rows[0]]
    if not header or header[0].lower() != "year":
        raise DataError("first column must be 'year'")
    names = header[1:]
    missing = set(missing)
    contiguous = set(contiguous)

    years = []
    cols: list[list[float]] = [[] for _ in names]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            years.append(int(row[0].strip()))
        except ValueError:
            raise DataError(f"line {lineno}: unparseable year {row[0]!r}") from None
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell in missing:
                cols[j].append(math.nan)
                continue
            try:
                cols[j].append(float(cell))
            except ValueError:
                raise DataError(f"line {lineno}, column {names[j]!r}: unparseable cell {cell!r}") from None

    yr = np.asarray(years)
    if yr.size > 1:
        steps = np.diff(yr)
        if np.any(steps <= 0):
            raise DataError("years must be strictly increasing")
        if np.any(steps != 1):
            bad = int(yr[1:][steps != 1][0])
            raise DataError(f"gap in years before {bad}")

    series = {}
    for name, col in zip(names, cols):
        v = np.asarray(col, dtype=float)
        ok = np.isfinite(v)
        if not ok.any():
            continue
        lo, hi = _longest_run(ok)
        if name in contiguous:
            first, last = np.flatnonzero(ok)[[0, -1]]
            if (last - first + 1) != (hi - lo):
                raise DataError(f"internal gap inside contiguous series {name!r}")
        series[name] = TimeSeries(name, int(yr[lo]), v[lo:hi])
    return DatasetManifest(series)


def save_csv(series: Mapping[str, TimeSeries], path: str | os.PathLike) -> None:
    """Write series side by side on their union year range (empty = missing)."""
    if not series:
        Path(path).write_text("year\n", encoding="utf-8")
        return
    lo = min(s.start_year for s in series.values())
    hi = max(s.end_year for s in series.values())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["year", *series])
        for year in range(lo, hi + 1):
            row = [year]
            for s in series.values():
                row.append(repr(s.value_at(year)) if s.start_year <= year <= s.end_year else "")
            w.writerow(row)


def deflate(nominal: TimeSeries, cpi: TimeSeries, base_year: int) -> TimeSeries:
    """Real price index equal to 100 at ``base_year``.

    ``real_t = 100 * (nominal_t / nominal_base) / (cpi_t / cpi_base)`` over the
    nominal series' years, which the CPI must cover.
    """
    if not nominal.start_year <= base_year <= nominal.end_year:
        raise DataError(f"base year {base_year} missing from {nominal.name}")
    if nominal.start_year < cpi.start_year or nominal.end_year > cpi.end_year:
        raise DataError(f"deflator does not cover {nominal.name}")
    c = cpi.window(nominal.start_year, nominal.end_year).values
    if np.any(nominal.values <= 0) or np.any(c <= 0):
        raise DataError(f"{nominal.name}: non-positive price or deflator value")
    b = base_year - nominal.start_year
    real = 100.0 * (nominal.values / nominal.values[b]) / (c / c[b])
    real[b] = 100.0
    return nominal.with_values(real)


def log_transform(series: TimeSeries) -> TimeSeries:
    if np.any(series.values <= 0):
        raise DataError(f"{series.name}: log of non-positive value")
    return series.with_values(np.log(series.values))


def difference(series: TimeSeries) -> TimeSeries:
    """First differences; the result starts one year later."""
    if series.T < 2:
        raise DataError(f"{series.name}: need at least 2 observations to difference")
    return series.with_values(np.diff(series.values), start_year=series.start_year + 1)


def bundled_dir() -> Path:
    env = os.environ.get(DATA_ENV)
    return Path(env) if env else Path(__file__).parent / "data"


def load_bundled(directory: str | os.PathLike | None = None, base_year: int = 1900,
                 real_logs: bool = True) -> DatasetManifest:
    """Load the 18-commodity nominal price file and the US CPI file.

    Returns log real price indices by default; ``real_logs=False`` returns the
    raw manifest with its deflator attached.
    """
    d = Path(directory) if directory is not None else bundled_dir()
    prices, cpi = d / PRICES_FILE, d / CPI_FILE
    if not prices.exists() or not cpi.exists():
        raise FileNotFoundError(
            f"bundled dataset not found in {d}: expected {PRICES_FILE} and {CPI_FILE} "
            f"(set {DATA_ENV} to their directory; see data/PROVENANCE.md)")
    raw = load_csv(prices)
    defl = load_csv(cpi)
    if len(defl) != 1:
        raise DataError(f"{CPI_FILE} must hold exactly one series")
    manifest = DatasetManifest(raw.series, next(iter(defl.series.values())), base_year)
    return manifest.real_log_prices() if real_logs else manifest
