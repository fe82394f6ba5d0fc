"""End-to-end analysis of a small synthetic panel, written as CSV tables."""
import tempfile
from pathlib import Path

import numpy as np

from commodstat import (ChangeParams, DatasetManifest, GridConfig, McConfig, MemoryCache,
                        PipelineConfig, TimeSeries, TrendParams, eval_trend, parse_spec,
                        run_all, write_bundle)
from commodstat.fitting import default_gamma_grid

rng = np.random.default_rng(2024)
T = 100
spec = parse_spec("lin-break-III-1")
trend = eval_trend(spec, TrendParams((0.0, -1.0), (ChangeParams(0.8, 0.5, 1.5),)), T)
man = DatasetManifest({
    "broken": TimeSeries("broken", 1919, trend + 0.2 * rng.standard_normal(T)),
    "walk": TimeSeries("walk", 1919, np.cumsum(0.1 * rng.standard_normal(T))),
})

# Small grid and few replications so the demo finishes quickly
cfg = PipelineConfig(grid=GridConfig(gamma_grid=default_gamma_grid(8)),
                     mc=McConfig(replications=500))
report = run_all(man, cfg, MemoryCache())
for e in report.entries:
    print(e.name, e.verdict, e.final_fit.spec.label() if e.final_fit else None, e.change_dates)
print(report.verdict_counts())

with tempfile.TemporaryDirectory() as d:
    for p in write_bundle(report, d):
        print(Path(p).relative_to(d))
