"""Nonlinear-trend stationarity analysis for long annual price series."""

from .dataset import (DataError, DatasetManifest, TimeSeries, deflate, difference,
                      load_bundled, load_csv, log_transform, save_csv)
from .trend import ChangeParams, TrendParams, TrendSpec, eval_trend, parse_spec, regressor_matrix
from .fitting import FitResult, GridConfig, fit_differenced, fit_nls, profile_ols
from .stationarity import (TestOutcome, kpss_from_residuals, kpss_stat, kurozumi_bandwidth,
                           lrv_bartlett, stationarity_test)
from .breaks import (BreakDecision, TrimmingConfig, TrimmingSet, decide_changes, expw, expw_2v1, one_break_index,
                     level_break_U, wald_profile)
from .montecarlo import (CvCache, ErrorComponentDGP, McConfig, MemoryCache, simulate_null_cv,
                         simulate_test_cv, size_power_study)
from .selection import Selection, criteria, select
from .pipeline import PipelineConfig, PipelineReport, change_years, run_all, run_series, write_bundle

__version__ = "0.1.0"

__all__ = [n for n in dir() if not n.startswith("_")]
