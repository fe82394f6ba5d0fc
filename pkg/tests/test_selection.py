import math

import numpy as np
import pytest

from commodstat.fitting import FitResult, fit_nls
from commodstat.selection import DegenerateFitError, criteria, select
from commodstat.trend import TrendParams, TrendSpec

DATA = np.random.default_rng(0).standard_normal(100) * 3


def _fake(p, ssr, spec=TrendSpec(1)):
    return FitResult(spec, TrendParams((0.0, 0.0)), np.zeros(100), ssr, 100, p, DATA, DATA)


def test_criteria_by_hand():
    f = _fake(4, 50.0)
    c = criteria(f)
    ll = 100 * math.log(0.5)
    assert c.sic == pytest.approx(ll + 4 * math.log(100))
    assert c.aic == pytest.approx(ll + 8)
    tss = np.sum((DATA - DATA.mean()) ** 2)
    assert c.adj_r2 == pytest.approx(1 - (50 / 96) / (tss / 99))


def test_nonlinear_parameter_convention(rng):
    y = rng.standard_normal(60).cumsum()
    fit = fit_nls(y, TrendSpec(1, "III", "logistic", 1))
    assert criteria(fit).p == 6
    assert criteria(fit, count_nonlinear=False).p == 4


def test_majority_and_first_tie():
    cands = [(TrendSpec(1), _fake(2, 90.0)), (TrendSpec(2), _fake(3, 60.0)), (TrendSpec(2), _fake(3, 60.0))]
    sel = select(cands)
    assert sel.winner == 1 and sel.majority
    assert sel.votes == {"sic": 1, "aic": 1, "adj_r2": 1}
    assert sel.to_dict()["label"] == "Quadratic"


def test_three_way_split_falls_back_to_sic():
    cands = [(TrendSpec(1), _fake(1, 100.0)), (TrendSpec(2), _fake(3, 95.0)),
             (TrendSpec(1, "III", "step", 1), _fake(6, 91.0))]
    with pytest.warns(RuntimeWarning, match="three ways"):
        sel = select(cands)
    assert sel.votes == {"sic": 0, "aic": 1, "adj_r2": 2}
    assert sel.winner == 0 and not sel.majority


def test_degenerate_and_empty():
    with pytest.raises(DegenerateFitError):
        criteria(_fake(2, 0.0))
    with pytest.raises(ValueError):
        select([])
