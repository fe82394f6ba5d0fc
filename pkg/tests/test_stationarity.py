import numpy as np
import pytest
from numpy.testing import assert_allclose

from commodstat.montecarlo import McConfig, MemoryCache
from commodstat.stationarity import (LrvConfig, LrvError, TestOutcome, autocovariances,
                                     format_table, kpss_from_residuals, kpss_stat,
                                     kurozumi_bandwidth, lag1_autocorrelation, lrv_bartlett,
                                     stationarity_test)
from commodstat.trend import TrendSpec


def test_kpss_stat_hand_example():
    e = np.array([1.0, -1.0, 2.0, -2.0])
    # partial sums 1, 0, 2, 0 -> sum of squares 5; / (16 * sigma2)
    assert kpss_stat(e, 2.0) == pytest.approx(5 / 32)


def test_kpss_stat_rejects_bad_variance():
    with pytest.raises(LrvError):
        kpss_stat(np.ones(5), 0.0)


def test_bartlett_lrv_by_hand():
    e = np.array([1.0, 2.0, -1.0, 0.5, -2.5])
    T = e.size
    g = [np.sum(e[j:] * e[:T - j]) / T for j in range(3)]
    expected = g[0] + 2 * ((1 - 1 / 3) * g[1] + (1 - 2 / 3) * g[2])
    assert lrv_bartlett(e, 2) == pytest.approx(expected)
    assert lrv_bartlett(e, 0) == pytest.approx(g[0])
    assert_allclose(autocovariances(e, 2), g)


def test_lrv_inadmissible():
    # strongly negatively autocorrelated residuals drive the estimate negative
    e = np.array([1.0, -1.0] * 4)
    with pytest.raises(LrvError):
        lrv_bartlett(e, 1, kernel="qs")


@pytest.mark.filterwarnings("ignore::Warning")
def test_matches_statsmodels_level_kpss(rng):
    sm = pytest.importorskip("statsmodels.tsa.stattools")
    y = rng.standard_normal(150).cumsum() * 0.1 + rng.standard_normal(150)
    e = y - y.mean()
    for l in (0, 3, 11):
        ours = kpss_stat(e, lrv_bartlett(e, l))
        ref = sm.kpss(y, regression="c", nlags=l)[0]
        assert ours == pytest.approx(ref, rel=1e-12)


def test_kurozumi_bandwidth_cap():
    # A(k) for T=119, k=0.8: 1.1447 * (4*.64*119 / (1.8^2 * .2^2))^(1/3) = 15.22 -> cap 15
    rho = 0.9
    rng = np.random.default_rng(0)
    e = np.zeros(119)
    for t in range(1, 119):
        e[t] = rho * e[t - 1] + rng.standard_normal()
    assert lag1_autocorrelation(e) > 0.8
    assert kurozumi_bandwidth(e, 0.8) == 15
    # k = 0.5: A(0.5) = 1.1447 * (4*.25*119/(2.25*.25))^(1/3) = 6.82 -> 6
    assert kurozumi_bandwidth(e, 0.5) == 6


def test_kurozumi_uses_data_term_when_smaller():
    e = np.array([1.0, -0.5, 0.2, 0.4, -1.0, 0.3] * 10)
    rho = lag1_autocorrelation(e)
    T = e.size
    a = 1.1447 * (4 * rho ** 2 * T / ((1 + rho) ** 2 * (1 - rho) ** 2)) ** (1 / 3)
    assert kurozumi_bandwidth(e, 0.9) == int(np.floor(a))


def test_zero_residuals_give_zero():
    assert kpss_from_residuals(np.zeros(30), 0.5) == 0.0


def test_lrv_config_validation():
    with pytest.raises(ValueError):
        LrvConfig(k=1.0)
    with pytest.raises(ValueError):
        LrvConfig(kernel="triangle")


def test_outcome_letters_and_decisions():
    out = TestOutcome(TrendSpec(), {0.5: 0.09, 0.8: 0.2}, {"10%": 0.07, "5%": 0.085, "1%": 0.12}, 2000, 1)
    assert out.significance(0.5) == "b"
    assert out.significance(0.8) == "c"
    assert out.rejects("5%") and not out.rejects("1%")
    assert out.decisions[(0.5, "10%")]
    assert "0.0900 ^b" in format_table([("x", out)], ks=(0.5, 0.8))


def test_stationarity_test_end_to_end(rng):
    T = 60
    s = np.arange(1, T + 1) / T
    y = 1 + s - s ** 2 + 0.2 * rng.standard_normal(T)
    out = stationarity_test(y, TrendSpec(2, "III", "none", 0), mc=McConfig(replications=500, seed=4),
                            cache=MemoryCache())
    assert set(out.statistic_by_k) == {0.5, 0.8, 0.9}
    cv = out.critical_values
    assert cv["10%"] < cv["5%"] < cv["1%"]
    assert out.fit is not None and out.fit.T == T
    with pytest.raises(ValueError, match="500"):
        stationarity_test(y, TrendSpec(2), mc=McConfig(replications=100))
