import numpy as np
import pytest
from numpy.testing import assert_allclose

from commodstat.breaks import (TrimmingConfig, TrimmingSet, candidate_breaks, decide_changes, expw,
                               expw_2v1, level_break_U, quasi_gls_rho, wald_profile)
from commodstat.montecarlo import McConfig, MemoryCache


def _wald_oracle(y, order, tb, restriction):
    T = y.size
    s = np.arange(1, T + 1) / T
    F = (np.arange(1, T + 1) > tb).astype(float)
    X = np.column_stack([s ** j for j in range(order + 1)] + [F, s * F])
    u = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
    rho = (u[1:] @ u[:-1]) / (u[:-1] @ u[:-1])
    rho = 1.0 if abs(rho - 1) < T ** -0.5 else min(max(rho, -0.99), 0.99)
    Xq = np.vstack([X[:1], X[1:] - rho * X[:-1]])
    yq = np.r_[y[:1], y[1:] - rho * y[:-1]]
    b = np.linalg.lstsq(Xq, yq, rcond=None)[0]
    e = yq - Xq @ b
    V = (e @ e) / (T - X.shape[1]) * np.linalg.inv(Xq.T @ Xq)
    idx = [-2, -1] if restriction == "full" else [-1]
    r = b[idx]
    return float(r @ np.linalg.solve(V[np.ix_(idx, idx)], r))


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("restriction", ["full", "slope"])
def test_wald_matches_oracle(rng, order, restriction):
    T = 70
    for kind in ("iid", "rw"):
        e = rng.standard_normal(T)
        y = np.cumsum(e) if kind == "rw" else e + np.linspace(0, 1, T)
        tbs = np.array([10, 35, 55])
        W = wald_profile(y, order, tbs, restriction)
        assert_allclose(W, [_wald_oracle(y, order, tb, restriction) for tb in tbs], rtol=1e-8)


def test_quasi_gls_rho_truncation(rng):
    T = 200
    rw = np.cumsum(rng.standard_normal(T))
    assert quasi_gls_rho(rw) == 1.0
    iid = rng.standard_normal(T)
    r = quasi_gls_rho(iid)
    assert abs(r) < 0.3
    assert quasi_gls_rho(np.array([1.0, 1.0, 1.0, 1.0]), truncation=0.0) == 0.99


def test_candidate_breaks_trimming():
    tb = candidate_breaks(100, 0.05)
    assert tb[0] == 5 and tb[-1] == 95


def test_expw_is_log_mean_exp_over_T(rng):
    y = rng.standard_normal(60)
    trim = TrimmingConfig(0.1, 0.5, 0.1)
    tbs = candidate_breaks(60, 0.1)
    W = np.array([_wald_oracle(y, 1, tb, "full") for tb in tbs])
    expected = np.log(np.sum(np.exp(W / 2)) / 60)
    assert expw(y, "linear", trim) == pytest.approx(expected, rel=1e-8)


def test_expw_2v1_is_segment_max(rng):
    y = rng.standard_normal(100)
    trim = TrimmingConfig(0.1, 0.1, 0.1)
    res = expw_2v1(y, 1, 40, trim, detail=True)
    a, b = expw(y[:40], 1, trim), expw(y[40:], 1, trim)
    assert res.segments == pytest.approx([a, b])
    assert res.statistic == pytest.approx(max(a, b))
    # delta excludes a short segment
    res2 = expw_2v1(y, 1, 8, trim, detail=True)
    assert res2.excluded == [0]
    assert res2.statistic == pytest.approx(expw(y[8:], 1, trim))


def test_level_break_U_oracle(rng):
    T = 80
    y = rng.standard_normal(T) * 0.1
    y[50:] += 2.0
    u_stat, j = level_break_U(y, "linear", 0.1)
    assert j == 50
    s = np.arange(1, T + 1) / T
    X = np.column_stack([np.ones(T), s])
    d = np.diff(y - X @ np.linalg.lstsq(X, y, rcond=None)[0])
    z = np.abs(d - d.mean()) / (np.sqrt(d.size) * d.std())
    assert u_stat == pytest.approx(z[49])


def test_trimming_validation():
    with pytest.raises(ValueError):
        TrimmingConfig(0.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        TrimmingConfig(0.05, 0.6, 0.1)
    TrimmingConfig(0.05, 0.5, 0.1)


@pytest.fixture(scope="module")
def small_mc():
    return McConfig(replications=300, seed=7)


def test_decide_two_changes(small_mc):
    T = 100
    s = np.arange(1, T + 1) / T
    rng = np.random.default_rng(11)
    y = s + 2.0 * (s > 0.3) - 6.0 * (s - 0.3) * (s > 0.3) + 5.0 * (s - 0.7) * (s > 0.7) \
        + 0.1 * rng.standard_normal(T)
    dec = decide_changes(y, "linear", TrimmingSet(), small_mc, MemoryCache())
    assert dec.n_changes == 2 and dec.model == "III(2)"
    assert dec.counts == (2,)
    assert dec.statistics["expw"]["significance"] == "c"
    d = dec.to_dict()
    assert d["changes_label"] == "2" and d["one_break_index"] == dec.one_break_index


def test_decide_no_change(small_mc):
    y = np.random.default_rng(2).standard_normal(100)
    dec = decide_changes(y, "quadratic", TrimmingSet(), small_mc, MemoryCache())
    assert dec.order == 2
    assert (dec.n_changes, dec.model, dec.alternatives) == (0, "0", None)
    assert set(dec.statistics) == {"expw", "expw_unrestricted", "expw21", "expw21_unrestricted", "U"}
    assert dec.u_applied and dec.level_changes == 0


def test_decide_level_only(small_mc):
    T = 100
    rng = np.random.default_rng(5)
    y = 0.05 * rng.standard_normal(T)
    y[60:] += 1.0
    dec = decide_changes(y, "linear", TrimmingSet(), small_mc, MemoryCache())
    # a pure level shift leaves the slope tests quiet and the level test fires
    assert dec.u_applied
    assert dec.model == "I(1)" and dec.model_class == "I"
    assert dec.level_break_indices == [60]
