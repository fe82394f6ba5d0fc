import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from commodstat.trend import (ChangeParams, TrendParams, TrendSpec, eval_trend, parse_spec,
                              regressor_matrix, relative_time, transition_logistic,
                              transition_step)


def test_step_is_strict():
    s = np.array([0.25, 0.5, 0.50000001, 0.75])
    assert_array_equal(transition_step(s, 0.5), [0, 0, 1, 1])


def test_logistic_midpoint_and_saturation():
    assert transition_logistic(0.3, 0.3, 7.0) == pytest.approx(0.5)
    # no overflow far from the midpoint
    assert transition_logistic(1.0, 0.0, 1e6) == 1.0
    assert transition_logistic(0.0, 1.0, 1e6) == 0.0
    z = 2.0 * (0.9 - 0.4)
    assert transition_logistic(0.9, 0.4, 2.0) == pytest.approx(1 / (1 + np.exp(-z)))


@pytest.mark.parametrize("spec, p", [
    (TrendSpec(1, "III", "none", 0), 2),
    (TrendSpec(2, "III", "none", 0), 3),
    (TrendSpec(1, "I", "step", 1), 4),
    (TrendSpec(2, "III", "step", 2), 9),
    (TrendSpec(1, "III", "logistic", 1), 6),
    (TrendSpec(2, "III", "logistic", 1), 7),
    (TrendSpec(2, "I", "logistic", 2), 9),
])
def test_parameter_counts(spec, p):
    assert spec.n_params == p


def test_spec_validation():
    with pytest.raises(ValueError):
        TrendSpec(3)
    with pytest.raises(ValueError):
        TrendSpec(2, "II", "step", 1)
    with pytest.raises(ValueError):
        TrendSpec(2, "III", "step", 0)
    with pytest.raises(ValueError):
        TrendSpec(2, "III", "none", 1)
    with pytest.raises(ValueError):
        TrendSpec(2, "III", "step", 3)


@pytest.mark.parametrize("code, label", [
    ("quad", "Quadratic"),
    ("lin-break-III-2", "Linear Break III(2)"),
    ("quad-smooth-I-1", "Quadratic Smooth I(1)"),
    ("const", "Constant"),
])
def test_parse_and_label(code, label):
    spec = parse_spec(code)
    assert spec.label() == label
    assert parse_spec(spec.code()) == spec
    assert TrendSpec.from_dict(spec.to_dict()) == spec


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_spec("cubic-break-III-1")


def test_regressor_columns_by_hand():
    T = 5
    s = np.arange(1, 6) / 5
    X = regressor_matrix(TrendSpec(2, "III", "step", 1), [(0.4,)], T)
    F = (s > 0.4).astype(float)
    assert_allclose(X, np.column_stack([np.ones(5), s, s ** 2, F, s * F]))
    X1 = regressor_matrix(TrendSpec(1, "I", "logistic", 1), [(0.5, 3.0)], T)
    assert_allclose(X1[:, 2], 1 / (1 + np.exp(-3.0 * (s - 0.5))))


def test_eval_trend_matches_formula():
    spec = TrendSpec(2, "III", "step", 2)
    par = TrendParams((1.0, -2.0, 0.5), (ChangeParams(0.3, 0.25, 1.5), ChangeParams(-0.7, 0.6, -0.2)))
    s = relative_time(40)
    F1, F2 = (s > 0.25), (s > 0.6)
    expected = 1 - 2 * s + 0.5 * s ** 2 + (0.3 + 1.5 * s) * F1 + (-0.7 - 0.2 * s) * F2
    assert_allclose(eval_trend(spec, par, T=40), expected, atol=1e-14)


def test_eval_trend_checks_params():
    spec = TrendSpec(1, "III", "step", 2)
    bad_order = TrendParams((0.0, 1.0), (ChangeParams(1, 0.7, 0.0), ChangeParams(1, 0.3, 0.0)))
    with pytest.raises(ValueError, match="sorted"):
        eval_trend(spec, bad_order, T=20)
    no_eta = TrendParams((0.0, 1.0), (ChangeParams(1, 0.3), ChangeParams(1, 0.7)))
    with pytest.raises(ValueError, match="eta"):
        eval_trend(spec, no_eta, T=20)


def test_params_round_trip():
    par = TrendParams((1.0, 2.0), (ChangeParams(0.1, 0.4, None, 12.0),))
    assert TrendParams.from_dict(par.to_dict()) == par
