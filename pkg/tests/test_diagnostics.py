import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from limis.diagnostics import (DiagnosticsReport, c_hat_standard_error, efficiency, ess_is,
                               ess_is_log, ess_mc, marginal_accuracy, moment_estimates, rmse_table,
                               write_table_csv)


def test_ess_is_examples():
    assert ess_is(np.ones(7)) == pytest.approx(7.0)
    assert ess_is(np.array([0, 0, 3.0, 0])) == pytest.approx(1.0)
    assert ess_is(np.array([1.0, 1.0, 2.0])) == pytest.approx(16 / 6)
    with pytest.raises(ValueError):
        ess_is(np.zeros(3))
    with pytest.raises(ValueError):
        ess_is(np.array([1.0, -1.0]))


@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=50).filter(lambda w: max(w) > 0),
       st.floats(1e-6, 1e6))
def test_ess_scale_invariance(w, c):
    w = np.array(w)
    assert ess_is(c * w) == pytest.approx(ess_is(w), rel=1e-9)
    assert 1.0 - 1e-9 <= ess_is(w) <= w.size + 1e-9
    with np.errstate(divide="ignore"):
        assert ess_is_log(np.log(w)) == pytest.approx(ess_is(w), rel=1e-9)


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=60))
def test_efficiency_bounds(lw):
    lw = np.array(lw)
    ef = efficiency(lw)
    assert 1 / lw.size - 1e-12 <= ef <= 1 + 1e-12


def test_ess_mc_white_noise(rng):
    x = rng.standard_normal(10_000)
    assert abs(ess_mc(x) - 10_000) / 10_000 < 0.1


def test_ess_mc_ar1(rng):
    n, phi = 100_000, 0.5
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    assert abs(ess_mc(x) - n / 3) / (n / 3) < 0.1


def test_ess_mc_perfectly_correlated_chain():
    # a chain that only drifts: every lag is almost perfectly correlated
    x = np.arange(1000, dtype=float)
    assert 1.0 <= ess_mc(x) <= 3.0


def test_ess_mc_clamped_to_n():
    x = np.tile([1.0, -1.0], 500)  # antithetic chain, raw ESS would exceed n
    assert ess_mc(x) == 1000.0


def test_ess_mc_min_over_dims(rng):
    a = rng.standard_normal(5000)
    b = np.repeat(rng.standard_normal(500), 10)
    assert ess_mc(np.c_[a, b]) == pytest.approx(ess_mc(b))


def test_ess_mc_errors():
    with pytest.raises(ValueError, match="degenerate"):
        ess_mc(np.ones(100))
    with pytest.raises(ValueError):
        ess_mc(np.arange(5.0))


def test_ma_self_consistency(rng):
    x = rng.standard_normal(100_000)
    assert marginal_accuracy(x, np.ones_like(x), norm.pdf) >= 0.98


def test_ma_shifted_unit_gaussians(rng):
    x = rng.normal(1.0, 1.0, 100_000)
    expected = 1 - (norm.cdf(0.5) - norm.cdf(-0.5))
    assert marginal_accuracy(x, np.ones_like(x), norm.pdf) == pytest.approx(expected, abs=0.02)


def test_ma_disjoint(rng):
    x = rng.normal(100.0, 1.0, 10_000)
    assert marginal_accuracy(x, np.ones_like(x), norm.pdf) < 1e-6


def test_ma_affine_invariance(rng):
    x = rng.normal(0.3, 1.2, 20_000)
    w = rng.uniform(0.5, 1.5, x.size)
    a, c = 3.0, -2.0
    base = marginal_accuracy(x, w, norm.pdf)
    moved = marginal_accuracy(a * x + c, w, lambda y: norm.pdf((y - c) / a) / a)
    assert moved == pytest.approx(base, abs=1e-9)


def test_ma_matrix_input_and_ess_guard(rng):
    X = rng.standard_normal((5000, 3))
    assert marginal_accuracy(X, np.ones(5000), norm.pdf, dim_index=2) > 0.95
    w = np.zeros(5000)
    w[:5] = 1.0
    with pytest.raises(ValueError, match="too few effective samples"):
        marginal_accuracy(X, w, norm.pdf, dim_index=0)


def test_moment_estimates_hand_case():
    X = np.array([[1.0], [2.0], [4.0]])
    w = np.array([1.0, 2.0, 1.0])
    mean, var, c = moment_estimates(X, np.log(w))
    m = (1 + 4 + 4) / 4
    assert mean[0] == pytest.approx(m, rel=1e-14)
    assert var[0] == pytest.approx((1 * (1 - m) ** 2 + 2 * (2 - m) ** 2 + (4 - m) ** 2) / 4, rel=1e-14)
    assert c == pytest.approx(4 / 3, rel=1e-14)


def test_moment_estimates_constant_weights():
    X = np.arange(6.0).reshape(3, 2)
    assert moment_estimates(X, np.zeros(3))[2] == 1.0


def test_moment_estimates_standard_normal(rng):
    n = 100_000
    X = rng.standard_normal((n, 3))
    mean, var, _ = moment_estimates(X, np.zeros(n))
    assert np.all(np.abs(mean) < 3 / math.sqrt(n))
    assert np.all(np.abs(var - 1) < 3 * math.sqrt(2 / n))


def test_c_hat_standard_error():
    lw = np.log(np.array([1.0, 2.0, 3.0, 4.0])) + 500.0
    log_c, rel = c_hat_standard_error(lw)
    assert log_c == pytest.approx(math.log(2.5) + 500.0)
    assert rel == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2 / 2.5)


def test_rmse_table_examples():
    ref = {"a": 2.0}
    exact = rmse_table([{"a": 2.0}, {"a": 2.0}], ref)["a"]
    assert exact["rmse"] == 0.0 and math.isnan(exact["bias2_over_mse"])
    noise = rmse_table([{"a": 1.0}, {"a": 3.0}], ref)["a"]
    assert noise["rmse"] == pytest.approx(1.0) and noise["bias2_over_mse"] == pytest.approx(0.0)
    bias = rmse_table([{"a": 3.0}, {"a": 3.0}], ref)["a"]
    assert bias["rmse"] == pytest.approx(1.0) and bias["bias2_over_mse"] == pytest.approx(1.0)
    vec = rmse_table([{"v": [1.0, 0.0]}, {"v": [3.0, 0.0]}], {"v": [2.0, 1.0]})["v"]
    assert vec["rmse"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rmse_table([{"a": 1.0}], ref)


def test_report_validation():
    DiagnosticsReport(efficiency=0.5, ess=10.0, marginal_accuracy={"x1": 0.9})
    with pytest.raises(ValueError):
        DiagnosticsReport(efficiency=1.5, ess=10.0)
    with pytest.raises(ValueError):
        DiagnosticsReport(efficiency=0.5, ess=10.0, marginal_accuracy={"x1": 1.2})


def test_write_table_csv(tmp_path):
    p = tmp_path / "t.csv"
    write_table_csv(p, [{"metric": "EF", "value": 0.5}], ["metric", "value"])
    assert p.read_text().splitlines() == ["metric,value", "EF,0.5"]
