import math

import numpy as np
import pytest

from denograd.data import DataMatrix
from denograd.metrics import (MetricError, bayes_signed_rank, correlation_difference, distribution_report,
                              error_metrics, kl_divergence, kl_histogram, normalized_mse, r2_score, smape,
                              underperformance_filter)


def test_r2_examples():
    y = np.array([3, -0.5, 2, 7])
    assert r2_score(y, [2.5, 0.0, 2, 8]) == pytest.approx(0.94861, abs=1e-5)
    assert r2_score(y, y) == 1.0
    assert r2_score(y, np.full(4, y.mean())) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(MetricError):
        r2_score([1, 1, 1], [1, 2, 3])


def test_error_metrics_examples():
    b = error_metrics([1.0], [3.0])
    assert (b.mse, b.rmse, b.mae, b.smape) == (4.0, 2.0, 2.0, 100.0)
    assert math.isnan(b.r2)
    z = error_metrics([1, 2, 3], [1, 2, 3])
    assert z.mse == z.rmse == z.mae == z.smape == 0.0


def test_clipped_r2_and_rmse_invariant():
    b = error_metrics([1, 2, 3, 4], [4, 3, 2, 1])
    assert b.r2 < 0 and b.r2_clipped == 0.0
    assert b.rmse == pytest.approx(math.sqrt(b.mse))


def test_smape_symmetric():
    rng = np.random.default_rng(0)
    a, p = rng.normal(size=20), rng.normal(size=20)
    assert smape(a, p) == pytest.approx(smape(p, a), abs=1e-12)
    assert smape([0.0, 1.0], [0.0, 1.0]) == 0.0


def _dm(*cols):
    return DataMatrix(np.column_stack(cols).astype(float), [f"c{i}" for i in range(len(cols))])


def test_kl_self_is_zero():
    x = np.random.default_rng(1).normal(size=(500, 3))
    kl = kl_divergence(DataMatrix(x, list("abc")), DataMatrix(x.copy(), list("abc")))
    assert all(abs(v) <= 1e-9 for v in kl["kl_per_variable"].values())
    assert kl["kl_mean"] <= 1e-9


def test_kl_disjoint_support_is_large():
    p = np.zeros(100)
    q = np.ones(100)
    # all P mass in bin 0, where Q holds eps only: KL ~ log(1/eps) with eps-normalization
    value = kl_histogram(p, q, bins=50)
    pb = np.array([100] + [0] * 48 + [0]) + 1e-10
    qb = np.array([0] * 49 + [100]) + 1e-10
    pb, qb = pb / pb.sum(), qb / qb.sum()
    assert value == pytest.approx(float(np.sum(pb * np.log(pb / qb))), rel=1e-12)
    assert value > 5


def test_kl_asymmetric():
    rng = np.random.default_rng(2)
    p = rng.exponential(size=2000)
    q = rng.normal(2, 0.5, size=2000)
    assert abs(kl_histogram(p, q) - kl_histogram(q, p)) > 1e-3


def test_correlation_difference_examples():
    x = np.arange(10.0)
    a = _dm(x, 2 * x)
    b = _dm(x, np.array([1, -1, -1, 1, 1, -1, -1, 1, 0, 0], dtype=float))
    assert abs(np.corrcoef(b.values, rowvar=False)[0, 1]) < 1e-12
    cd = correlation_difference(a, b)
    assert cd["corr_diff"] == pytest.approx(0.5, abs=1e-9)
    assert correlation_difference(a, a)["corr_diff"] == 0.0
    rng = np.random.default_rng(3)
    m = rng.normal(size=(50, 3))
    perm = DataMatrix(m[:, [2, 0, 1]], ["c0", "c1", "c2"])
    assert correlation_difference(DataMatrix(m, ["c0", "c1", "c2"]), perm)["corr_diff"] == pytest.approx(0, abs=1e-12)


def test_correlation_difference_drops_constant_columns():
    x = np.arange(10.0)
    cd = correlation_difference(_dm(x, x ** 2, np.ones(10)), _dm(x, x ** 2, np.ones(10)))
    assert cd["excluded"] == ["c2"]


def test_distribution_report_and_nmse():
    rng = np.random.default_rng(4)
    clean = DataMatrix(rng.normal(size=(100, 2)), ["a", "b"])
    noisy = clean.with_values(clean.values + 0.1)
    rep = distribution_report(noisy, noisy)
    assert rep.kl_mean <= 1e-9 and rep.corr_diff == 0.0
    assert normalized_mse(clean, clean) == 0.0
    expected = np.mean(0.01 / clean.values.var(axis=0))
    assert normalized_mse(noisy, clean) == pytest.approx(expected, rel=1e-12)


def test_bayes_self_comparison():
    a = np.random.default_rng(5).uniform(size=12)
    assert bayes_signed_rank(a, a).p_rope > 0.99


def test_bayes_all_positive():
    a = np.random.default_rng(6).uniform(0.5, 1.0, size=10)
    assert bayes_signed_rank(a, a - 0.05, rope=0.01).p_right > 0.99


def test_bayes_negation_symmetry():
    rng = np.random.default_rng(7)
    a, b = rng.uniform(size=15), rng.uniform(size=15)
    fwd = bayes_signed_rank(a, b, samples=50000, seed=3)
    rev = bayes_signed_rank(b, a, samples=50000, seed=3)
    assert abs(fwd.p_left - rev.p_right) <= 0.01
    assert abs(fwd.p_right - rev.p_left) <= 0.01
    assert fwd.p_left + fwd.p_rope + fwd.p_right == pytest.approx(1.0)


def test_filter_examples():
    base = {("d", "m"): 0.5}
    assert underperformance_filter({("x", "d", "m"): 0.39}, base)["x"].flagged == 1
    assert underperformance_filter({("x", "d", "m"): 0.40}, base)["x"].flagged == 0
    cells = {(f"d{i}", "m"): 1.0 for i in range(6)}
    same = underperformance_filter({("x", *k): v for k, v in cells.items()}, cells)["x"]
    assert same.flagged == 0 and not same.discarded
    scores = {("x", f"d{i}", "m"): (0.1 if i < 4 else 1.0) for i in range(6)}
    v = underperformance_filter(scores, cells)["x"]
    assert (v.flagged, v.cells, v.discarded) == (4, 6, True)
    scores = {("x", f"d{i}", "m"): (0.1 if i < 3 else 1.0) for i in range(6)}
    assert not underperformance_filter(scores, cells)["x"].discarded


def test_filter_missing_baseline():
    with pytest.raises(MetricError, match="missing"):
        underperformance_filter({("x", "d", "m"): 1.0}, {})
