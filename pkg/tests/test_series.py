import math

import numpy as np
import pytest
from scipy import stats

from shotnoise.kernels import ConstantKernel, Indicator, ProductKernel, TimeWindow, product_exp
from shotnoise.series import (SeriesConfig, SeriesPreconditionError, read_batch_csv,
                              sample_conditional_first_p_batch, sample_full, sample_full_batch,
                              sample_truncated, sample_truncated_batch, sample_truncated_given_count,
                              write_batch_csv)
from shotnoise.stochastic import ExponentialLaw, RngStream

EXP1 = ExponentialLaw(1.0)


def test_empty_sum_is_exact_zero():
    values, counts = sample_truncated_batch(product_exp(1.0), 0.5, EXP1, 1.0, 20_000, RngStream(1))
    assert np.all(values[counts == 0] == 0.0)
    assert np.all(values[counts > 0] != 0.0)


def test_truncated_mean_matches_campbell():
    # E I(t) = rate * int_0^t E[X] e^{-s} ds
    rate, t = 2.0, 1.5
    values, _ = sample_truncated_batch(product_exp(1.0), t, EXP1, rate, 100_000, RngStream(2))
    expect = rate * (1.0 - math.exp(-t))
    se = values.std() / math.sqrt(values.size)
    assert abs(values.mean() - expect) < 4 * se


def test_compound_poisson_value_law():
    # indicator kernel: given count k the value is Gamma(k, 1)
    k = ProductKernel(Indicator(1.0), "x")
    values, counts = sample_truncated_batch(k, 1.0, EXP1, 1.0, 50_000, RngStream(3))
    for c in (1, 2, 3):
        res = stats.kstest(values[counts == c], stats.gamma(c).cdf)
        assert res.pvalue > 1e-3


def test_threads_do_not_change_draws():
    a = sample_truncated_batch(product_exp(1.0), 1.0, EXP1, 1.0, 30_000, RngStream(4), threads=1)
    b = sample_truncated_batch(product_exp(1.0), 1.0, EXP1, 1.0, 30_000, RngStream(4), threads=6)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_scalar_samplers():
    v, c = sample_truncated(product_exp(1.0), 1.0, EXP1, 1.0, RngStream(5))
    assert isinstance(v, float) and isinstance(c, int)
    assert isinstance(sample_full(SeriesConfig(product_exp(1.0), EXP1), RngStream(5)), float)


def test_horizon_selection():
    cfg = SeriesConfig(product_exp(1.0), EXP1, epsilon=1e-6)
    T = cfg.resolved_horizon()
    # L1 tail is e^{-T}; smallest power of two with e^{-T} < 1e-6 is 16
    assert T == 16.0
    assert cfg.residual_bound(T)[0] < 1e-6
    assert SeriesConfig(TimeWindow(product_exp(1.0), 3.0), EXP1).resolved_horizon() == 3.0


def test_divergent_series_refused():
    cfg = SeriesConfig(ConstantKernel(1.0), EXP1, horizon=10.0)
    with pytest.raises(SeriesPreconditionError):
        sample_full_batch(cfg, 10, RngStream(0))


def test_config_validation():
    with pytest.raises(ValueError):
        SeriesConfig(product_exp(1.0), EXP1, rate=-1.0)
    with pytest.raises(ValueError):
        SeriesConfig(product_exp(1.0), EXP1, centering="median")


def test_compensation_adds_tail_centering():
    cfg = SeriesConfig(product_exp(1.0), EXP1, horizon=2.0, centering="compensate")
    plain = SeriesConfig(product_exp(1.0), EXP1, horizon=2.0)
    a = sample_full_batch(cfg, 1000, RngStream(6))
    b = sample_full_batch(plain, 1000, RngStream(6))
    np.testing.assert_allclose(a - b, cfg.compensation())
    assert cfg.compensation() > 0


def test_given_count_sampler():
    times, values = sample_truncated_given_count(product_exp(1.0), 1.0, EXP1, 1.0, 2, 5000, RngStream(7))
    assert times.shape == (5000, 2)
    assert np.all(np.diff(times, axis=1) > 0) and np.all(times <= 1.0)
    zero_t, zero_v = sample_truncated_given_count(product_exp(1.0), 1.0, EXP1, 1.0, 0, 100, RngStream(7))
    assert zero_t.shape == (100, 0) and np.all(zero_v == 0.0)


def test_conditional_first_p():
    cfg = SeriesConfig(ProductKernel(Indicator(10.0), "x"), EXP1)
    v = sample_conditional_first_p_batch(cfg, 3, 2.0, 20_000, RngStream(8))
    # indicator covers [0, 2], so the sum is Gamma(3, 1)
    assert stats.kstest(v, stats.gamma(3).cdf).pvalue > 1e-3


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "s.csv"
    values = np.array([0.0, 1 / 3, -2.5e-300])
    write_batch_csv(path, values, counts=np.array([0, 1, 4]))
    back, counts = read_batch_csv(path)
    assert back.tolist() == values.tolist()
    assert counts.tolist() == [0, 1, 4]
    assert path.read_text().splitlines()[0] == "replicate,value,count"
