import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from shotnoise.laws import (BinningError, EmpiricalLaw, decompose_by_count, estimate, estimate_paired,
                            kde_l1_distance, ks_critical, ks_statistic, ks_two_sample, noise_floor,
                            same_law_bound, tv_distance, tv_samples)

samples = st.lists(st.one_of(st.just(0.0), st.floats(-50, 50, allow_nan=False, allow_infinity=False)),
                   min_size=1, max_size=200)


def test_atom_is_bit_exact_zero():
    law = estimate([0.0, -0.0, 1e-300, 2.0])
    assert law.atom_count == 2
    assert law.atom_mass + law.masses.sum() == pytest.approx(1.0)


def test_pure_atom_and_point_mass():
    law = estimate([0.0, 0.0])
    assert law.bin_count == 0 and law.atom_mass == 1.0
    other = estimate([3.0, 3.0, 0.0])
    assert tv_distance(law, other) == pytest.approx(2 * 2 / 3)


def test_disjoint_laws_have_tv_two():
    assert tv_samples(np.ones(500), np.full(500, 5.0)) == pytest.approx(2.0)
    assert tv_samples(np.zeros(100), np.ones(100)) == pytest.approx(2.0)


def test_mismatched_edges_rejected():
    a = estimate([1.0, 2.0], [0.0, 1.5, 3.0])
    b = estimate([1.0, 2.0], [0.0, 2.5, 3.0])
    with pytest.raises(BinningError):
        tv_distance(a, b)
    with pytest.raises(BinningError):
        estimate([10.0], [0.0, 1.0])


def test_noise_floor_predicts_same_law_tv():
    rng = np.random.default_rng(1)
    tvs, floors = [], []
    for _ in range(30):
        a = np.where(rng.random(20_000) < 0.3, 0.0, rng.exponential(size=20_000))
        b = np.where(rng.random(20_000) < 0.3, 0.0, rng.exponential(size=20_000))
        la, lb = estimate_paired(a, b)
        tvs.append(tv_distance(la, lb))
        floors.append(noise_floor(la, lb))
        assert noise_floor(la, lb) <= same_law_bound(la.bin_count + 1, 20_000) * math.sqrt(2)
    assert np.mean(tvs) == pytest.approx(np.mean(floors), rel=0.1)


def test_json_roundtrip():
    law = estimate([0.0, 1.0, 2.5, 2.6])
    back = EmpiricalLaw.from_json(law.to_json())
    assert back.atom_count == law.atom_count
    assert np.array_equal(back.edges, law.edges) and np.array_equal(back.counts, law.counts)


def test_kde_cross_check_agrees_in_order():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=5000), rng.normal(1.0, 1.0, size=5000)
    exact = 2 * (2 * stats.norm.cdf(0.5) - 1)
    assert kde_l1_distance(a, b) == pytest.approx(exact, abs=0.1)


def test_ks_matches_scipy():
    rng = np.random.default_rng(3)
    x = rng.exponential(size=3000)
    y = np.round(rng.exponential(size=2000), 1)   # ties
    assert ks_statistic(x, stats.expon.cdf) == pytest.approx(stats.kstest(x, stats.expon.cdf).statistic, abs=1e-12)
    assert ks_two_sample(x, y) == pytest.approx(stats.ks_2samp(x, y).statistic, abs=1e-12)


def test_ks_one_sample_with_jumps():
    # discrete reference: the left limit of the CDF matters
    x = np.array([0.0, 0.0, 1.0, 1.0])
    cdf = stats.bernoulli(0.5).cdf
    assert ks_statistic(x, cdf) == pytest.approx(0.0, abs=1e-12)


def test_ks_critical_value():
    # 1.63 is the asymptotic Kolmogorov 1% quantile
    assert stats.kstwobign.ppf(0.99) == pytest.approx(1.63, abs=0.01)
    assert ks_critical(10_000) == pytest.approx(0.0163)


def test_decompose_by_count_recombines():
    rng = np.random.default_rng(4)
    counts = rng.poisson(1.0, size=5000)
    values = np.where(counts == 0, 0.0, rng.gamma(np.maximum(counts, 1)))
    dec = decompose_by_count(values, counts)
    rec = dec.recombine()
    direct = estimate(values, dec.edges)
    assert np.array_equal(rec.counts, direct.counts) and rec.atom_count == direct.atom_count
    assert sum(dec.weights.values()) == pytest.approx(1.0)
    assert dec.laws[0].atom_mass == 1.0


@settings(max_examples=80, deadline=None)
@given(samples, samples)
def test_tv_is_a_bounded_symmetric_distance(a, b):
    la, lb = estimate_paired(a, b)
    d = tv_distance(la, lb)
    assert 0.0 <= d <= 2.0 + 1e-12
    assert d == pytest.approx(tv_distance(lb, la), abs=1e-12)
    assert tv_distance(la, la) == 0.0


@settings(max_examples=80, deadline=None)
@given(samples)
def test_masses_sum_to_one(a):
    law = estimate(a)
    assert law.atom_mass + law.masses.sum() == pytest.approx(1.0, abs=1e-12)
