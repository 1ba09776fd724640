from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bidlearn.grid import (ConfigurationError, ValueDistribution, make_grid, opponent_stats,
                           thickness)

from oracles import order_statistic_pmf


def test_grid_points():
    assert make_grid(2).fractions() == [Fraction(1, 2), Fraction(1)]
    g = make_grid(10)
    assert len(g) == 10
    np.testing.assert_allclose(g.points, np.arange(1, 11) / 10)
    assert g.fractions()[0] == Fraction(1, 10) and g.fractions()[-1] == 1


@pytest.mark.parametrize("H", [1, 0, -3, 2.5])
def test_grid_rejects_bad_resolution(H):
    with pytest.raises(ConfigurationError):
        make_grid(H)


def test_numerator_is_exact():
    g = make_grid(10)
    assert g.numerator(0.3) == 3
    assert g.numerator(Fraction(7, 10)) == 7
    assert 10 in g and 0 not in g and 11 not in g
    for bad in (0.25, Fraction(1, 4), 0.0, 1.1):
        with pytest.raises(ConfigurationError):
            g.numerator(bad)


def test_distribution_validation():
    g = make_grid(4)
    with pytest.raises(ConfigurationError):
        ValueDistribution.from_pmf(g, [0.5, 0.5, 0.1, 0.0])
    with pytest.raises(ConfigurationError):
        ValueDistribution.from_pmf(g, [0.5, 0.7, -0.2, 0.0])
    with pytest.raises(ConfigurationError):
        ValueDistribution.from_pmf(g, [0.5, 0.5])
    d = ValueDistribution.from_pmf(g, [0.1, 0.2, 0.3, 0.4])
    assert np.all(np.diff(d.cdf) >= 0) and d.cdf[-1] == 1.0
    assert not d.is_uniform and ValueDistribution.uniform(g).is_uniform


def test_two_uniform_bidders_max_is_uniform():
    g = make_grid(10)
    st_ = opponent_stats([ValueDistribution.uniform(g)] * 2, 0, 1)
    assert st_.exact_max_pmf == tuple([Fraction(1, 10)] * 10)
    assert st_.tau == pytest.approx(0.1)


def test_three_uniform_bidders_h5():
    g = make_grid(5)
    dists = [ValueDistribution.uniform(g)] * 3
    top = opponent_stats(dists, 0, 1)
    assert [float(p) for p in top.exact_kth_pmf] == pytest.approx([0.04, 0.12, 0.20, 0.28, 0.36], abs=1e-15)
    assert top.tau == pytest.approx(0.04)
    second = opponent_stats(dists, 1, 2)
    assert [float(p) for p in second.exact_kth_pmf] == pytest.approx([0.36, 0.28, 0.20, 0.12, 0.04], abs=1e-15)
    assert second.tau == pytest.approx(0.04)
    # (2vH - 1)/H^2 at v = k/H
    assert top.exact_kth_pmf == tuple(Fraction(2 * k - 1, 25) for k in range(1, 6))


def test_order_statistics_match_enumeration_uniform():
    for n, H in [(2, 6), (3, 4), (4, 3)]:
        g = make_grid(H)
        dists = [ValueDistribution.uniform(g)] * n
        for k in range(1, n):
            got = opponent_stats(dists, 0, k).exact_kth_pmf
            want = order_statistic_pmf([[Fraction(1, H)] * H] * (n - 1), k, H)
            assert list(got) == want


def test_mismatched_grids_and_bad_indices():
    a = ValueDistribution.uniform(make_grid(4))
    b = ValueDistribution.uniform(make_grid(5))
    with pytest.raises(ConfigurationError):
        opponent_stats([a, b], 0)
    with pytest.raises(ConfigurationError):
        opponent_stats([a, a], 0, k=2)
    with pytest.raises(ConfigurationError):
        opponent_stats([a, a], 2)


def test_tau_is_clamped():
    # max of two draws from (0.6, 0.4) has pmf (0.36, 0.64); 0.36 > 1/H^2
    d = ValueDistribution.from_pmf(make_grid(2), [Fraction(3, 5), Fraction(2, 5)])
    stats = opponent_stats([d, d, d], 0)
    assert stats.exact_kth_pmf == (Fraction(9, 25), Fraction(16, 25))
    assert stats.tau == 0.25
    g = make_grid(4)
    heavy = ValueDistribution.from_pmf(g, [Fraction(1, 10), Fraction(2, 10), Fraction(3, 10), Fraction(4, 10)])
    assert thickness([heavy, heavy]) == pytest.approx(0.1)


def test_sampling_follows_pmf():
    g = make_grid(4)
    d = ValueDistribution.from_pmf(g, [0.1, 0.2, 0.3, 0.4])
    x = d.sample(np.random.default_rng(5), 200_000)
    freq = np.bincount(x, minlength=5)[1:] / x.size
    np.testing.assert_allclose(freq, d.pmf, atol=0.005)


@st.composite
def rational_pmfs(draw, H):
    w = draw(st.lists(st.integers(0, 6), min_size=H, max_size=H).filter(lambda xs: sum(xs) > 0))
    s = sum(w)
    return [Fraction(x, s) for x in w]


@settings(max_examples=60, deadline=None)
@given(st.data(), st.integers(2, 4), st.integers(2, 4))
def test_order_statistics_match_enumeration_any_prior(data, n, H):
    g = make_grid(H)
    pmfs = [data.draw(rational_pmfs(H)) for _ in range(n)]
    dists = [ValueDistribution.from_pmf(g, p) for p in pmfs]
    i = data.draw(st.integers(0, n - 1))
    k = data.draw(st.integers(1, n - 1))
    stats = opponent_stats(dists, i, k)
    others = [p for j, p in enumerate(pmfs) if j != i]
    assert list(stats.exact_kth_pmf) == order_statistic_pmf(others, k, H)
    assert sum(stats.exact_kth_pmf) == 1
    assert stats.tau <= 1 / H ** (n - 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(2, 6), st.data())
def test_float_priors_sum_to_one(n, H, data):
    g = make_grid(H)
    dists = []
    for _ in range(n):
        w = np.array(data.draw(st.lists(st.floats(0.01, 1.0), min_size=H, max_size=H)))
        w = w / w.sum()
        w[-1] = 1.0 - w[:-1].sum()
        dists.append(ValueDistribution.from_pmf(g, w))
    for k in range(1, n):
        s = opponent_stats(dists, 0, k)
        assert abs(s.kth_pmf.sum() - 1) <= 1e-12
        assert np.all(s.kth_pmf >= -1e-15)
        assert s.tau <= 1 / H ** (n - 1)
