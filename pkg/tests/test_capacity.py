import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncra.analysis.capacity import (InterferencePattern, outage_capacity, outage_capacity_single,
                                       qpsk_capacity, region_random, shannon_interference_limit)
from asyncra.channel import CONSTELLATION, es_n0_to_sigma2


def monte_carlo_capacity(sigma2, n=400_000, seed=0):
    rng = np.random.default_rng(seed)
    x = CONSTELLATION[rng.integers(0, 4, n)]
    y = x + math.sqrt(sigma2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    ll = -np.abs(y[:, None] - CONSTELLATION) ** 2 / (2 * sigma2)
    own = -np.abs(y - x) ** 2 / (2 * sigma2)
    return 2 - np.mean(np.logaddexp.reduce(ll, axis=1) - own) / math.log(2)


def test_zero_db_anchor():
    assert qpsk_capacity(0.5) == pytest.approx(0.96, abs=0.02)


def test_limits():
    assert qpsk_capacity(1e-4) == pytest.approx(2.0)
    assert qpsk_capacity(1e-2) == pytest.approx(2.0, abs=1e-6)
    assert qpsk_capacity(1e5) < 1e-4
    with pytest.raises(ValueError):
        qpsk_capacity(0.0)
    with pytest.raises(ValueError):
        qpsk_capacity(0.5, order=10)


@pytest.mark.parametrize("sigma2", [0.05, 0.2, 0.5, 2.0])
def test_matches_monte_carlo(sigma2):
    assert qpsk_capacity(sigma2) == pytest.approx(monte_carlo_capacity(sigma2), abs=5e-3)


def test_quadrature_order_converged():
    for s in (0.01, 0.1, 0.5, 3.0):
        assert abs(qpsk_capacity(s, 40) - qpsk_capacity(s, 80)) < 1e-4


def test_strictly_decreasing():
    s = np.geomspace(1e-2, 100, 60)
    c = np.array([qpsk_capacity(v) for v in s])
    assert (np.diff(c) < 0).all()
    assert ((c > 0) & (c < 2)).all()


def test_outage_degenerate_cases():
    sn = es_n0_to_sigma2(6.0)
    assert outage_capacity_single(0.0, sn, sn + 1) == pytest.approx(qpsk_capacity(sn))
    assert outage_capacity_single(1.0, sn, sn + 1) == pytest.approx(qpsk_capacity(sn + 1))
    p = InterferencePattern((0.3, 0.2), (sn + 0.5, sn + 1.0), sn)
    ref = 0.5 * qpsk_capacity(sn) + 0.3 * qpsk_capacity(sn + 0.5) + 0.2 * qpsk_capacity(sn + 1.0)
    assert outage_capacity(p) == pytest.approx(ref)
    assert qpsk_capacity(sn + 1.0) < outage_capacity(p) < qpsk_capacity(sn)


def test_pattern_validation_and_grouping():
    sn = 0.1
    with pytest.raises(ValueError):
        InterferencePattern((0.6, 0.6), (0.6, 1.1), sn)
    with pytest.raises(ValueError):
        InterferencePattern((0.1, 0.1), (1.1, 0.6), sn)
    with pytest.raises(ValueError):
        InterferencePattern((0.1,), (0.05,), sn)
    p = InterferencePattern.from_counts([0, 0, 1, 1, 1, 2, 0, 0, 0, 0], sn)
    assert p.alphas == (0.3, 0.1)
    assert p.sigma2s == pytest.approx((sn + 0.5, sn + 1.0))
    assert p.m == 2


def test_outage_linear_in_alpha():
    sn = es_n0_to_sigma2(6.0)
    vals = [outage_capacity_single(a, sn, sn + 0.5) for a in (0.0, 0.25, 0.5, 0.75, 1.0)]
    d = np.diff(vals)
    assert (d < 0).all()
    np.testing.assert_allclose(d, d[0], rtol=1e-9)


def test_shannon_limit_cases():
    sn = es_n0_to_sigma2(6.0)
    assert shannon_interference_limit(1.0, sn, qpsk_capacity(sn)) == pytest.approx(0.0, abs=1e-9)
    lim = shannon_interference_limit(0.6, sn, 1.0)
    assert 0 < lim < math.inf
    assert outage_capacity_single(0.6, sn, sn + lim) == pytest.approx(1.0, abs=1e-5)
    # the clean 80% alone carries rate 1
    assert math.isinf(shannon_interference_limit(0.2, sn, 1.0))
    with pytest.raises(ValueError):
        shannon_interference_limit(0.5, sn, 2.5)
    with pytest.raises(ValueError):
        shannon_interference_limit(0.0, sn, 1.0)


def test_shannon_limit_monotone_in_alpha():
    sn = es_n0_to_sigma2(6.0)
    lims = [shannon_interference_limit(a, sn, 1.0) for a in np.linspace(0.1, 1.0, 19)]
    assert all(b <= a for a, b in zip(lims, lims[1:]))


def test_region_random_basics():
    sn = es_n0_to_sigma2(6.0)
    assert region_random(InterferencePattern((), (), sn), 1.0)
    with pytest.raises(ValueError):
        region_random(InterferencePattern((), (), sn), 1.0, beta=0.0)


def test_region_random_agrees_with_shannon_limit():
    sn = es_n0_to_sigma2(6.0)
    lim = shannon_interference_limit(0.5, sn, 1.0)
    p = InterferencePattern((0.5,), (sn + 0.5,), sn)
    assert region_random(p, 1.0) == (0.5 < lim)
    for frac in (0.98, 1.02):
        q = InterferencePattern((0.5,), (sn + frac * lim,), sn)
        assert region_random(q, 1.0) == (frac < 1)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.01, 3.0), st.floats(0.5, 1.5))
def test_region_nesting(alpha, si2, rate):
    sn = es_n0_to_sigma2(6.0)
    p = InterferencePattern((alpha,), (sn + si2,), sn)
    if region_random(p, rate, beta=0.95):
        assert region_random(p, rate, beta=1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.01, 2.0), st.floats(0.01, 1.0))
def test_region_monotone_in_interference(alpha, si2, extra):
    sn = es_n0_to_sigma2(6.0)
    worse = InterferencePattern((alpha,), (sn + si2 + extra,), sn)
    better = InterferencePattern((alpha,), (sn + si2,), sn)
    if region_random(worse, 1.0):
        assert region_random(better, 1.0)
