import math
import warnings

import numpy as np
import pytest

from asyncra.analysis.capacity import shannon_interference_limit
from asyncra.analysis.pexit import (ProtoNoiseVector, ThresholdCache, awgn_threshold, channel_key, gain,
                                    interfered_types, pexit_converges, pexit_interference_threshold,
                                    pexit_run, region_ldpc)
from asyncra.protograph import BaseMatrix, permute_columns


def test_trivial_channels(adhoc):
    assert pexit_converges(adhoc, ProtoNoiseVector.uniform(adhoc, 1e-6))
    assert not pexit_converges(adhoc, ProtoNoiseVector.uniform(adhoc, 1e6))


def test_clean_channel_at_6db(adhoc, fiveg, sigma_6db):
    for b in (adhoc, fiveg):
        assert region_ldpc(b, ProtoNoiseVector.uniform(b, sigma_6db))
        assert not region_ldpc(b, ProtoNoiseVector.uniform(b, sigma_6db + 5))


def test_noise_vector(adhoc):
    pn = ProtoNoiseVector.uniform(adhoc, 0.2)
    assert math.isinf(pn.variances[0]) and pn.variances[1] == 0.2
    sig = pn.channel_sigma2()
    assert sig[0] == 0.0 and sig[1] == pytest.approx(10.0)
    per_bit = np.repeat(np.arange(10, dtype=float) + 1, 4)
    avg = ProtoNoiseVector.from_bit_powers(adhoc, per_bit)
    assert avg.variances[1:] == tuple(float(v) for v in range(1, 11))
    with pytest.raises(ValueError):
        ProtoNoiseVector.from_bit_powers(adhoc, np.ones(7))
    with pytest.raises(ValueError):
        pexit_run(adhoc, ProtoNoiseVector((1.0,)))


def test_interfered_types(adhoc, fiveg):
    assert interfered_types(adhoc, 0.6, "begin") == ((1, 2, 3, 4, 5, 6), 0.6)
    assert interfered_types(adhoc, 0.6, "end") == ((5, 6, 7, 8, 9, 10), 0.6)
    assert interfered_types(fiveg, 0.8, "e")[0] == tuple(range(6, 22))
    with pytest.warns(UserWarning):
        _, eff = interfered_types(adhoc, 0.63, "begin")
    assert eff == 0.6
    with pytest.raises(ValueError):
        interfered_types(adhoc, 0.5, "middle")


def test_monotone_in_single_type(adhoc, sigma_6db):
    base = [math.inf] + [sigma_6db] * 10
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = list(base)
        for j in rng.choice(range(1, 11), 4, replace=False):
            v[j] = sigma_6db + rng.uniform(0, 2.5)
        j = int(rng.integers(1, 11))
        worse = list(v)
        worse[j] += 0.5
        if pexit_converges(adhoc, ProtoNoiseVector(tuple(worse))):
            assert pexit_converges(adhoc, ProtoNoiseVector(tuple(v)))


@pytest.mark.parametrize("alpha", [0.2, 0.4, 0.6, 0.8, 1.0])
def test_symmetric_matrix_sides_agree(adhoc, sigma_6db, alpha):
    b = pexit_interference_threshold(adhoc, alpha, "begin", sigma_6db).value
    e = pexit_interference_threshold(adhoc, alpha, "end", sigma_6db).value
    if math.isinf(b):
        assert math.isinf(e)
    else:
        assert b == pytest.approx(e, rel=1e-3)


def test_asymmetric_matrix_sides_differ(fiveg, sigma_6db):
    b = pexit_interference_threshold(fiveg, 0.8, "begin", sigma_6db).value
    e = pexit_interference_threshold(fiveg, 0.8, "end", sigma_6db).value
    assert abs(b - e) > 0.01 * max(b, e)


@pytest.mark.parametrize("alpha", [0.6, 0.9])
def test_below_shannon_limit(adhoc, sigma_6db, alpha):
    th = pexit_interference_threshold(adhoc, alpha, "begin", sigma_6db)
    assert th.converged
    assert 0 < th.value < shannon_interference_limit(alpha, sigma_6db, 1.0)


def test_threshold_brackets(adhoc, sigma_6db):
    th = pexit_interference_threshold(adhoc, 0.6, "begin", sigma_6db)
    eps = 2e-4 * th.value
    ok = lambda s: pexit_converges(adhoc, ProtoNoiseVector.from_alpha(adhoc, 0.6, "begin", sigma_6db, s))
    assert ok(th.value - eps)
    assert not ok(th.value + eps)


def test_threshold_monotone_in_alpha(adhoc, sigma_6db):
    vals = [pexit_interference_threshold(adhoc, a, "begin", sigma_6db).value for a in (0.4, 0.6, 0.8, 1.0)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_awgn_threshold_is_consistent(adhoc):
    th = awgn_threshold(adhoc)
    assert pexit_converges(adhoc, ProtoNoiseVector.uniform(adhoc, th * 0.999))
    assert not pexit_converges(adhoc, ProtoNoiseVector.uniform(adhoc, th * 1.001))
    assert 0.4 < th < 1.0


def test_channel_key_reordering(adhoc, fiveg):
    hit = (1, 2, 3)
    perm = [0, 3, 1, 2] + list(range(4, 11))
    pb = permute_columns(adhoc, perm)
    # columns 1,2,3 of the original sit at positions 2,3,1
    assert channel_key(adhoc, hit) == channel_key(pb, (1, 2, 3))
    flipped = BaseMatrix(adhoc.entries[::-1].copy(), adhoc.punctured)
    assert channel_key(adhoc, hit) == channel_key(flipped, hit)
    assert channel_key(fiveg, (2, 3)) != channel_key(fiveg, (20, 21))


def test_cache_returns_same_values(adhoc, sigma_6db):
    cache = ThresholdCache()
    first = cache.threshold(adhoc, 0.6, "begin", sigma_6db)
    second = cache.threshold(adhoc, 0.6, "end", sigma_6db)
    assert cache.hits == 1 and len(cache) == 1
    assert second.side == "end" and second.value == first.value
    fresh = pexit_interference_threshold(adhoc, 0.6, "end", sigma_6db)
    assert fresh.value == pytest.approx(second.value, rel=1e-3)


def test_gain_properties(adhoc, fiveg, sigma_6db):
    alphas = (0.6, 0.9)
    ga = gain(adhoc, alphas, sigma_6db)
    gf = gain(fiveg, alphas, sigma_6db)
    assert 0 < gf < ga <= 1
    expected = 1.0
    for a in alphas:
        th = pexit_interference_threshold(adhoc, a, "begin", sigma_6db).value
        expected *= (th / shannon_interference_limit(a, sigma_6db, 1.0)) ** 2
    assert ga == pytest.approx(expected, rel=2e-3)
    with pytest.raises(ValueError):
        gain(adhoc, [], sigma_6db)


def test_gain_shares_cache(adhoc, sigma_6db):
    cache = ThresholdCache()
    gain(adhoc, (0.6,), sigma_6db, cache=cache)
    assert len(cache) == 1 and cache.hits == 1
