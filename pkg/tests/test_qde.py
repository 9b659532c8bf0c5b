import numpy as np
import pytest

from asyncra.analysis.pexit import awgn_threshold
from asyncra.analysis.qde import (MODELS, Grid, GridSaturationError, boxplus, boxplus_bruteforce, channel_density,
                                  convolve, density_evolution, error_probability, gaussian_density,
                                  model_channels, qde_converges, qde_threshold)
from asyncra.channel import sample_interfered_llrs

SMALL = Grid(20.0, 96)


def random_pmf(rng, grid):
    p = rng.random(grid.size) ** 4
    return p / p.sum()


def test_boxplus_matches_enumeration(rng):
    for _ in range(5):
        p, q = random_pmf(rng, SMALL), random_pmf(rng, SMALL)
        np.testing.assert_allclose(boxplus(p, q, SMALL), boxplus_bruteforce(p, q, SMALL), atol=1e-12)


def test_boxplus_identities():
    g = SMALL
    erasure = np.zeros(g.size)
    erasure[g.half_bins] = 1.0
    p = gaussian_density(0.5, g)
    np.testing.assert_allclose(boxplus(p, erasure, g), erasure, atol=1e-14)
    perfect = np.zeros(g.size)
    perfect[-1] = 1.0
    # a perfectly known bit passes the other message through, up to the tanh clip at the top bin
    np.testing.assert_allclose(boxplus(p, perfect, g)[:-2], p[:-2], atol=1e-12)


def test_convolution_of_gaussians():
    g = Grid(40.0, 400)
    a, b = gaussian_density(0.5, g), gaussian_density(1.0, g)
    s = convolve([a, b], g)
    v = g.values
    mean = (s * v).sum()
    assert mean == pytest.approx(1 / 0.5 + 1 / 1.0, rel=1e-3)
    var = (s * v * v).sum() - mean**2
    assert var == pytest.approx(2 / 0.5 + 2 / 1.0, rel=2e-2)


def test_gaussian_density_error_probability():
    from scipy.stats import norm

    g = Grid()
    s2 = 0.4
    mu = 1 / s2
    assert error_probability(gaussian_density(s2, g)) == pytest.approx(norm.cdf(-mu / np.sqrt(2 * mu)), rel=1e-3)


@pytest.mark.parametrize("model", MODELS)
def test_channel_density_matches_sampling(model):
    g = Grid()
    sn2 = 0.15
    pmf = channel_density(model, sn2, g)
    assert pmf.sum() == pytest.approx(1.0)
    names = {"gaussian": "gaussian", "qpsk_phase_aligned": "qpsk_phase0", "qpsk_random_phase": "qpsk_randphase"}
    llr = sample_interfered_llrs(names[model], 200_000, sn2, np.random.default_rng(2))
    assert error_probability(pmf) == pytest.approx(np.mean(llr < 0), abs=4e-3)
    assert (pmf * g.values).sum() == pytest.approx(np.clip(llr, -30, 30).mean(), rel=0.02)


@pytest.mark.parametrize("model", MODELS)
def test_channel_density_is_consistent(model):
    g = Grid()
    pmf = channel_density(model, 0.2, g)
    v = g.values
    t = np.tanh(v / 2)
    assert (pmf * t).sum() == pytest.approx((pmf * t * t).sum(), abs=2e-3)


def test_unknown_model():
    with pytest.raises(ValueError):
        channel_density("rayleigh", 0.1, SMALL)
    with pytest.raises(ValueError):
        qde_threshold(None, "rayleigh", 0.5)


def test_saturation_detected(adhoc):
    with pytest.raises(GridSaturationError):
        model_channels(adhoc, "gaussian", 0.5, "begin", 0.02, Grid(5.0, 64))
    assert qde_converges(adhoc, "gaussian", 0.5, 0.25, grid=Grid(20.0, 256))
    # one widening (to 7.5) still cannot hold clean LLRs around 50
    with pytest.raises(GridSaturationError):
        qde_converges(adhoc, "gaussian", 0.5, 0.02, grid=Grid(5.0, 64))


def test_alpha_zero_models_agree(adhoc):
    g = Grid(30.0, 256)
    chans = [model_channels(adhoc, m, 0.0, "begin", 0.3, g) for m in MODELS]
    for c in chans[1:]:
        for x, y in zip(chans[0], c):
            assert (x is None and y is None) or np.array_equal(x, y)


def test_clean_channel_converges(adhoc):
    g = Grid(30.0, 256)
    ok, it, pe = density_evolution(adhoc, model_channels(adhoc, "gaussian", 0.0, "begin", 0.3, g), g)
    assert ok and (pe < 1e-6).all()
    ok, _, _ = density_evolution(adhoc, model_channels(adhoc, "gaussian", 0.0, "begin", 1.2, g), g)
    assert not ok


@pytest.mark.slow
def test_awgn_threshold_matches_pexit(adhoc):
    th = qde_threshold(adhoc, "gaussian", 0.0, grid=Grid(30.0, 512), rtol=2e-3, bracket=(0.4, 0.9))
    ref = awgn_threshold(adhoc)
    assert 10 * np.log10(ref / th.value) == pytest.approx(0.0, abs=0.1)
