import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from asyncra.channel import qpsk_modulate
from asyncra.rasim import (AbstractLdpc, AbstractRandom, Phy, ProtocolConfig, SimReport, _Receiver, _traffic,
                           gen_arrivals, place_replicas, plr_curve, reference_code, replica_table, run,
                           supported_load)

FAST = ProtocolConfig(load=0.6, horizon=1400.0, n_s=40)


def test_arrival_statistics():
    cfg = ProtocolConfig(load=0.5, horizon=10_000.0)
    t = gen_arrivals(cfg, np.random.default_rng(0))
    assert abs(t.size - 5000) < 4 * math.sqrt(5000)
    assert (np.diff(t) >= 0).all()
    counts = np.bincount(t.astype(int), minlength=10_000)
    assert np.mean(counts == 0) == pytest.approx(math.exp(-0.5), abs=0.015)
    assert abs(np.corrcoef(counts[:-1], counts[1:])[0, 1]) < 0.05


def test_replica_gap_rule():
    cfg = ProtocolConfig(n_s=480)
    t0 = np.random.default_rng(1).uniform(0, 1000, 20_000)
    s1, s2 = place_replicas(t0, cfg, np.random.default_rng(2))
    gap = s2 - s1
    assert (s1 == np.floor(t0 * cfg.n_s)).all()
    assert gap.min() > cfg.n_s
    assert gap.max() <= 199 * cfg.n_s
    assert (s2 + cfg.n_s - s1 <= 200 * cfg.n_s).all()
    ks = stats.kstest(gap, stats.randint(cfg.n_s + 1, 199 * cfg.n_s + 1).cdf)
    assert ks.pvalue > 0.01


def test_replica_table_twins():
    recs = replica_table(FAST)
    assert len(recs) % 2 == 0
    for i, r in enumerate(recs):
        t = recs[r.twin]
        assert t.twin == i and t.user == r.user
        assert abs(t.start - r.start) > FAST.n_s


@pytest.mark.parametrize("kwargs", [dict(load=0), dict(replicas=3), dict(vf_len=2), dict(window=100),
                                    dict(window_shift=0), dict(horizon=1000)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ProtocolConfig(**kwargs)


def test_report_ci_and_merge():
    r = SimReport(0.5, "abstract_random", "x", users=1000, lost=10)
    lo, hi = r.ci()
    assert lo < r.plr < hi
    assert 0 <= lo and hi <= 1
    m = r.merge(SimReport(0.5, "abstract_random", "x", users=500, lost=5))
    assert m.users == 1500 and m.plr == pytest.approx(0.01)
    assert math.isnan(SimReport(0.5, "m", "c").plr)


@pytest.mark.parametrize("mode", ["random", "adhoc", "fiveg"])
def test_light_load_loses_nothing(mode, adhoc, fiveg):
    m = {"random": AbstractRandom(), "adhoc": AbstractLdpc(adhoc), "fiveg": AbstractLdpc(fiveg)}[mode]
    rep = run(replace(FAST, load=0.05, n_s=480 if mode == "fiveg" else 40), m)
    assert rep.users > 0 and rep.lost == 0


def test_determinism_and_conservation(adhoc):
    a = run(FAST, AbstractLdpc(adhoc), segments=2)
    b = run(FAST, AbstractLdpc(adhoc), segments=2, workers=2)
    assert a == b
    assert a.decoded + a.lost == a.users
    assert 0 <= a.plr <= 1
    assert a.successes <= a.attempts
    rows = plr_curve(FAST, [0.6, 0.6], AbstractLdpc(adhoc))
    assert rows[0].row() == rows[1].row()


def test_beta_nesting():
    cfg = replace(FAST, load=1.0)
    full = run(cfg, AbstractRandom(beta=1.0))
    part = run(cfg, AbstractRandom(beta=0.95))
    assert full.users == part.users
    assert full.lost <= part.lost


def test_plr_grows_with_load():
    reps = plr_curve(replace(FAST, horizon=3000.0), [0.6, 1.0, 1.3], AbstractRandom())
    plr = [r.plr for r in reps]
    assert plr[0] <= plr[1] <= plr[2]
    assert plr[2] > 0


def test_supported_load_interpolation():
    reps = [SimReport(g, "m", "c", users=1000, lost=l) for g, l in ((0.8, 1), (0.9, 5), (1.0, 20))]
    g = supported_load(reps, 1e-2)
    assert 0.9 < g < 1.0
    assert 10 ** np.interp(g, [0.9, 1.0], np.log10([5e-3, 2e-2])) == pytest.approx(1e-2)
    assert supported_load(reps[:1], 1e-2) == math.inf


def test_reference_code_dimensions(adhoc, fiveg):
    for b in (adhoc, fiveg):
        code = reference_code(b, n_s=480)
        assert code.n_tx == 960 and code.k == 480
    with pytest.raises(ValueError):
        reference_code(adhoc, n_s=33)


def test_ldpc_mode_rejects_uneven_split(fiveg):
    with pytest.raises(ValueError):
        run(replace(FAST, n_s=50), AbstractLdpc(fiveg))


def test_phy_cancellation_is_exact(adhoc):
    """After cancelling replicas the residual equals the rebuilt superposition of the rest plus noise."""
    cfg = replace(FAST, load=1.5, horizon=1300.0)
    code = reference_code(adhoc, n_s=cfg.n_s)
    mode = Phy(code)
    _, starts, users, phases, _ = _traffic(cfg, 0)
    rx = _Receiver(cfg, mode, starts, users, phases, [cfg.seed, 1, 0])
    lo, hi = int(starts[40]), int(starts[40]) + 30 * cfg.n_s
    for r in range(30, 60, 3):
        rx.cancel(r)
    expect = rx.noise(lo, hi).copy()
    for q in range(starts.size):
        s = int(starts[q])
        if not rx.active[q] or s + cfg.n_s <= lo or s >= hi:
            continue
        sym = qpsk_modulate(code.transmitted(rx.codeword(int(users[q])))) * np.exp(1j * phases[q])
        for i in range(cfg.n_s):
            if lo <= s + i < hi:
                expect[s + i - lo] += sym[i]
    np.testing.assert_array_equal(rx.residual(lo, hi), expect)


def test_phy_mode_runs(adhoc):
    cfg = replace(FAST, load=0.3, horizon=1300.0)
    rep = run(cfg, Phy(reference_code(adhoc, n_s=cfg.n_s), max_iter=20))
    assert rep.users > 0 and rep.lost == 0
    with pytest.raises(ValueError):
        run(replace(cfg, n_s=80), Phy(reference_code(adhoc, n_s=cfg.n_s)))


def test_unknown_mode():
    with pytest.raises(TypeError):
        run(FAST, object())
