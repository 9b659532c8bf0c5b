"""Monte Carlo simulation of asynchronous random access with two replicas and SIC.

Time is counted in QPSK symbols; the packet length ``n_s`` symbols is one
packet duration t_p. Users arrive as a Poisson process, send two copies of
their packet inside a virtual frame, and a sliding receiver window decodes
and cancels replicas until nothing more can be resolved.
"""
from __future__ import annotations

import bisect
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .analysis.capacity import InterferencePattern, region_random
from .analysis.pexit import ProtoNoiseVector, region_ldpc
from .channel import es_n0_to_sigma2, llr_gaussian, qpsk_modulate
from .codec import CodeInstance, bp_decode, encode
from .protograph import BaseMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol and simulation parameters; durations other than ``n_s`` are in packet durations."""

    load: float = 0.5
    vf_len: float = 200.0
    window: float = 600.0
    window_shift: float = 20.0
    replicas: int = 2
    n_s: int = 480
    es_n0_db: float = 6.0
    horizon: float = 5000.0
    max_sic_iters: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.load <= 0:
            raise ValueError("channel load must be positive")
        if self.replicas != 2:
            raise ValueError("only two replicas per user are supported")
        if self.vf_len <= 2:
            raise ValueError("the virtual frame must exceed two packet durations")
        if self.window < self.vf_len:
            raise ValueError("the receiver window must be at least as long as the virtual frame")
        if not 0 < self.window_shift < self.window:
            raise ValueError("the window shift must be positive and shorter than the window")
        if self.horizon <= 2 * self.window:
            raise ValueError("the horizon must exceed twice the window (warm-up and tail are discarded)")
        if self.n_s < 1:
            raise ValueError("packets need at least one symbol")

    @property
    def sigma_n2(self) -> float:
        return es_n0_to_sigma2(self.es_n0_db)

    def symbols(self, duration: float) -> int:
        return int(round(duration * self.n_s))


# -- decoding modes ------------------------------------------------------------

@dataclass(frozen=True)
class AbstractRandom:
    """Random-code decoding region at a fraction ``beta`` of outage capacity, R = 1 bit/symbol."""

    beta: float = 1.0
    rate: float = 1.0

    @property
    def label(self) -> str:
        return f"random(beta={self.beta:g})"


@dataclass(frozen=True)
class AbstractLdpc:
    """Protograph decoding region (PEXIT on per-type averaged noise plus interference)."""

    base: BaseMatrix

    @property
    def label(self) -> str:
        return self.base.name or "ldpc"


@dataclass(frozen=True)
class Phy:
    """QPSK modulation, Gaussian-approximation demapping and BP decoding of a lifted code."""

    code: CodeInstance
    max_iter: int = 50
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or (self.code.base.name if self.code.base is not None else "code")


@dataclass
class ReplicaRecord:
    """One transmitted copy; ``twin`` is the index of the other copy in start order."""

    user: int
    start: int
    twin: int
    phase: float = 0.0


@dataclass
class SimReport:
    load: float
    mode: str
    code: str
    users: int = 0
    lost: int = 0
    attempts: int = 0
    successes: int = 0
    sic_passes: Counter = field(default_factory=Counter)

    @property
    def decoded(self) -> int:
        return self.users - self.lost

    @property
    def plr(self) -> float:
        return self.lost / self.users if self.users else math.nan

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        """Wilson score interval for the loss probability."""
        n = self.users
        if n == 0:
            return (0.0, 1.0)
        z = stats.norm.ppf(0.5 + level / 2)
        p = self.lost / n
        den = 1 + z * z / n
        mid = (p + z * z / (2 * n)) / den
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
        return max(0.0, mid - half), min(1.0, mid + half)

    def merge(self, other: "SimReport") -> "SimReport":
        return SimReport(self.load, self.mode, self.code, self.users + other.users,
                         self.lost + other.lost, self.attempts + other.attempts,
                         self.successes + other.successes, self.sic_passes + other.sic_passes)

    def row(self) -> dict:
        lo, hi = self.ci()
        return {"G": self.load, "mode": self.mode, "code": self.code, "users": self.users,
                "lost": self.lost, "plr": self.plr, "ci_low": lo, "ci_high": hi}


CSV_COLUMNS = ("G", "mode", "code", "users", "lost", "plr", "ci_low", "ci_high")


# -- traffic -------------------------------------------------------------------

def gen_arrivals(cfg: ProtocolConfig, rng) -> np.ndarray:
    """Poisson activation times (in packet durations) on [0, horizon), sorted."""
    rng = np.random.default_rng(rng)
    n = rng.poisson(cfg.load * cfg.horizon)
    return np.sort(rng.uniform(0.0, cfg.horizon, size=n))


def place_replicas(t0, cfg: ProtocolConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Symbol-grid start times of both replicas.

    The first replica starts at activation; the gap to the second is uniform on
    (t_p, t_f - t_p], so the copies never overlap and both end inside the frame.
    """
    rng = np.random.default_rng(rng)
    t0 = np.asarray(t0, dtype=float)
    start1 = np.floor(t0 * cfg.n_s).astype(np.int64)
    span = cfg.symbols(cfg.vf_len) - 2 * cfg.n_s
    gap = cfg.n_s + rng.integers(1, span + 1, size=start1.shape)
    return start1, start1 + gap


# -- simulation ------------------------------------------------------------------

class _Receiver:
    """Global interference state plus the per-mode decoding test."""

    def __init__(self, cfg: ProtocolConfig, mode, starts: np.ndarray, users: np.ndarray,
                 phases: np.ndarray, entropy):
        self.cfg = cfg
        self.mode = mode
        self.starts = starts
        self.users = users
        self.phases = phases
        self.entropy = list(entropy)
        n_s = cfg.n_s
        length = int(starts.max()) + n_s + 1 if starts.size else n_s
        self.occ = np.zeros(length, dtype=np.int32)
        for s in starts:
            self.occ[s:s + n_s] += 1
        self.active = np.ones(starts.size, dtype=bool)
        self.sigma_n2 = cfg.sigma_n2
        self.memo: dict = {}
        if isinstance(mode, AbstractLdpc):
            n_types = mode.base.n_b - mode.base.p_b
            if n_s % n_types:
                raise ValueError(f"n_s={n_s} symbols do not split evenly over {n_types} transmitted types")
            self.per_type = n_s // n_types
        if isinstance(mode, Phy):
            code = mode.code
            if code.n_tx != 2 * n_s:
                raise ValueError(f"code carries {code.n_tx} bits but a packet holds {2 * n_s}")
            self._noise: dict = {}
            self._words: dict = {}

    def interferers(self, r: int) -> np.ndarray:
        s = self.starts[r]
        return self.occ[s:s + self.cfg.n_s] - 1

    def cancel(self, r: int) -> None:
        s = self.starts[r]
        self.occ[s:s + self.cfg.n_s] -= 1
        self.active[r] = False

    def decodable(self, r: int) -> bool:
        counts = self.interferers(r)
        mode = self.mode
        if isinstance(mode, AbstractRandom):
            if not counts.any():
                key = ()
            else:
                key = tuple(np.bincount(counts).tolist())
            if key not in self.memo:
                p = InterferencePattern.from_counts(counts, self.sigma_n2, 1.0)
                self.memo[key] = region_random(p, mode.rate, mode.beta)
            return self.memo[key]
        if isinstance(mode, AbstractLdpc):
            sums = counts.reshape(-1, self.per_type).sum(axis=1)
            key = tuple(sums.tolist())
            if key not in self.memo:
                b = mode.base
                var = iter(self.sigma_n2 + sums / (2.0 * self.per_type))
                pn = ProtoNoiseVector(tuple(math.inf if j in b.punctured else float(next(var))
                                            for j in range(b.n_b)))
                self.memo[key] = region_ldpc(b, pn)
            return self.memo[key]
        return self._decode_phy(r, counts)

    # full-PHY helpers
    def codeword(self, user: int) -> np.ndarray:
        if user not in self._words:
            if len(self._words) > 4096:
                self._words.clear()
            code = self.mode.code
            rng = np.random.default_rng(self.entropy + [2, user])
            info = rng.integers(0, 2, size=code.k, dtype=np.uint8)
            self._words[user] = encode(code, info)
        return self._words[user]

    def noise(self, lo: int, hi: int) -> np.ndarray:
        n_s = self.cfg.n_s
        out = []
        for blk in range(lo // n_s, (hi - 1) // n_s + 1):
            if blk not in self._noise:
                if len(self._noise) > 8192:
                    self._noise.clear()
                rng = np.random.default_rng(self.entropy + [1, blk])
                sd = math.sqrt(self.sigma_n2)
                self._noise[blk] = sd * (rng.standard_normal(n_s) + 1j * rng.standard_normal(n_s))
            out.append(self._noise[blk])
        noise = np.concatenate(out)
        first = (lo // n_s) * n_s
        return noise[lo - first:hi - first]

    def residual(self, lo: int, hi: int) -> np.ndarray:
        """Received samples on [lo, hi) with every cancelled replica removed exactly."""
        n_s = self.cfg.n_s
        y = self.noise(lo, hi).copy()
        a = np.searchsorted(self.starts, lo - n_s, side="right")
        b = np.searchsorted(self.starts, hi, side="left")
        for q in range(a, b):
            if not self.active[q]:
                continue
            s = int(self.starts[q])
            sym = qpsk_modulate(self.mode.code.transmitted(self.codeword(self.user_of(q))))
            sym = sym * np.exp(1j * self.phases[q])
            o0, o1 = max(lo, s), min(hi, s + n_s)
            y[o0 - lo:o1 - lo] += sym[o0 - s:o1 - s]
        return y

    def user_of(self, r: int) -> int:
        return int(self.users[r])

    def _decode_phy(self, r: int, counts: np.ndarray) -> bool:
        code = self.mode.code
        s = int(self.starts[r])
        y = self.residual(s, s + self.cfg.n_s) * np.exp(-1j * self.phases[r])
        l1, l2 = llr_gaussian(y, self.sigma_n2 + counts / 2.0)
        tx = np.empty(2 * self.cfg.n_s)
        tx[0::2] = l1
        tx[1::2] = l2
        bits, _, _ = bp_decode(code, code.expand_llr(tx), self.mode.max_iter)
        return bool(np.array_equal(bits, self.codeword(self.user_of(r))))


def _entropy(cfg: ProtocolConfig, segment: int) -> list[int]:
    return [int(cfg.seed), int(round(cfg.load * 1e6)), int(segment)]


def _traffic(cfg: ProtocolConfig, segment: int):
    """Arrivals and the replica table sorted by start: (t0, starts, users, phases, twin)."""
    rng = np.random.default_rng(_entropy(cfg, segment) + [0])
    t0 = gen_arrivals(cfg, rng)
    s1, s2 = place_replicas(t0, cfg, rng)
    n_users = t0.size
    starts = np.concatenate([s1, s2])
    users = np.concatenate([np.arange(n_users), np.arange(n_users)])
    phases = rng.uniform(0.0, 2 * np.pi, size=starts.size)
    order = np.argsort(starts, kind="stable")
    starts, users, phases = starts[order], users[order], phases[order]
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    twin = np.empty_like(order)
    twin[pos[:n_users]] = pos[n_users:]
    twin[pos[n_users:]] = pos[:n_users]
    return t0, starts, users, phases, twin


def replica_table(cfg: ProtocolConfig, segment: int = 0) -> list[ReplicaRecord]:
    """The replicas one segment transmits, in start order, before any decoding."""
    _, starts, users, phases, twin = _traffic(cfg, segment)
    return [ReplicaRecord(int(u), int(s), int(t), float(ph))
            for u, s, t, ph in zip(users, starts, twin, phases)]


def _simulate(cfg: ProtocolConfig, mode, segment: int = 0) -> SimReport:
    entropy = _entropy(cfg, segment)
    t0, starts, users, phases, twin = _traffic(cfg, segment)
    n_users = t0.size

    rx = _Receiver(cfg, mode, starts, users, phases, entropy)
    n_s = cfg.n_s
    dirty = np.ones(starts.size, dtype=bool)
    decoded = np.zeros(n_users, dtype=bool)
    report = SimReport(cfg.load, _mode_name(mode), mode.label)
    win, shift = cfg.symbols(cfg.window), cfg.symbols(cfg.window_shift)
    end = cfg.symbols(cfg.horizon) + cfg.symbols(cfg.vf_len)
    ws = 0
    while ws <= end:
        lo = bisect.bisect_left(starts, ws)
        hi = bisect.bisect_right(starts, ws + win - n_s)
        passes = 0
        while cfg.max_sic_iters is None or passes < cfg.max_sic_iters:
            cand = lo + np.flatnonzero(rx.active[lo:hi] & dirty[lo:hi])
            if cand.size == 0:
                break
            passes += 1
            energy = np.array([rx.interferers(r).sum() for r in cand])
            progress = False
            for r in cand[np.lexsort((cand, energy))]:
                if not rx.active[r] or not dirty[r]:
                    continue
                dirty[r] = False
                report.attempts += 1
                if not rx.decodable(r):
                    continue
                report.successes += 1
                progress = True
                decoded[users[r]] = True
                for q in (r, twin[r]):
                    rx.cancel(q)
                    s = starts[q]
                    a = bisect.bisect_right(starts, s - n_s)
                    b = bisect.bisect_left(starts, s + n_s)
                    dirty[a:b] = True
            if not progress:
                break
        report.sic_passes[passes] += 1
        ws += shift

    lo_t, hi_t = cfg.window, cfg.horizon - cfg.window
    counted = (t0 >= lo_t) & (t0 < hi_t)
    report.users = int(counted.sum())
    report.lost = int((counted & ~decoded).sum())
    return report


def _mode_name(mode) -> str:
    if isinstance(mode, AbstractRandom):
        return "abstract_random"
    if isinstance(mode, AbstractLdpc):
        return "abstract_ldpc"
    if isinstance(mode, Phy):
        return "phy"
    raise TypeError(f"unknown simulation mode {mode!r}")


def run(cfg: ProtocolConfig, mode, segments: int = 1, workers: int = 1) -> SimReport:
    """Simulate ``segments`` independent horizons and merge their tallies.

    Each segment has its own random streams derived from (seed, load, segment),
    so the merged report does not depend on ``workers``.
    """
    _mode_name(mode)
    if segments < 1:
        raise ValueError("need at least one segment")
    if workers > 1 and segments > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate, [cfg] * segments, [mode] * segments, range(segments)))
    else:
        parts = [_simulate(cfg, mode, s) for s in range(segments)]
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    log.info("G=%.3f %s: %d users, %d lost", cfg.load, out.code, out.users, out.lost)
    return out


def plr_curve(template: ProtocolConfig, loads, mode, segments: int = 1, workers: int = 1) -> list[SimReport]:
    loads = list(loads)
    if not loads:
        raise ValueError("need at least one load")
    return [run(replace(template, load=float(g)), mode, segments, workers) for g in loads]


def supported_load(reports, target: float = 1e-2) -> float:
    """Load where the PLR curve crosses ``target`` (log-linear interpolation).

    Returns the lowest load when the curve already starts at or above
    ``target``, and ``inf`` when it never reaches it.
    """
    pts = sorted((r.load, r.plr) for r in reports)
    prev = None
    for g, p in pts:
        if p >= target:
            if prev is None:
                return g
            g0, p0 = prev
            lp0 = math.log(max(p0, 1e-12))
            lp = math.log(p)
            frac = (math.log(target) - lp0) / (lp - lp0) if lp > lp0 else 0.0
            return g0 + frac * (g - g0)
        prev = (g, p)
    return math.inf


def reference_code(b: BaseMatrix, n_s: int = 480, seed: int = 0) -> CodeInstance:
    """Lift ``b`` so that its transmitted bits fill one packet of ``n_s`` QPSK symbols."""
    from .protograph import lift

    n_types = b.n_b - b.p_b
    if (2 * n_s) % n_types:
        raise ValueError(f"{2 * n_s} bits per packet do not split over {n_types} transmitted types")
    return lift(b, 2 * n_s // n_types, seed)
