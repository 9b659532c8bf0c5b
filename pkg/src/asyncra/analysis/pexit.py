"""Protograph EXIT analysis: convergence tests, interference thresholds and the gain function."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from ..protograph import BaseMatrix
from .capacity import shannon_interference_limit
from .jfunc import S_STEP, table

APP_TARGET = 1e-6
STALL_TOL = 1e-9
MAX_ITER = 5000


@dataclass(frozen=True)
class ProtoNoiseVector:
    """Per-variable-type noise plus interference variance (per real dimension).

    Punctured types carry ``inf``: they have no channel observation.
    """

    variances: tuple[float, ...]

    @classmethod
    def uniform(cls, b: BaseMatrix, sigma2: float) -> "ProtoNoiseVector":
        return cls(tuple(math.inf if j in b.punctured else float(sigma2) for j in range(b.n_b)))

    @classmethod
    def from_alpha(cls, b: BaseMatrix, alpha: float, side: str, sigma_n2: float,
                   interference_var: float) -> "ProtoNoiseVector":
        hit, _ = interfered_types(b, alpha, side)
        return cls(tuple(
            math.inf if j in b.punctured else sigma_n2 + (interference_var if j in hit else 0.0)
            for j in range(b.n_b)))

    @classmethod
    def from_bit_powers(cls, b: BaseMatrix, bit_sigma2) -> "ProtoNoiseVector":
        """Average instantaneous bit-wise noise plus interference over each type's bits.

        ``bit_sigma2`` covers the transmitted bits in order; each unpunctured type
        owns ``len(bit_sigma2) / (n_b - p_b)`` consecutive bits.
        """
        bit_sigma2 = np.asarray(bit_sigma2, dtype=float)
        tx = b.transmitted
        if bit_sigma2.size % len(tx):
            raise ValueError("bit count is not a multiple of the number of transmitted types")
        means = bit_sigma2.reshape(len(tx), -1).mean(axis=1)
        out = [math.inf] * b.n_b
        for j, v in zip(tx, means):
            out[j] = float(v)
        return cls(tuple(out))

    def channel_sigma2(self) -> np.ndarray:
        """LLR variance of each type: 2 / sigma^2 for a Gray-QPSK bit (0 when punctured)."""
        v = np.asarray(self.variances, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(np.isinf(v), 0.0, 2.0 / v)
        return np.where(v <= 0, 1e12, out)


@dataclass(frozen=True)
class ThresholdResult:
    value: float
    side: str
    alpha: float
    converged: bool
    iterations: int


def interfered_types(b: BaseMatrix, alpha: float, side: str) -> tuple[tuple[int, ...], float]:
    """Contiguous unpunctured types hit by interference covering a fraction ``alpha``.

    Returns the types and the effective fraction after rounding to the type grid.
    """
    tx = b.transmitted
    k = int(round(alpha * len(tx)))
    if abs(k - alpha * len(tx)) > 1e-9:
        warnings.warn(f"alpha={alpha} is off the {len(tx)}-type grid; using {k}/{len(tx)}",
                      stacklevel=2)
    if side in ("begin", "b"):
        hit = tx[:k]
    elif side in ("end", "e"):
        hit = tx[len(tx) - k:] if k else ()
    else:
        raise ValueError(f"side must be 'begin' or 'end', not {side!r}")
    return tuple(hit), k / len(tx)


@numba.njit(cache=True)
def _j(s, ytab, step):
    x = abs(s) / step
    k = int(x)
    if k >= ytab.size - 1:
        return 1.0 - math.exp(ytab[ytab.size - 1])
    f = x - k
    return 1.0 - math.exp(ytab[k] * (1.0 - f) + ytab[k + 1] * f)


@numba.njit(cache=True)
def _j_inv(i, negy, step):
    if i <= 0.0:
        return 0.0
    if i >= 1.0:
        return step * (negy.size - 1)
    t = -math.log1p(-i)
    k = np.searchsorted(negy, t) - 1
    if k < 0:
        return 0.0
    if k >= negy.size - 1:
        return step * (negy.size - 1)
    d = negy[k + 1] - negy[k]
    f = (t - negy[k]) / d if d > 0 else 0.0
    return step * (k + f)


@numba.njit(cache=True)
def _pexit(B, sch2, ytab, negy, step, max_iter, target, stall):
    m, n = B.shape
    iec = np.zeros((m, n))
    iev = np.zeros((m, n))
    app = np.zeros(n)
    prev = np.zeros(n)
    for it in range(1, max_iter + 1):
        for j in range(n):
            acc = sch2[j]
            for i in range(m):
                if B[i, j]:
                    s = _j_inv(iec[i, j], negy, step)
                    acc += B[i, j] * s * s
            for i in range(m):
                if B[i, j]:
                    s = _j_inv(iec[i, j], negy, step)
                    v = acc - s * s
                    iev[i, j] = _j(math.sqrt(v if v > 0 else 0.0), ytab, step)
        for i in range(m):
            acc = 0.0
            for j in range(n):
                if B[i, j]:
                    s = _j_inv(1.0 - iev[i, j], negy, step)
                    acc += B[i, j] * s * s
            for j in range(n):
                if B[i, j]:
                    s = _j_inv(1.0 - iev[i, j], negy, step)
                    v = acc - s * s
                    iec[i, j] = 1.0 - _j(math.sqrt(v if v > 0 else 0.0), ytab, step)
        done = True
        delta = 0.0
        for j in range(n):
            acc = sch2[j]
            for i in range(m):
                if B[i, j]:
                    s = _j_inv(iec[i, j], negy, step)
                    acc += B[i, j] * s * s
            app[j] = _j(math.sqrt(acc), ytab, step)
            if app[j] < 1.0 - target:
                done = False
            d = app[j] - prev[j]
            if d > delta:
                delta = d
            prev[j] = app[j]
        if done:
            return True, it, app
        if delta < stall:
            return False, it, app
    return False, max_iter, app


def _tables():
    grid, y = table()
    return y, np.ascontiguousarray(-y)


def pexit_run(b: BaseMatrix, pn: ProtoNoiseVector, max_iter: int = MAX_ITER):
    """Run the recursion; returns (converged, iterations, I_APP per type)."""
    if len(pn.variances) != b.n_b:
        raise ValueError("noise vector length must equal the number of variable types")
    y, negy = _tables()
    ok, it, app = _pexit(np.ascontiguousarray(b.entries), pn.channel_sigma2(), y, negy, S_STEP,
                         int(max_iter), APP_TARGET, STALL_TOL)
    return bool(ok), int(it), app


def pexit_converges(b: BaseMatrix, pn: ProtoNoiseVector, max_iter: int = MAX_ITER) -> bool:
    return pexit_run(b, pn, max_iter)[0]


def region_ldpc(b: BaseMatrix, pn: ProtoNoiseVector) -> bool:
    """Decoding-region membership of a protograph ensemble: every I_APP reaches one."""
    return pexit_converges(b, pn)


def _bisect(pred, lo, hi, rtol, hi_cap):
    """Largest x in [lo, hi) with pred(x) true, assuming monotonicity; pred(lo) must hold."""
    steps = 0
    while pred(hi):
        lo, hi = hi, 2 * hi
        steps += 1
        if hi > hi_cap:
            return math.inf, steps
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
        steps += 1
    return lo, steps


def pexit_interference_threshold(b: BaseMatrix, alpha: float, side: str, sigma_n2: float,
                                 rtol: float = 1e-4) -> ThresholdResult:
    """Largest interference variance on the interfered fraction at which PEXIT converges."""
    hit, eff = interfered_types(b, alpha, side)
    side = "begin" if side in ("begin", "b") else "end"

    def ok(si2):
        return pexit_converges(b, ProtoNoiseVector.from_alpha(b, alpha, side, sigma_n2, si2))

    if not ok(0.0):
        return ThresholdResult(0.0, side, eff, False, 0)
    if not hit:
        return ThresholdResult(math.inf, side, eff, True, 0)
    value, steps = _bisect(ok, 0.0, 0.5, rtol, 1e6)
    return ThresholdResult(value, side, eff, True, steps)


def pexit_noise_threshold(b: BaseMatrix, alpha: float, side: str = "begin",
                          interference_var: float = 0.5, rtol: float = 1e-5) -> ThresholdResult:
    """Largest noise variance with a fixed interference variance on the interfered types."""
    _, eff = interfered_types(b, alpha, side)
    side = "begin" if side in ("begin", "b") else "end"

    def ok(sn2):
        return pexit_converges(b, ProtoNoiseVector.from_alpha(b, alpha, side, sn2, interference_var))

    lo = 1e-3
    if not ok(lo):
        return ThresholdResult(0.0, side, eff, False, 0)
    value, steps = _bisect(ok, lo, 0.25, rtol, 1e3)
    return ThresholdResult(value, side, eff, True, steps)


def awgn_threshold(b: BaseMatrix, rtol: float = 1e-5) -> float:
    """Noise variance threshold without interference."""
    def ok(sn2):
        return pexit_converges(b, ProtoNoiseVector.uniform(b, sn2))

    return _bisect(ok, 1e-3, 0.25, rtol, 1e3)[0]


def channel_key(b: BaseMatrix, hit) -> tuple:
    """Canonical form of (matrix, interfered types) up to column reordering.

    PEXIT sees the graph, not the column order, so two configurations with the
    same multiset of (column, channel label) pairs share every threshold.
    Only check reordering by reversal is considered.
    """
    hit = set(hit)
    labels = [0 if j in b.punctured else (2 if j in hit else 1) for j in range(b.n_b)]
    keys = []
    # reversing the check order is also a relabelling; it maps a symmetric
    # matrix's end configuration onto its begin configuration
    for rows in (b.entries, b.entries[::-1]):
        keys.append(tuple(sorted((lab,) + tuple(int(x) for x in rows[:, j])
                                 for j, lab in enumerate(labels))))
    return (b.m_b, min(keys))


class ThresholdCache:
    """Memoizes interference thresholds by canonical channel configuration and sigma_n2."""

    def __init__(self):
        self._store: dict = {}
        self.hits = 0

    def threshold(self, b: BaseMatrix, alpha: float, side: str, sigma_n2: float) -> ThresholdResult:
        hit, _ = interfered_types(b, alpha, side)
        key = (channel_key(b, hit), float(sigma_n2))
        if key in self._store:
            self.hits += 1
            cached = self._store[key]
            _, eff = interfered_types(b, alpha, side)
            return ThresholdResult(cached.value, "begin" if side in ("begin", "b") else "end", eff,
                                   cached.converged, cached.iterations)
        res = pexit_interference_threshold(b, alpha, side, sigma_n2)
        self._store[key] = res
        return res

    def __len__(self):
        return len(self._store)


def gain(b: BaseMatrix, alphas, sigma_n2: float, rate: float = 1.0,
         cache: ThresholdCache | None = None) -> float:
    """Product over target fractions of begin and end threshold-to-Shannon-limit ratios."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("need at least one target alpha")
    if cache is None:
        cache = ThresholdCache()
    g = 1.0
    for a in alphas:
        _, eff = interfered_types(b, a, "begin")
        limit = shannon_interference_limit(eff, sigma_n2, rate)
        for side in ("begin", "end"):
            th = cache.threshold(b, a, side, sigma_n2).value
            if math.isinf(limit):
                ratio = 1.0 if math.isinf(th) else 0.0
            else:
                ratio = th / limit
            g *= ratio
    return g
