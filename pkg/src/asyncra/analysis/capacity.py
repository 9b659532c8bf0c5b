"""QPSK-constrained capacity, outage capacity and random-ensemble decoding regions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..channel import CONSTELLATION

GH_ORDER = 40


@lru_cache(maxsize=None)
def _gh_nodes(order: int):
    t, w = np.polynomial.hermite.hermgauss(order)
    # two-dimensional tensor grid, weights normalized to a probability measure
    tx, ty = np.meshgrid(t, t, indexing="ij")
    ww = np.outer(w, w) / np.pi
    return (tx + 1j * ty).ravel(), ww.ravel()


@lru_cache(maxsize=4096)
def _capacity(sigma2: float, order: int) -> float:
    nodes, weights = _gh_nodes(order)
    noise = math.sqrt(2.0 * sigma2) * nodes
    total = 0.0
    for x in CONSTELLATION:
        d = x - CONSTELLATION  # x - x'
        # log-ratio sum_{x'} p(y|x') / p(y|x) with y = x + n
        expo = -(np.abs(d[None, :] + noise[:, None]) ** 2 - np.abs(noise[:, None]) ** 2) / (2.0 * sigma2)
        m = expo.max(axis=1)
        lse = m + np.log(np.exp(expo - m[:, None]).sum(axis=1))
        total += float(weights @ lse)
    return 2.0 - total / (4.0 * math.log(2.0))


def qpsk_capacity(sigma2: float, order: int = GH_ORDER) -> float:
    """Mutual information (bits/symbol) of uniform unit-energy QPSK in complex AWGN
    with variance ``sigma2`` per real dimension."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if order < 20:
        raise ValueError("Gauss-Hermite order must be at least 20")
    if sigma2 < 1e-3:
        # error rate below 1e-200: the quadrature nodes all sit in the flat region
        return 2.0
    if sigma2 > 1e4:
        return 1.0 / (2.0 * sigma2 * math.log(2.0))
    return min(2.0, max(0.0, _capacity(float(sigma2), order)))


@dataclass(frozen=True)
class InterferencePattern:
    """Block interference description of one replica.

    ``alphas[j]`` is the fraction of symbols whose per-dimension noise plus
    interference variance is ``sigma2s[j]``; the remaining ``1 - sum(alphas)``
    sees noise only.
    """

    alphas: tuple[float, ...]
    sigma2s: tuple[float, ...]
    sigma_n2: float

    def __post_init__(self):
        if len(self.alphas) != len(self.sigma2s):
            raise ValueError("alphas and sigma2s must have equal length")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas) or sum(self.alphas) > 1.0 + 1e-12:
            raise ValueError("fractions must lie in [0, 1] and sum to at most 1")
        if any(b <= a for a, b in zip(self.sigma2s, self.sigma2s[1:])):
            raise ValueError("interference levels must be strictly increasing")
        if self.sigma2s and self.sigma2s[0] <= self.sigma_n2:
            raise ValueError("interference levels must exceed the noise variance")

    @classmethod
    def from_counts(cls, counts, sigma_n2: float, power: float = 1.0) -> "InterferencePattern":
        """Group per-symbol interferer counts into blocks sorted by count."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size == 0:
            raise ValueError("empty replica")
        levels, freq = np.unique(counts[counts > 0], return_counts=True)
        return cls(tuple(float(f) / counts.size for f in freq),
                   tuple(sigma_n2 + power * float(c) / 2.0 for c in levels), sigma_n2)

    @property
    def m(self) -> int:
        return len(self.alphas)


def outage_capacity(p: InterferencePattern) -> float:
    clean = 1.0 - sum(p.alphas)
    return clean * qpsk_capacity(p.sigma_n2) + sum(
        a * qpsk_capacity(s) for a, s in zip(p.alphas, p.sigma2s))


def outage_capacity_single(alpha: float, sigma_n2: float, sigma2: float) -> float:
    return (1.0 - alpha) * qpsk_capacity(sigma_n2) + alpha * qpsk_capacity(sigma2)


def shannon_interference_limit(alpha: float, sigma_n2: float, rate: float = 1.0,
                               rtol: float = 1e-6) -> float:
    """Largest per-dimension interference variance on a fraction ``alpha`` at which the
    outage capacity still supports ``rate``; ``inf`` if any interference is tolerated."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    c_clean = qpsk_capacity(sigma_n2)
    if rate > c_clean * (1 + 1e-12):
        raise ValueError(f"rate {rate} exceeds the interference-free capacity {c_clean:.4f}")
    if (1.0 - alpha) * c_clean >= rate:
        return math.inf

    def margin(si2):
        return outage_capacity_single(alpha, sigma_n2, sigma_n2 + si2) - rate

    if margin(0.0) <= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while margin(hi) > 0:
        lo, hi = hi, 2 * hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def region_random(p: InterferencePattern, rate: float = 1.0, beta: float = 1.0) -> bool:
    """Decoding-region membership for a code reaching a fraction ``beta`` of outage capacity."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    return sum(p.alphas) <= 1.0 + 1e-12 and rate < beta * outage_capacity(p)
