"""QPSK modulation, asynchronous superposition and soft demapping.

Constellation points sit on the axes, ``S = (1, j, -1, -j)`` with Gray labels
``00, 01, 11, 10``. LLRs are log p(bit=0)/p(bit=1). Noise is circular complex
Gaussian with variance ``sigma_n2`` per real dimension, so Es/N0 = 1/(2 sigma_n2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, logsumexp

CONSTELLATION = np.array([1.0 + 0j, 1j, -1.0 + 0j, -1j])
LABELS = ((0, 0), (0, 1), (1, 1), (1, 0))
# constellation indices with bit level 1 (resp. 2) equal to zero / one
BIT1_ZERO, BIT1_ONE = (0, 1), (2, 3)
BIT2_ZERO, BIT2_ONE = (0, 3), (1, 2)
_LABEL_TO_INDEX = np.array([[0, 1], [3, 2]])


class QuadratureError(RuntimeError):
    pass


def es_n0_to_sigma2(es_n0_db: float) -> float:
    """Per-dimension noise variance for unit-energy symbols."""
    return 1.0 / (2.0 * 10.0 ** (es_n0_db / 10.0))


def sigma2_to_es_n0_db(sigma2: float) -> float:
    return 10.0 * np.log10(1.0 / (2.0 * sigma2))


def qpsk_modulate(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or bits.size % 2:
        raise ValueError("QPSK needs an even number of bits")
    idx = _LABEL_TO_INDEX[bits[0::2], bits[1::2]]
    return CONSTELLATION[idx]


def qpsk_hard_bits(symbols) -> np.ndarray:
    l1, l2 = llr_gaussian(np.asarray(symbols), 1.0)
    out = np.empty(2 * np.size(l1), dtype=np.uint8)
    out[0::2] = l1 < 0
    out[1::2] = l2 < 0
    return out


@dataclass
class SymbolTimeline:
    """Received samples at symbol rate plus the number of replicas present at each symbol."""

    samples: np.ndarray
    occupancy: np.ndarray

    def interferers(self, offset: int, n_s: int) -> np.ndarray:
        """Interferer count seen by a replica occupying ``[offset, offset + n_s)``."""
        return self.occupancy[offset:offset + n_s] - 1

    def interference_power(self, offset: int, n_s: int, power: float = 1.0) -> np.ndarray:
        return power * self.interferers(offset, n_s)


def superpose(replicas, sigma_n2: float, rng=None, length: int | None = None) -> SymbolTimeline:
    """Sum phase-rotated replicas ``(symbols, offset, phase)`` and add complex AWGN."""
    replicas = list(replicas)
    if length is None:
        length = max((off + len(sym) for sym, off, _ in replicas), default=0)
    samples = np.zeros(length, dtype=np.complex128)
    occ = np.zeros(length, dtype=np.int64)
    for sym, off, phase in replicas:
        sym = np.asarray(sym)
        if off < 0 or off + sym.size > length:
            raise ValueError("replica falls outside the timeline")
        samples[off:off + sym.size] += sym * np.exp(1j * phase)
        occ[off:off + sym.size] += 1
    if sigma_n2 > 0:
        rng = np.random.default_rng(rng)
        samples += np.sqrt(sigma_n2) * (rng.standard_normal(length) + 1j * rng.standard_normal(length))
    return SymbolTimeline(samples, occ)


def llr_gaussian(y, sigma2):
    """Bit LLRs of Gray QPSK in circular Gaussian noise of ``sigma2`` per dimension.

    Gray QPSK splits into two BPSK sub-channels of amplitude 1/sqrt(2) along
    (1 + j)/sqrt(2) and (1 - j)/sqrt(2), so each LLR is linear in ``y``.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if (sigma2 <= 0).any():
        raise ValueError("sigma2 must be positive")
    y = np.asarray(y)
    return (y.real + y.imag) / sigma2, (y.real - y.imag) / sigma2


def _bit_llrs_from_loglik(loglik):
    """``loglik[..., s]`` = log p(y | S_s) up to a common constant."""
    l1 = logsumexp(loglik[..., BIT1_ZERO], axis=-1) - logsumexp(loglik[..., BIT1_ONE], axis=-1)
    l2 = logsumexp(loglik[..., BIT2_ZERO], axis=-1) - logsumexp(loglik[..., BIT2_ONE], axis=-1)
    return l1, l2


def single_interferer_loglik(y, dphi: float, deps: float, sigma_n2: float) -> np.ndarray:
    """log p(y | S_s) for s = 0..3, marginalizing the interferer symbol pair."""
    if sigma_n2 <= 0:
        raise ValueError("sigma_n2 must be positive")
    y = np.asarray(y, dtype=np.complex128)
    rot = np.exp(1j * dphi)
    pairs = rot * (deps * CONSTELLATION[:, None] + (1.0 - deps) * CONSTELLATION[None, :]).ravel()
    d = y[..., None, None] - CONSTELLATION[:, None] - pairs[None, :]
    return logsumexp(-np.abs(d) ** 2 / (2.0 * sigma_n2), axis=-1)


def llr_single_interferer(y, dphi: float, deps: float, sigma_n2: float):
    """Exact bit LLRs with one equal-power QPSK interferer of known phase and epoch.

    The interfering sample is ``e^{j dphi} (deps S_{k-1} + (1 - deps) S_k)``;
    all 16 symbol pairs are equally likely.
    """
    if not 0.0 <= deps < 1.0:
        raise ValueError("relative epoch must lie in [0, 1)")
    return _bit_llrs_from_loglik(single_interferer_loglik(y, dphi, deps, sigma_n2))


def _randphase_loglik_quadrature(y, sigma_n2: float, n_points: int) -> np.ndarray:
    theta = -np.pi + 2.0 * np.pi * np.arange(n_points) / n_points
    circle = (CONSTELLATION[:, None] * np.exp(1j * theta)[None, :]).ravel()
    d = y[..., None, None] - CONSTELLATION[:, None] - circle[None, :]
    # periodic trapezoid: the mean over the grid approximates (1/2pi) * integral
    return logsumexp(-np.abs(d) ** 2 / (2.0 * sigma_n2), axis=-1) - np.log(circle.size)


def llr_single_interferer_random_phase(y, sigma_n2: float, n_points: int = 256,
                                       rtol: float = 1e-6, max_points: int = 1 << 14):
    """Bit LLRs with one equal-power, symbol-synchronous QPSK interferer of uniform phase.

    The phase integral uses a uniform periodic grid; the grid is doubled until
    two successive estimates agree to ``rtol``.
    """
    if sigma_n2 <= 0:
        raise ValueError("sigma_n2 must be positive")
    y = np.asarray(y, dtype=np.complex128)
    prev = _bit_llrs_from_loglik(_randphase_loglik_quadrature(y, sigma_n2, n_points))
    n = n_points
    while True:
        n *= 2
        cur = _bit_llrs_from_loglik(_randphase_loglik_quadrature(y, sigma_n2, n))
        err = max(float(np.max(np.abs(c - p) / np.maximum(1.0, np.abs(c)), initial=0.0))
                  for c, p in zip(cur, prev))
        if err <= rtol:
            return prev
        if n >= max_points:
            raise QuadratureError(
                f"phase quadrature not converged at {n} points (relative change {err:.3g}, "
                f"sigma_n2={sigma_n2})")
        prev = cur


def randphase_loglik(y, sigma_n2: float) -> np.ndarray:
    """Closed form of the phase-averaged likelihood: a Rician ring around each point.

    log p(y | S_s) = -(|y - S_s| - 1)^2 / (2 sigma^2) + log i0e(|y - S_s| / sigma^2), up to a constant.
    """
    y = np.asarray(y, dtype=np.complex128)
    r = np.abs(y[..., None] - CONSTELLATION)
    return -(r - 1.0) ** 2 / (2.0 * sigma_n2) + np.log(i0e(r / sigma_n2))


LLR_MODELS = ("gaussian", "qpsk_phase0", "qpsk_randphase")


def sample_interfered_llrs(model: str, n: int, sigma_n2: float, rng=None):
    """Bit-level-1 LLRs of QPSK symbols carrying bit 1 = 0 with one equal-power interferer."""
    rng = np.random.default_rng(rng)
    tx = CONSTELLATION[rng.choice(BIT1_ZERO, size=n)]
    noise = np.sqrt(sigma_n2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    if model == "gaussian":
        inter = np.sqrt(0.5) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        return llr_gaussian(tx + inter + noise, sigma_n2 + 0.5)[0]
    k = CONSTELLATION[rng.integers(0, 4, size=n)]
    if model == "qpsk_phase0":
        return llr_single_interferer(tx + k + noise, 0.0, 0.0, sigma_n2)[0]
    if model == "qpsk_randphase":
        y = tx + k * np.exp(1j * rng.uniform(0, 2 * np.pi, size=n)) + noise
        return _bit_llrs_from_loglik(randphase_loglik(y, sigma_n2))[0]
    raise ValueError(f"unknown LLR model {model!r}; choose from {', '.join(LLR_MODELS)}")


def llr_histogram(model: str, es_n0_db: float = 6.0, n: int = 200_000, bins=None, rng=None):
    """Density histogram of bit LLRs; returns (bin_centers, density)."""
    sigma_n2 = es_n0_to_sigma2(es_n0_db)
    llr = sample_interfered_llrs(model, n, sigma_n2, rng)
    if bins is None:
        bins = np.linspace(-40, 40, 161)
    density, edges = np.histogram(llr, bins=bins, density=True)
    return 0.5 * (edges[1:] + edges[:-1]), density
