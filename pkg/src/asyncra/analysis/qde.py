"""Quantized density evolution for protograph ensembles.

Messages are probability mass functions on the uniform LLR grid
``k * step, k = -K..K``. Variable nodes convolve densities (FFT, tails folded
into the end bins); check nodes combine densities pairwise through a
precomputed table of the quantized box-plus ``2 atanh(tanh(a/2) tanh(b/2))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy import fft as sfft
from scipy.special import i0e, logsumexp, ndtr

from ..channel import BIT1_ONE, BIT1_ZERO, CONSTELLATION
from ..protograph import BaseMatrix
from .pexit import ThresholdResult, interfered_types

MODELS = ("gaussian", "qpsk_phase_aligned", "qpsk_random_phase")
PE_TARGET = 1e-6
SATURATION_LIMIT = 1e-3
PRUNE = 1e-30


class GridSaturationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    llr_max: float = 30.0
    half_bins: int = 1024

    @property
    def step(self) -> float:
        return self.llr_max / self.half_bins

    @property
    def size(self) -> int:
        return 2 * self.half_bins + 1

    @property
    def values(self) -> np.ndarray:
        return np.arange(-self.half_bins, self.half_bins + 1) * self.step

    def widened(self, factor: float = 1.5) -> "Grid":
        return Grid(self.llr_max * factor, int(round(self.half_bins * factor)))


@lru_cache(maxsize=8)
def boxplus_table(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Output bin of |a| box-plus |b| for magnitude bins a, b in 0..K, and per row
    the first column from which the output stays at its saturated value."""
    k = grid.half_bins
    t = np.tanh(0.5 * np.arange(k + 1) * grid.step)
    prod = np.minimum(np.outer(t, t), np.tanh(0.5 * grid.llr_max))
    out = np.rint(2.0 * np.arctanh(prod) / grid.step).astype(np.int32)
    out = np.ascontiguousarray(np.minimum(out, k))
    # rows are nondecreasing, so the saturated tail starts at the first hit of the last value
    cut = np.argmax(out == out[:, -1:], axis=1).astype(np.int64)
    cut = np.maximum(cut, np.arange(k + 1))
    return out, cut


@numba.njit(cache=True)
def _boxplus(p, q, table, cut, prune):
    k = table.shape[0] - 1
    sp = np.empty(k + 2)
    dp = np.empty(k + 2)
    sq = np.empty(k + 2)
    dq = np.empty(k + 2)
    sp[0] = p[k]
    dp[0] = 0.0
    sq[0] = q[k]
    dq[0] = 0.0
    for a in range(1, k + 1):
        sp[a] = p[k + a] + p[k - a]
        dp[a] = p[k + a] - p[k - a]
        sq[a] = q[k + a] + q[k - a]
        dq[a] = q[k + a] - q[k - a]
    # suffix sums (index k + 1 holds zero)
    sp[k + 1] = dp[k + 1] = sq[k + 1] = dq[k + 1] = 0.0
    tail_sp = np.zeros(k + 2)
    tail_dp = np.zeros(k + 2)
    tail_sq = np.zeros(k + 2)
    tail_dq = np.zeros(k + 2)
    for a in range(k, -1, -1):
        tail_sp[a] = tail_sp[a + 1] + sp[a]
        tail_dp[a] = tail_dp[a + 1] + dp[a]
        tail_sq[a] = tail_sq[a + 1] + sq[a]
        tail_dq[a] = tail_dq[a + 1] + dq[a]
    tot = np.zeros(k + 1)
    diff = np.zeros(k + 1)
    # pairs with b >= a, indexed by the smaller magnitude a
    for a in range(k + 1):
        sa = sp[a]
        if sa > prune:
            da = dp[a]
            row = table[a]
            for b in range(a, cut[a]):
                c = row[b]
                tot[c] += sa * sq[b]
                diff[c] += da * dq[b]
            c = row[k]
            tot[c] += sa * tail_sq[cut[a]]
            diff[c] += da * tail_dq[cut[a]]
    # pairs with a > b, indexed by the smaller magnitude b
    for b in range(k):
        sb = sq[b]
        if sb > prune:
            db = dq[b]
            row = table[b]
            for a in range(b + 1, cut[b]):
                c = row[a]
                tot[c] += sb * sp[a]
                diff[c] += db * dp[a]
            start = max(cut[b], b + 1)
            c = row[k]
            tot[c] += sb * tail_sp[start]
            diff[c] += db * tail_dp[start]
    out = np.empty(2 * k + 1)
    out[k] = tot[0]
    for c in range(1, k + 1):
        out[k + c] = 0.5 * (tot[c] + diff[c])
        out[k - c] = 0.5 * (tot[c] - diff[c])
    return out


def boxplus(p: np.ndarray, q: np.ndarray, grid: Grid) -> np.ndarray:
    """Density of the check-node combination of two independent messages."""
    table, cut = boxplus_table(grid)
    return _norm(_boxplus(p, q, table, cut, PRUNE))


def boxplus_bruteforce(p: np.ndarray, q: np.ndarray, grid: Grid) -> np.ndarray:
    """Reference: enumerate all signed pairs (for tests on small grids)."""
    v = grid.values
    a, b = np.meshgrid(v, v, indexing="ij")
    th = np.clip(np.tanh(a / 2) * np.tanh(b / 2), -np.tanh(grid.llr_max / 2), np.tanh(grid.llr_max / 2))
    mag = np.minimum(np.rint(np.abs(2 * np.arctanh(th)) / grid.step).astype(int), grid.half_bins)
    idx = grid.half_bins + np.sign(th).astype(int) * mag
    out = np.zeros(grid.size)
    np.add.at(out, idx.ravel(), np.outer(p, q).ravel())
    return out


def _fold(conv: np.ndarray, offset: int, k: int) -> np.ndarray:
    """Map a convolution result whose index 0 is LLR bin ``-offset`` onto -K..K, saturating."""
    lo = offset - k
    out = conv[lo:lo + 2 * k + 1].copy()
    out[0] += conv[:lo].sum()
    out[-1] += conv[lo + 2 * k + 1:].sum()
    np.maximum(out, 0.0, out=out)
    return out / out.sum()


def convolve(pmfs, grid: Grid) -> np.ndarray:
    """Density of a sum of independent messages (saturated at the grid ends)."""
    pmfs = list(pmfs)
    k = grid.half_bins
    n = len(pmfs) * 2 * k + 1
    size = sfft.next_fast_len(n, real=True)
    acc = None
    for p in pmfs:
        f = sfft.rfft(p, size)
        acc = f if acc is None else acc * f
    return _fold(sfft.irfft(acc, size)[:n], len(pmfs) * k, k)


def error_probability(pmf: np.ndarray) -> float:
    k = pmf.size // 2
    return float(pmf[:k].sum() + 0.5 * pmf[k])


# -- channel densities ------------------------------------------------------

def gaussian_density(sigma2: float, grid: Grid) -> np.ndarray:
    """Quantized LLR density of a Gray-QPSK bit in Gaussian noise of variance sigma2."""
    mu = 1.0 / sigma2
    sd = math.sqrt(2.0 * mu)
    edges = (np.arange(-grid.half_bins, grid.half_bins) + 0.5) * grid.step
    cdf = ndtr((edges - mu) / sd)
    return np.diff(np.concatenate([[0.0], cdf, [1.0]]))


def _deposit(llr: np.ndarray, weight: np.ndarray, grid: Grid) -> np.ndarray:
    """Histogram with linear (cloud-in-cell) splitting between neighbouring bins."""
    k = grid.half_bins
    x = np.clip(llr / grid.step, -k, k) + k
    lo = np.floor(x).astype(np.int64)
    frac = x - lo
    hi = np.minimum(lo + 1, 2 * k)
    out = np.bincount(lo, weight * (1 - frac), minlength=grid.size)
    out += np.bincount(hi, weight * frac, minlength=grid.size)
    return out


def _interferer_loglik(model: str, y: np.ndarray, sigma_n2: float) -> np.ndarray:
    """log p(y | S_s) up to a shared constant, shape (..., 4)."""
    if model == "qpsk_phase_aligned":
        d = y[..., None, None] - CONSTELLATION[:, None] - CONSTELLATION[None, :]
        return logsumexp(-np.abs(d) ** 2 / (2 * sigma_n2), axis=-1) - math.log(4.0)
    r = np.abs(y[..., None] - CONSTELLATION)
    return -(r - 1.0) ** 2 / (2 * sigma_n2) + np.log(i0e(r / sigma_n2))


def interferer_density(model: str, sigma_n2: float, grid: Grid, resolution: int = 40) -> np.ndarray:
    """Bit-level LLR density with one equal-power symbol-synchronous QPSK interferer.

    Integrates p(y | bit = 0) over a square grid in the received plane
    (spacing sigma / ``resolution``) and deposits each cell on the LLR axis.
    Averages over both symbols carrying bit value zero; by the quarter-turn
    symmetry of the constellation and interferer, both bit levels share this law.
    """
    sigma = math.sqrt(sigma_n2)
    h = sigma / resolution
    half = 2.0 + 8.0 * sigma
    axis = np.arange(-half, half + h / 2, h)
    out = np.zeros(grid.size)
    for start in range(0, axis.size, 256):
        yy = axis[start:start + 256, None] + 1j * axis[None, :]
        ll = _interferer_loglik(model, yy, sigma_n2)
        # the same log-likelihoods with the normalizing constant give the cell masses
        logp_tx = ll[..., list(BIT1_ZERO)] - math.log(2 * math.pi * sigma_n2)
        w = 0.5 * np.exp(logp_tx).sum(axis=-1) * h * h
        llr = logsumexp(ll[..., list(BIT1_ZERO)], axis=-1) - logsumexp(ll[..., list(BIT1_ONE)], axis=-1)
        out += _deposit(llr.ravel(), w.ravel(), grid)
    return out / out.sum()


def channel_density(model: str, sigma_n2: float, grid: Grid) -> np.ndarray:
    """LLR density of an interfered bit for one of :data:`MODELS`."""
    if model == "gaussian":
        return gaussian_density(sigma_n2 + 0.5, grid)
    if model in ("qpsk_phase_aligned", "qpsk_random_phase"):
        return interferer_density(model, sigma_n2, grid)
    raise ValueError(f"unknown interference model {model!r}; choose from {', '.join(MODELS)}")


# -- density evolution ------------------------------------------------------

def _check_saturation(pmf: np.ndarray) -> bool:
    return pmf[0] + pmf[-1] > SATURATION_LIMIT


def density_evolution(b: BaseMatrix, channels: list, grid: Grid, max_iter: int = 400,
                      pe_target: float = PE_TARGET):
    """Run density evolution; ``channels[j]`` is the channel pmf of type j (None if punctured).

    Returns (converged, iterations, per-type error probabilities).
    """
    B = b.entries
    m, n = B.shape
    k = grid.half_bins
    table, cut = boxplus_table(grid)
    erasure = np.zeros(grid.size)
    erasure[k] = 1.0
    ch = [erasure if c is None else c for c in channels]
    cn_to_vn = {(i, j): erasure for i in range(m) for j in range(n) if B[i, j]}
    history = []
    pe = np.ones(n)
    for it in range(1, max_iter + 1):
        vn_to_cn = {}
        for j in range(n):
            nbrs = [i for i in range(m) if B[i, j]]
            deg = int(B[:, j].sum())
            size = sfft.next_fast_len((deg + 1) * 2 * k + 1, real=True)
            f_ch = sfft.rfft(ch[j], size)
            f_in = {i: sfft.rfft(cn_to_vn[(i, j)], size) for i in nbrs}
            full = f_ch.copy()
            for i in nbrs:
                full *= f_in[i] ** int(B[i, j])
            app = _fold(sfft.irfft(full, size)[:(deg + 1) * 2 * k + 1], (deg + 1) * k, k)
            pe[j] = error_probability(app)
            for i in nbrs:
                f = f_ch.copy()
                for s in nbrs:
                    e = int(B[s, j]) - (s == i)
                    if e:
                        f *= f_in[s] ** e
                vn_to_cn[(i, j)] = _fold(sfft.irfft(f, size)[:deg * 2 * k + 1], deg * k, k)
        worst = float(pe.max())
        if worst < pe_target:
            return True, it, pe.copy()
        history.append(worst)
        if len(history) > 12:
            old = history[-12]
            if worst > old * (1 - 1e-4):
                return False, it, pe.copy()
        for i in range(m):
            edges = [j for j in range(n) for _ in range(B[i, j])]
            dens = [vn_to_cn[(i, j)] for j in edges]
            d = len(dens)
            prefix = [dens[0]]
            for t in range(1, d - 1):
                prefix.append(_norm(_boxplus(prefix[-1], dens[t], table, cut, PRUNE)))
            suffix = [dens[-1]]
            for t in range(d - 2, 0, -1):
                suffix.append(_norm(_boxplus(suffix[-1], dens[t], table, cut, PRUNE)))
            suffix = suffix[::-1]  # suffix[t - 1] combines dens[t:]
            done = set()
            for t, j in enumerate(edges):
                if j in done:
                    continue
                done.add(j)
                if d == 1:
                    out = erasure
                elif t == 0:
                    out = suffix[0]
                elif t == d - 1:
                    out = prefix[d - 2]
                else:
                    out = _norm(_boxplus(prefix[t - 1], suffix[t], table, cut, PRUNE))
                cn_to_vn[(i, j)] = out
    return False, max_iter, pe.copy()


def _norm(p):
    np.maximum(p, 0.0, out=p)
    return p / p.sum()


def model_channels(b: BaseMatrix, model: str, alpha: float, side: str, sigma_n2: float,
                   grid: Grid) -> list:
    hit, _ = interfered_types(b, alpha, side)
    clean = gaussian_density(sigma_n2, grid)
    inter = channel_density(model, sigma_n2, grid) if hit else None
    for pmf in (clean, inter):
        if pmf is not None and _check_saturation(pmf):
            raise GridSaturationError(f"channel density saturates the LLR grid (|L| <= {grid.llr_max})")
    return [None if j in b.punctured else (inter if j in hit else clean) for j in range(b.n_b)]


def qde_converges(b: BaseMatrix, model: str, alpha: float, sigma_n2: float, side: str = "begin",
                  grid: Grid = Grid(), max_iter: int = 400) -> bool:
    try:
        channels = model_channels(b, model, alpha, side, sigma_n2, grid)
    except GridSaturationError:
        grid = grid.widened()
        channels = model_channels(b, model, alpha, side, sigma_n2, grid)
    return density_evolution(b, channels, grid, max_iter)[0]


def qde_threshold(b: BaseMatrix, model: str, alpha: float, side: str = "begin",
                  grid: Grid = Grid(), rtol: float = 1e-3, max_iter: int = 400,
                  bracket: tuple[float, float] = (0.1, 0.8)) -> ThresholdResult:
    """Largest noise variance per dimension at which density evolution converges,
    with one equal-power interferer on a fraction ``alpha`` of the transmitted types."""
    if model not in MODELS:
        raise ValueError(f"unknown interference model {model!r}; choose from {', '.join(MODELS)}")
    _, eff = interfered_types(b, alpha, side)
    side = "begin" if side in ("begin", "b") else "end"

    def ok(sn2):
        return qde_converges(b, model, alpha, sn2, side, grid, max_iter)

    lo, hi = bracket
    steps = 0
    while not ok(lo):
        lo, hi = lo / 2, lo
        steps += 1
        if lo < 1e-3:
            return ThresholdResult(0.0, side, eff, False, steps)
    while ok(hi):
        lo, hi = hi, 2 * hi
        steps += 1
        if hi > 100:
            return ThresholdResult(math.inf, side, eff, True, steps)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        steps += 1
    return ThresholdResult(lo, side, eff, True, steps)
