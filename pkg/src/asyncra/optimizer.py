"""Base-matrix search: symmetric differential evolution and grouped column permutations."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .analysis.capacity import shannon_interference_limit
from .analysis.pexit import ThresholdCache, gain, pexit_interference_threshold
from .protograph import BaseMatrix, permute_columns

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeConfig:
    """Differential-evolution settings. ``shape`` is (n_b, m_b, p_b); the first
    ``p_b`` columns are punctured."""

    shape: tuple[int, int, int] = (11, 6, 1)
    population: int = 200
    generations: int = 4000
    crossover_prob: float = 0.6
    mutation: float = 0.5
    max_entry: int = 3
    alphas: tuple[float, ...] = (0.6, 0.9)
    sigma_n2: float = 0.5 / 10 ** 0.6
    rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        n_b, m_b, p_b = self.shape
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if not 0.0 < self.crossover_prob < 1.0:
            raise ValueError("crossover probability must lie in (0, 1)")
        if self.max_entry < 1:
            raise ValueError("max_entry must be at least 1")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        if not (0 <= p_b < n_b and 0 < m_b < n_b):
            raise ValueError(f"shape {self.shape} does not admit a positive rate")
        if not self.alphas:
            raise ValueError("need at least one target alpha")


class _SymmetricLayout:
    """Maps a free integer vector onto a matrix whose transmitted and punctured
    blocks are each invariant under a half-turn (rows and columns reversed)."""

    def __init__(self, shape):
        n_b, m_b, p_b = shape
        self.n_b, self.m_b, self.p_b = n_b, m_b, p_b
        self.blocks = [(m_b, p_b), (m_b, n_b - p_b)]
        self.free = [(r * c + 1) // 2 for r, c in self.blocks]
        self.size = sum(self.free)

    def matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        parts = []
        start = 0
        for (r, c), f in zip(self.blocks, self.free):
            half = x[start:start + f]
            start += f
            flat = np.empty(r * c, dtype=np.int64)
            flat[:f] = half
            # position r*c-1-k mirrors position k
            rest = r * c - f
            if rest:
                flat[f:] = half[:rest][::-1]
            parts.append(flat.reshape(r, c))
        return np.hstack(parts)

    def base(self, x) -> BaseMatrix | None:
        try:
            return BaseMatrix(self.matrix(x), tuple(range(self.p_b)))
        except ValueError:
            return None


class _Fitness:
    def __init__(self, cfg: DeConfig):
        self.cfg = cfg
        self.thresholds = ThresholdCache()
        self.memo: dict = {}

    def __call__(self, b: BaseMatrix | None) -> float:
        if b is None:
            return 0.0
        if b.key not in self.memo:
            self.memo[b.key] = gain(b, self.cfg.alphas, self.cfg.sigma_n2, self.cfg.rate, self.thresholds)
        return self.memo[b.key]


def evolve(cfg: DeConfig) -> tuple[BaseMatrix, list[float]]:
    """DE/rand/1/bin over the free half of a half-turn-symmetric base matrix.

    Returns the best matrix and the best-so-far gain after initialization and
    after every generation.
    """
    layout = _SymmetricLayout(cfg.shape)
    rng = np.random.default_rng(cfg.seed)
    fitness = _Fitness(cfg)
    pop = rng.integers(0, cfg.max_entry + 1, size=(cfg.population, layout.size))
    scores = np.array([fitness(layout.base(x)) for x in pop])
    if not (scores > 0).any():
        raise RuntimeError("no valid candidate in the initial population; raise max_entry or the population")
    history = [float(scores.max())]
    idx = np.arange(cfg.population)
    for gen in range(cfg.generations):
        trials = np.empty_like(pop)
        for i in range(cfg.population):
            r1, r2, r3 = rng.choice(idx[idx != i], size=3, replace=False)
            mutant = np.rint(pop[r1] + cfg.mutation * (pop[r2] - pop[r3])).astype(np.int64)
            np.clip(mutant, 0, cfg.max_entry, out=mutant)
            cross = rng.random(layout.size) < cfg.crossover_prob
            cross[rng.integers(layout.size)] = True
            trials[i] = np.where(cross, mutant, pop[i])
        # evaluate the whole generation before selection
        trial_scores = np.array([fitness(layout.base(x)) for x in trials])
        better = trial_scores >= scores
        pop[better] = trials[better]
        scores[better] = trial_scores[better]
        history.append(float(scores.max()))
        log.debug("generation %d: best gain %.6f", gen + 1, history[-1])
    best = layout.base(pop[int(np.argmax(scores))])
    return BaseMatrix(best.entries, best.punctured, "evolved"), history


# -- grouped permutation search ------------------------------------------------

class SearchTooLargeError(RuntimeError):
    pass


@dataclass
class PermutationSearchResult:
    permutation: tuple[int, ...]
    gain: float
    arrangements: int  # distinct group-label sequences covered
    evaluated: int  # distinct per-segment column assignments scored
    thresholds: dict = field(default_factory=dict, repr=False)


def _segments(n_tx: int, alphas) -> list[tuple[int, int]]:
    cuts = {0, n_tx}
    for a in alphas:
        k = int(round(a * n_tx))
        cuts.update({k, n_tx - k})
    cuts = sorted(cuts)
    return list(zip(cuts[:-1], cuts[1:]))


def _compositions(total: int, caps: tuple[int, ...]):
    if not caps:
        if total == 0:
            yield ()
        return
    rest_cap = sum(caps[1:])
    for x in range(max(0, total - rest_cap), min(total, caps[0]) + 1):
        for tail in _compositions(total - x, caps[1:]):
            yield (x,) + tail


def _count_tables(sizes: tuple[int, ...], seg_lens: tuple[int, ...]) -> int:
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def count(rem, s):
        if s == len(seg_lens):
            return 1
        return sum(count(tuple(r - c for r, c in zip(rem, comp)), s + 1)
                   for comp in _compositions(seg_lens[s], rem))

    return count(tuple(sizes), 0)


def grouped_permutation_search(b: BaseMatrix, alphas, sigma_n2: float, rate: float = 1.0,
                               groups=None, cap: int = 2_000_000) -> PermutationSearchResult:
    """Best column permutation when columns of one group are treated as interchangeable.

    Punctured columns stay in place. ``groups`` gives a label per transmitted
    column (default: its weight). Label sequences are filled with each group's
    columns in ascending order. Only the set of columns inside each segment
    between consecutive interference boundaries matters to the gain, so each
    table of per-segment group counts is scored once. Ties go to the
    lexicographically smallest permutation.
    """
    alphas = list(alphas)
    if not alphas:
        raise ValueError("need at least one target alpha")
    tx = list(b.transmitted)
    n_tx = len(tx)
    if groups is None:
        groups = [int(b.column_weights[j]) for j in tx]
    if len(groups) != n_tx:
        raise ValueError(f"need one group label per transmitted column ({n_tx})")
    labels = sorted(set(groups))
    members = [[tx[t] for t in range(n_tx) if groups[t] == g] for g in labels]
    sizes = tuple(len(m) for m in members)
    segs = _segments(n_tx, alphas)
    seg_lens = tuple(e - s for s, e in segs)
    arrangements = factorial(n_tx)
    for s in sizes:
        arrangements //= factorial(s)
    tables = _count_tables(sizes, seg_lens)
    if tables > cap:
        raise SearchTooLargeError(
            f"{tables} segment assignments ({arrangements} arrangements) exceed the cap of {cap}; "
            "merge column groups or raise the cap")

    # which segments each (alpha, side) configuration interferes with
    configs = []
    for a in alphas:
        k = int(round(a * n_tx))
        limit = shannon_interference_limit(k / n_tx, sigma_n2, rate)
        for side in ("begin", "end"):
            lo, hi = (0, k) if side == "begin" else (n_tx - k, n_tx)
            inside = tuple(i for i, (s, e) in enumerate(segs) if s >= lo and e <= hi)
            configs.append((a, side, limit, inside))

    cache: dict = {}

    def permutation(seg_cols) -> tuple[int, ...]:
        order = [c for cols in seg_cols for c in sorted(cols)]
        perm = list(range(b.n_b))
        for pos, col in zip(tx, order):
            perm[pos] = col
        return tuple(perm)

    def threshold(a, side, cols, perm):
        # the threshold depends only on which columns are interfered
        if cols not in cache:
            pb = permute_columns(b, perm)
            cache[cols] = pexit_interference_threshold(pb, a, side, sigma_n2).value
        return cache[cols]

    best = (-1.0, None)
    evaluated = 0

    def visit(s, rem, seg_cols):
        nonlocal best, evaluated
        if s == len(segs):
            evaluated += 1
            perm = None
            g = 1.0
            for a, side, limit, inside in configs:
                cols = frozenset(c for i in inside for c in seg_cols[i])
                if cols not in cache and perm is None:
                    perm = permutation(seg_cols)
                th = threshold(a, side, cols, perm)
                g *= (1.0 if math.isinf(th) else 0.0) if math.isinf(limit) else th / limit
            if g > best[0] + 1e-12:
                best = (g, permutation(seg_cols))
            elif abs(g - best[0]) <= 1e-12:
                p = permutation(seg_cols)
                if p < best[1]:
                    best = (g, p)
            return
        for comp in _compositions(seg_lens[s], rem):
            cols = []
            for gi, c in enumerate(comp):
                used = sizes[gi] - rem[gi]
                cols.extend(members[gi][used:used + c])
            visit(s + 1, tuple(r - c for r, c in zip(rem, comp)), seg_cols + (tuple(cols),))

    visit(0, sizes, ())
    log.info("grouped search: %d assignments, %d thresholds computed", evaluated, len(cache))
    return PermutationSearchResult(best[1], best[0], arrangements, evaluated, cache)
