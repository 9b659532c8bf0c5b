"""Lifted LDPC codes: systematic encoding and sum-product decoding."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .protograph import BaseMatrix, LiftedGraph

LLR_CLIP = 30.0


class RankDeficientError(ValueError):
    pass


def gf2_rref(h: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2); returns (matrix, pivot columns)."""
    a = np.array(h, dtype=np.uint8) & 1
    m, n = a.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        nz = np.flatnonzero(a[row:, col])
        if nz.size == 0:
            continue
        p = row + nz[0]
        if p != row:
            a[[row, p]] = a[[p, row]]
        hits = np.flatnonzero(a[:, col])
        hits = hits[hits != row]
        if hits.size:
            a[hits] ^= a[row]
        pivots.append(col)
        row += 1
    return a[:row], pivots


@dataclass(frozen=True, eq=False)
class CodeInstance:
    """A lifted parity-check matrix with its encoder and decoder tables."""

    h: sp.csr_matrix
    z: int
    puncture_mask: np.ndarray
    base: BaseMatrix | None = None
    graph: LiftedGraph | None = field(default=None, repr=False)
    # encoder data: codeword[free] = info, codeword[pivots] = parity_map @ info
    free_cols: np.ndarray = field(default=None, repr=False)
    pivot_cols: np.ndarray = field(default=None, repr=False)
    parity_map: np.ndarray = field(default=None, repr=False)
    # decoder tables (edges sorted by check)
    check_ptr: np.ndarray = field(default=None, repr=False)
    edge_var: np.ndarray = field(default=None, repr=False)
    var_ptr: np.ndarray = field(default=None, repr=False)
    var_edges: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_graph(cls, graph: LiftedGraph, max_rank_deficiency: int | None = None) -> "CodeInstance":
        b = graph.base
        mask = np.zeros(graph.z * b.n_b, dtype=bool)
        for j in b.punctured:
            mask[j * graph.z:(j + 1) * graph.z] = True
        return cls.from_matrix(graph.parity_check(), graph.z, mask, base=b, graph=graph,
                               max_rank_deficiency=max_rank_deficiency)

    @classmethod
    def from_matrix(cls, h, z: int = 1, puncture_mask=None, base=None, graph=None,
                    max_rank_deficiency: int | None = None) -> "CodeInstance":
        h = sp.csr_matrix(h, dtype=np.uint8)
        h.sum_duplicates()
        h.data &= 1
        h.eliminate_zeros()
        m, n = h.shape
        if puncture_mask is None:
            puncture_mask = np.zeros(n, dtype=bool)
        rref, pivots = gf2_rref(h.toarray())
        deficiency = m - len(pivots)
        if max_rank_deficiency is not None and deficiency > max_rank_deficiency:
            raise RankDeficientError(
                f"parity-check matrix has rank {len(pivots)} < {m} rows; re-lift with another seed")
        pivots = np.asarray(pivots, dtype=np.int64)
        free = np.setdiff1d(np.arange(n), pivots)
        parity_map = np.ascontiguousarray(rref[:, free])

        coo = h.tocoo()
        order = np.lexsort((coo.col, coo.row))
        rows, cols = coo.row[order], coo.col[order]
        check_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=m), out=check_ptr[1:])
        var_order = np.argsort(cols, kind="stable")
        var_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=n), out=var_ptr[1:])
        pm = np.asarray(puncture_mask, dtype=bool).copy()
        pm.setflags(write=False)
        return cls(h, z, pm, base, graph, free, pivots, parity_map,
                   check_ptr, cols.astype(np.int64), var_ptr, var_order.astype(np.int64))

    @property
    def n(self) -> int:
        """Full codeword length including punctured bits."""
        return self.h.shape[1]

    @property
    def n_tx(self) -> int:
        return int((~self.puncture_mask).sum())

    @property
    def k(self) -> int:
        return int(self.free_cols.size)

    @property
    def rank(self) -> int:
        return int(self.pivot_cols.size)

    @property
    def column_weights(self) -> np.ndarray:
        return np.diff(self.var_ptr)

    def transmitted(self, codeword: np.ndarray) -> np.ndarray:
        return np.asarray(codeword)[~self.puncture_mask]

    def expand_llr(self, tx_llr: np.ndarray) -> np.ndarray:
        """Place transmitted-bit LLRs into a full frame with zeros at punctured bits."""
        full = np.zeros(self.n)
        full[~self.puncture_mask] = tx_llr
        return full

    def to_alist(self) -> str:
        return to_alist(self.h)


def encode(code: CodeInstance, info) -> np.ndarray:
    info = np.asarray(info, dtype=np.uint8)
    if info.shape != (code.k,):
        raise ValueError(f"expected {code.k} information bits, got {info.size}")
    c = np.zeros(code.n, dtype=np.uint8)
    c[code.free_cols] = info
    c[code.pivot_cols] = (code.parity_map.astype(np.int64) @ info) & 1
    return c


def syndrome(code: CodeInstance, bits) -> int:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape != (code.n,):
        raise ValueError(f"expected {code.n} bits")
    return int(((code.h @ bits) & 1).sum())


@numba.njit(cache=True)
def _bp(llr, check_ptr, edge_var, var_ptr, var_edges, max_iter, clip):
    m = check_ptr.size - 1
    n = var_ptr.size - 1
    ne = edge_var.size
    v2c = np.empty(ne)
    c2v = np.zeros(ne)
    th = np.empty(ne)
    for e in range(ne):
        v2c[e] = llr[edge_var[e]]
    bits = np.zeros(n, dtype=np.uint8)
    tlim = np.tanh(clip / 2.0)
    for it in range(1, max_iter + 1):
        for c in range(m):
            prod = 1.0
            zeros = 0
            for e in range(check_ptr[c], check_ptr[c + 1]):
                t = np.tanh(0.5 * v2c[e])
                th[e] = t
                if t == 0.0:
                    zeros += 1
                else:
                    prod *= t
            for e in range(check_ptr[c], check_ptr[c + 1]):
                t = th[e]
                if zeros == 0:
                    x = prod / t
                elif zeros == 1 and t == 0.0:
                    x = prod
                else:
                    x = 0.0
                if x > tlim:
                    x = tlim
                elif x < -tlim:
                    x = -tlim
                c2v[e] = 2.0 * np.arctanh(x)
        for v in range(n):
            total = llr[v]
            for k in range(var_ptr[v], var_ptr[v + 1]):
                total += c2v[var_edges[k]]
            bits[v] = 1 if total < 0.0 else 0
            for k in range(var_ptr[v], var_ptr[v + 1]):
                e = var_edges[k]
                x = total - c2v[e]
                if x > clip:
                    x = clip
                elif x < -clip:
                    x = -clip
                v2c[e] = x
        ok = True
        for c in range(m):
            par = 0
            for e in range(check_ptr[c], check_ptr[c + 1]):
                par ^= bits[edge_var[e]]
            if par:
                ok = False
                break
        if ok:
            return bits, True, it
    return bits, False, max_iter


def bp_decode(code: CodeInstance, llr, max_iter: int = 50) -> tuple[np.ndarray, bool, int]:
    """Flooding sum-product decoding.

    ``llr`` is log p(0)/p(1) per variable bit, zero at punctured positions.
    Stops early once the hard decision satisfies every check.
    """
    llr = np.asarray(llr, dtype=np.float64)
    if llr.shape != (code.n,):
        raise ValueError(f"expected {code.n} LLRs, got {llr.size}")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if not np.isfinite(llr).all():
        raise ValueError("channel LLRs must be finite")
    llr = np.clip(llr, -LLR_CLIP, LLR_CLIP)
    bits, ok, it = _bp(llr, code.check_ptr, code.edge_var, code.var_ptr, code.var_edges,
                       int(max_iter), LLR_CLIP)
    return bits, bool(ok), int(it)


def to_alist(h) -> str:
    """Sparse alist text (1-based indices)."""
    h = sp.csc_matrix(h)
    m, n = h.shape
    hr = h.tocsr()
    col_deg = np.diff(h.indptr)
    row_deg = np.diff(hr.indptr)
    lines = [f"{n} {m}", f"{col_deg.max()} {row_deg.max()}",
             " ".join(map(str, col_deg)), " ".join(map(str, row_deg))]
    for j in range(n):
        lines.append(" ".join(str(i + 1) for i in sorted(h.indices[h.indptr[j]:h.indptr[j + 1]])))
    for i in range(m):
        lines.append(" ".join(str(j + 1) for j in sorted(hr.indices[hr.indptr[i]:hr.indptr[i + 1]])))
    return "\n".join(lines) + "\n"


def from_alist(text: str) -> sp.csr_matrix:
    tok = [line.split() for line in text.strip().splitlines()]
    n, m = int(tok[0][0]), int(tok[0][1])
    rows, cols = [], []
    for j in range(n):
        for i in tok[4 + j]:
            rows.append(int(i) - 1)
            cols.append(j)
    return sp.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(m, n))
