"""Protograph base matrices: validation, column permutation, persistence and lifting."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class BaseMatrix:
    """Integer protograph base matrix.

    ``entries[i, j]`` is the number of parallel edges between check type ``i``
    and variable type ``j``. ``punctured`` lists the variable types that are
    never transmitted.
    """

    entries: np.ndarray
    punctured: tuple[int, ...] = ()
    name: str = ""

    def __post_init__(self):
        b = np.array(self.entries, dtype=np.int64)
        if b.ndim != 2:
            raise ValueError("base matrix must be two-dimensional")
        b.setflags(write=False)
        object.__setattr__(self, "entries", b)
        object.__setattr__(self, "punctured", tuple(int(p) for p in self.punctured))
        m_b, n_b = b.shape
        if (b < 0).any():
            raise ValueError("base matrix entries must be non-negative")
        if (b.sum(axis=1) == 0).any() or (b.sum(axis=0) == 0).any():
            raise ValueError("every row and column of the base matrix needs a nonzero entry")
        if len(set(self.punctured)) != len(self.punctured):
            raise ValueError("punctured columns must be distinct")
        if any(p < 0 or p >= n_b for p in self.punctured):
            raise ValueError("punctured column index out of range")
        if not (len(self.punctured) < n_b and m_b < n_b):
            raise ValueError("base matrix must have a positive design rate")

    @property
    def m_b(self) -> int:
        return self.entries.shape[0]

    @property
    def n_b(self) -> int:
        return self.entries.shape[1]

    @property
    def p_b(self) -> int:
        return len(self.punctured)

    @property
    def transmitted(self) -> tuple[int, ...]:
        """Unpunctured variable types in transmission order."""
        return tuple(j for j in range(self.n_b) if j not in self.punctured)

    @property
    def column_weights(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    @property
    def key(self) -> tuple:
        return (self.entries.shape, self.entries.tobytes(), self.punctured)

    def __eq__(self, other):
        if not isinstance(other, BaseMatrix):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<BaseMatrix{label} {self.m_b}x{self.n_b} punctured={list(self.punctured)}>"


def design_rate(b: BaseMatrix) -> Fraction:
    return Fraction(b.n_b - b.m_b, b.n_b - b.p_b)


def is_edge_symmetric(b: BaseMatrix) -> bool:
    """True when the transmitted and punctured sub-matrices are both invariant
    under a simultaneous reversal of rows and columns."""
    tx = b.entries[:, list(b.transmitted)]
    if not np.array_equal(tx, tx[::-1, ::-1]):
        return False
    if b.p_b:
        pm = b.entries[:, list(b.punctured)]
        return bool(np.array_equal(pm, pm[::-1, ::-1]))
    return True


def _check_perm(perm, n: int) -> np.ndarray:
    p = np.asarray(perm, dtype=np.int64)
    if p.shape != (n,):
        raise ValueError(f"permutation length {p.size} does not match {n} columns")
    if not np.array_equal(np.sort(p), np.arange(n)):
        raise ValueError("permutation is not a bijection")
    return p


def permute_columns(b: BaseMatrix, perm) -> BaseMatrix:
    """Column ``j`` of the result is column ``perm[j]`` of ``b``."""
    p = _check_perm(perm, b.n_b)
    inv = np.argsort(p)
    punct = tuple(sorted(int(inv[c]) for c in b.punctured))
    return BaseMatrix(b.entries[:, p], punct, b.name)


def invert_permutation(perm) -> np.ndarray:
    p = np.asarray(perm, dtype=np.int64)
    return np.argsort(p)


# Ad-hoc symmetric design, first column punctured.
_ADHOC = [
    [1, 0, 0, 2, 2, 0, 0, 0, 0, 1, 1],
    [2, 0, 0, 0, 0, 0, 1, 0, 1, 1, 0],
    [2, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1],
    [2, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0],
    [2, 0, 1, 1, 0, 1, 0, 0, 0, 0, 0],
    [1, 1, 1, 0, 0, 0, 0, 2, 2, 0, 0],
]

# Raptor-like 5G short-block proposal, first two columns punctured.
_FIVEG = [
    [1, 0, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0],
    [1, 1, 1, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0],
    [1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0],
    [1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0],
    [1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0],
    [1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0],
    [1, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 1],
]

# Column permutation of the 5G matrix maximizing the begin/end gain.
FIVEG_PERMUTATION = (0, 1, 16, 4, 6, 8, 10, 12, 20, 2, 14, 18, 19, 15, 3, 21, 13, 11, 9, 7, 5, 17)

BUILTIN_NAMES = ("AdHoc", "FiveG", "FiveGPermuted")


def builtin(name: str) -> BaseMatrix:
    """Return one of the named reference base matrices."""
    key = name.lower().replace("-", "").replace("_", "")
    if key == "adhoc":
        return BaseMatrix(np.array(_ADHOC), (0,), "AdHoc")
    if key == "fiveg":
        return BaseMatrix(np.array(_FIVEG), (0, 1), "FiveG")
    if key == "fivegpermuted":
        b = permute_columns(builtin("FiveG"), FIVEG_PERMUTATION)
        return BaseMatrix(b.entries, b.punctured, "FiveGPermuted")
    raise ValueError(f"unknown builtin base matrix {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def resolve(name_or_path: str | Path) -> BaseMatrix:
    """Builtin name or path to a base-matrix text file."""
    try:
        return builtin(str(name_or_path))
    except ValueError:
        path = Path(name_or_path)
        if not path.exists():
            raise ValueError(f"{name_or_path!r} is neither a builtin base matrix nor a file") from None
        return load(path)


# -- text format ------------------------------------------------------------

def dumps(b: BaseMatrix) -> str:
    lines = []
    if b.name:
        lines.append(f"# {b.name}")
    lines.append(f"{b.m_b} {b.n_b} {b.p_b}")
    lines.append(" ".join(str(p) for p in b.punctured))
    lines.extend(" ".join(str(int(v)) for v in row) for row in b.entries)
    return "\n".join(lines) + "\n"


def loads(text: str, name: str = "") -> BaseMatrix:
    # The puncture line may be empty, so comments are stripped but blank lines kept.
    raw = [line.split("#", 1)[0].strip() for line in text.splitlines()]
    comment_only = [line.strip().startswith("#") for line in text.splitlines()]
    lines = [r for r, c in zip(raw, comment_only) if not c]
    while lines and not lines[0]:
        lines.pop(0)
    if len(lines) < 2:
        raise ValueError("base-matrix file too short")
    try:
        m_b, n_b, p_b = (int(t) for t in lines[0].split())
    except ValueError:
        raise ValueError("first line must be 'm_b n_b p_b'") from None
    punct = tuple(int(t) for t in lines[1].split())
    if len(punct) != p_b:
        raise ValueError(f"expected {p_b} punctured indices, got {len(punct)}")
    rows = [r for r in lines[2:] if r]
    if len(rows) != m_b:
        raise ValueError(f"expected {m_b} matrix rows, got {len(rows)}")
    entries = np.array([[int(t) for t in r.split()] for r in rows])
    if entries.shape != (m_b, n_b):
        raise ValueError(f"matrix rows must have {n_b} entries")
    return BaseMatrix(entries, punct, name)


def save(b: BaseMatrix, path: str | Path) -> None:
    Path(path).write_text(dumps(b))


def load(path: str | Path) -> BaseMatrix:
    path = Path(path)
    return loads(path.read_text(), name=path.stem)


# -- lifting ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LiftedGraph:
    """Circulant lifting of a base matrix: ``shifts[(i, j)]`` holds one shift per parallel edge."""

    base: BaseMatrix
    z: int
    shifts: dict = field(repr=False)

    def parity_check(self) -> sp.csr_matrix:
        rows, cols = [], []
        r = np.arange(self.z)
        for (i, j), ss in self.shifts.items():
            for s in ss:
                rows.append(i * self.z + r)
                cols.append(j * self.z + (r + s) % self.z)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.ones(rows.size, dtype=np.uint8)
        shape = (self.z * self.base.m_b, self.z * self.base.n_b)
        return sp.csr_matrix((data, (rows, cols)), shape=shape)


def _forbidden_shifts(placed: list[tuple[int, int, int]], i: int, j: int, z: int) -> set[int]:
    """Shifts for a new edge at block (i, j) that would close a length-4 cycle.

    A 4-cycle is a closed walk e1 (i,j) -> e2 (i,j2) -> e3 (i2,j2) -> e4 (i2,j)
    with consecutive edges distinct and s1 - s2 + s3 - s4 = 0 (mod z).
    """
    by_row: dict[int, list[tuple[int, int]]] = {}
    by_col: dict[int, list[tuple[int, int]]] = {}
    for k, (r, c, s) in enumerate(placed):
        by_row.setdefault(r, []).append((k, c))
        by_col.setdefault(c, []).append((k, r))
    bad = set()
    for k2, j2 in by_row.get(i, []):
        s2 = placed[k2][2]
        for k3, i2 in by_col.get(j2, []):
            if k3 == k2:
                continue
            s3 = placed[k3][2]
            for k4, c4 in by_row.get(i2, []):
                if c4 != j or k4 == k3:
                    continue
                bad.add((s2 - s3 + placed[k4][2]) % z)
    # walks visiting the new edge twice: 2s = s2 + s4 with e2, e4 parallel to it
    own = [s for (r, c, s) in placed if r == i and c == j]
    for s2 in own:
        for s4 in own:
            for s in range(z):
                if (2 * s - s2 - s4) % z == 0:
                    bad.add(s)
    return bad


def lift_graph(b: BaseMatrix, z: int, seed: int = 0) -> LiftedGraph:
    """Choose circulant shifts greedily, avoiding 4-cycles whenever some shift allows it.

    Edges are placed column by column; each shift is drawn uniformly from the
    cycle-free candidates, falling back to any shift distinct from the block's
    other circulants.
    """
    if z < int(b.entries.max()):
        raise ValueError(f"lifting factor {z} is too small for entries up to {b.entries.max()}")
    rng = np.random.default_rng(seed)
    placed: list[tuple[int, int, int]] = []
    for j in range(b.n_b):
        for i in range(b.m_b):
            for _ in range(b.entries[i, j]):
                own = {s for (r, c, s) in placed if r == i and c == j}
                bad = _forbidden_shifts(placed, i, j, z) | own
                allowed = [s for s in range(z) if s not in bad]
                if not allowed:
                    allowed = [s for s in range(z) if s not in own]
                if not allowed:
                    raise ValueError(f"cannot place {b.entries[i, j]} distinct circulants with z={z}")
                placed.append((i, j, int(rng.choice(allowed))))
    shifts: dict[tuple[int, int], tuple[int, ...]] = {}
    for r, c, s in placed:
        shifts[(r, c)] = shifts.get((r, c), ()) + (s,)
    return LiftedGraph(b, z, shifts)


def lift(b: BaseMatrix, z: int, seed: int = 0):
    """Lift ``b`` by ``z`` and build the encoder; returns a :class:`asyncra.codec.CodeInstance`."""
    from .codec import CodeInstance

    return CodeInstance.from_graph(lift_graph(b, z, seed))
