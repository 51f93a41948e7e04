"""Hypercubic lattice abstraction of ``dx/dt = Ax + Bu`` with unbounded input.

Two feasibility tests decide whether a trajectory can cross the common face
of two adjacent cells: :func:`transition_feasible_full` scans every shared
vertex, :func:`transition_feasible_fast` looks only at the lowest shared
vertex and the signed off-diagonal row sums.  They agree exactly because
the face coordinate along the crossing axis is fixed, so the extremum of
``a_k . v`` over the face vertices adds each positive (or negative)
off-diagonal contribution ``a_kj * eps_j`` to the lowest vertex.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .ts import TransitionSystem

__all__ = [
    "LinearSystem",
    "LatticePartition",
    "Cell",
    "Face",
    "BudgetExceeded",
    "shared_face_vertices",
    "transition_feasible_full",
    "transition_feasible_fast",
    "build_lattice_abstraction",
    "lattice_edges",
]

Direction = Literal["low-to-high", "high-to-low"]
LOW_TO_HIGH = "low-to-high"
HIGH_TO_LOW = "high-to-low"

DEFAULT_CELL_BUDGET = 10 ** 6
MAX_ENUM_DIM = 30
DENSE_BELOW = 64


class BudgetExceeded(ValueError):
    """Raised when an abstraction would exceed its configured size budget."""


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``dx/dt = Ax + Bu``, with A and B held as row-major sparse rows.

    Build with :meth:`from_dense` or :meth:`from_triplets`.  Rows of A are
    kept as ``(cols, vals)`` pairs so one row is a contiguous slice; a dense
    copy of A is also kept when ``n < 64``.
    """

    n: int
    m: int
    a_rows: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...]
    b_rows: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...]
    a_dense: np.ndarray | None = field(default=None, repr=False)

    @staticmethod
    def _rows_from_triplets(n, ncols, triplets):
        acc: list[dict[int, float]] = [dict() for _ in range(n)]
        for i, j, v in triplets:
            i, j, v = int(i), int(j), float(v)
            if not (0 <= i < n and 0 <= j < ncols):
                raise ValueError(f"matrix entry ({i}, {j}) out of range")
            if not math.isfinite(v):
                raise ValueError(f"matrix entry ({i}, {j}) is not finite")
            acc[i][j] = acc[i].get(j, 0.0) + v
        rows = []
        for row in acc:
            items = sorted((j, v) for j, v in row.items() if v != 0.0)
            rows.append((tuple(j for j, _ in items), tuple(v for _, v in items)))
        return tuple(rows)

    @classmethod
    def from_triplets(cls, n: int, m: int, a_triplets: Iterable, b_triplets: Iterable = ()):
        a_rows = cls._rows_from_triplets(n, n, a_triplets)
        b_rows = cls._rows_from_triplets(n, m, b_triplets)
        dense = None
        if n < DENSE_BELOW:
            dense = np.zeros((n, n))
            for i, (cols, vals) in enumerate(a_rows):
                dense[i, list(cols)] = vals
        return cls(n, m, a_rows, b_rows, dense)

    @classmethod
    def from_dense(cls, A, B=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B is None:
            B = np.zeros((n, 0))
        B = np.asarray(B, dtype=float).reshape(n, -1)
        a_trip = [(i, j, A[i, j]) for i, j in zip(*np.nonzero(A))]
        b_trip = [(i, j, B[i, j]) for i, j in zip(*np.nonzero(B))]
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("A and B must be finite")
        return cls.from_triplets(n, B.shape[1], a_trip, b_trip)

    def row_b_nonzero(self, k: int) -> bool:
        return len(self.b_rows[k][0]) > 0

    def dense_a(self) -> np.ndarray:
        if self.a_dense is not None:
            return self.a_dense
        out = np.zeros((self.n, self.n))
        for i, (cols, vals) in enumerate(self.a_rows):
            out[i, list(cols)] = vals
        return out

    def dense_b(self) -> np.ndarray:
        out = np.zeros((self.n, self.m))
        for i, (cols, vals) in enumerate(self.b_rows):
            out[i, list(cols)] = vals
        return out


@dataclass(frozen=True)
class LatticePartition:
    """Box ``[lower, upper)`` tiled by cells of side ``epsilon`` per axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    epsilon: tuple[float, ...]
    counts: tuple[int, ...] = field(init=False)
    strides: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lower)
        hi = tuple(float(x) for x in self.upper)
        eps = tuple(float(x) for x in self.epsilon)
        if not (len(lo) == len(hi) == len(eps)) or not lo:
            raise ValueError("lower, upper and epsilon must have the same positive length")
        counts = []
        for axis, (a, b, e) in enumerate(zip(lo, hi, eps)):
            if not (e > 0 and a < b):
                raise ValueError(f"axis {axis}: need lower < upper and epsilon > 0")
            c = (b - a) / e
            ci = round(c)
            if ci < 1 or abs(c - ci) > 1e-9 * max(1.0, c):
                raise ValueError(f"axis {axis}: box width is not a whole number of cells")
            counts.append(int(ci))
        # axis 0 varies slowest
        strides = [1] * len(counts)
        for axis in range(len(counts) - 2, -1, -1):
            strides[axis] = strides[axis + 1] * counts[axis + 1]
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "counts", tuple(counts))
        object.__setattr__(self, "strides", tuple(strides))

    @classmethod
    def uniform(cls, n: int, lower: float, upper: float, epsilon: float):
        return cls((lower,) * n, (upper,) * n, (epsilon,) * n)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def cell_count(self) -> int:
        return math.prod(self.counts)

    def cell_id(self, index: Sequence[int]) -> int:
        return sum(int(i) * s for i, s in zip(index, self.strides))

    def cell_index(self, cid: int) -> tuple[int, ...]:
        return tuple((cid // s) % c for s, c in zip(self.strides, self.counts))

    def coord(self, cid: int, axis: int) -> int:
        return (cid // self.strides[axis]) % self.counts[axis]

    def cell_of_point(self, x: Sequence[float]) -> int:
        idx = []
        for axis, (v, a, e, c) in enumerate(zip(x, self.lower, self.epsilon, self.counts)):
            i = math.floor((v - a) / e)
            if not 0 <= i < c:
                raise ValueError(f"point leaves the partition box on axis {axis}")
            idx.append(i)
        return self.cell_id(idx)

    def cell_box(self, cid: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.array(self.cell_index(cid), dtype=float)
        lo = np.asarray(self.lower) + idx * np.asarray(self.epsilon)
        return lo, lo + np.asarray(self.epsilon)

    def cell_center(self, cid: int) -> np.ndarray:
        lo, hi = self.cell_box(cid)
        return (lo + hi) / 2


@dataclass(frozen=True)
class Cell:
    index: tuple[int, ...]

    def check(self, part: LatticePartition):
        if len(self.index) != part.n or any(
                not 0 <= i < c for i, c in zip(self.index, part.counts)):
            raise ValueError(f"cell {self.index} outside the lattice")


@dataclass(frozen=True)
class Face:
    """Common face of ``cell_lo`` and ``cell_hi = cell_lo + e_axis``."""

    cell_lo: Cell
    cell_hi: Cell
    axis: int

    def __post_init__(self):
        lo, hi = self.cell_lo.index, self.cell_hi.index
        if len(lo) != len(hi) or not 0 <= self.axis < len(lo):
            raise ValueError("face cells must share a dimension and contain the axis")
        for j, (a, b) in enumerate(zip(lo, hi)):
            if b - a != (1 if j == self.axis else 0):
                raise ValueError("cell_hi must be cell_lo shifted by one along the axis")

    @classmethod
    def between(cls, index_lo: Sequence[int], axis: int) -> "Face":
        lo = tuple(int(i) for i in index_lo)
        hi = tuple(i + 1 if j == axis else i for j, i in enumerate(lo))
        return cls(Cell(lo), Cell(hi), axis)


def _face_lowest_vertex(face: Face, part: LatticePartition) -> np.ndarray:
    idx = np.asarray(face.cell_lo.index, dtype=float)
    v0 = np.asarray(part.lower) + idx * np.asarray(part.epsilon)
    v0[face.axis] += part.epsilon[face.axis]
    return v0


def shared_face_vertices(face: Face, part: LatticePartition) -> list[np.ndarray]:
    """The ``2**(n-1)`` corners of the face, lowest vertex first.

    Vertices are ordered lexicographically by their 0/1 offset pattern over
    the axes other than ``face.axis``.
    """
    n = part.n
    if n > MAX_ENUM_DIM:
        raise ValueError(f"vertex enumeration refused for n={n} > {MAX_ENUM_DIM}")
    face.cell_lo.check(part)
    face.cell_hi.check(part)
    v0 = _face_lowest_vertex(face, part)
    free = [j for j in range(n) if j != face.axis]
    eps = np.asarray(part.epsilon)
    out = []
    for bits in itertools.product((0, 1), repeat=len(free)):
        v = v0.copy()
        for j, b in zip(free, bits):
            if b:
                v[j] += eps[j]
        out.append(v)
    return out


def transition_feasible_full(sys: LinearSystem, face: Face, part: LatticePartition,
                             direction: Direction = LOW_TO_HIGH) -> bool:
    """Exhaustive vertex test: feasible iff B row k is nonzero or some vertex pushes across."""
    k = face.axis
    if sys.row_b_nonzero(k):
        return True
    row = sys.dense_a()[k]
    verts = np.array(shared_face_vertices(face, part))
    p = verts @ row
    if direction == LOW_TO_HIGH:
        return bool(np.any(p > 0))
    if direction == HIGH_TO_LOW:
        return bool(np.any(p < 0))
    raise ValueError(f"unknown direction {direction!r}")


def _fast_lowest(sys: LinearSystem, k: int, lo_coord, part: LatticePartition,
                 direction: str) -> bool:
    # lo_coord(j) -> integer coordinate of the low cell on axis j
    if sys.b_rows[k][0]:
        return True
    cols, vals = sys.a_rows[k]
    lower, eps = part.lower, part.epsilon
    p = 0.0
    extra = 0.0
    if direction == LOW_TO_HIGH:
        for j, a in zip(cols, vals):
            if j == k:
                p += a * (lower[k] + (lo_coord(k) + 1) * eps[k])
            else:
                p += a * (lower[j] + lo_coord(j) * eps[j])
                if a > 0:
                    extra += a * eps[j]
        return p + extra > 0
    if direction == HIGH_TO_LOW:
        for j, a in zip(cols, vals):
            if j == k:
                p += a * (lower[k] + (lo_coord(k) + 1) * eps[k])
            else:
                p += a * (lower[j] + lo_coord(j) * eps[j])
                if a < 0:
                    extra += a * eps[j]
        return p + extra < 0
    raise ValueError(f"unknown direction {direction!r}")


def transition_feasible_fast(sys: LinearSystem, face: Face, part: LatticePartition,
                             direction: Direction = LOW_TO_HIGH) -> bool:
    """Single-vertex test, cost proportional to the nonzeros of row ``face.axis``.

    ``p = a_k . v0`` at the lowest shared vertex; the crossing is feasible
    low-to-high iff ``p + sum_{j != k} max(a_kj, 0) * eps_j > 0`` and
    high-to-low iff ``p + sum_{j != k} min(a_kj, 0) * eps_j < 0``.
    """
    idx = face.cell_lo.index
    return _fast_lowest(sys, face.axis, idx.__getitem__, part, direction)


def _iter_faces(part: LatticePartition):
    """Yield ``(cell_lo_id, axis)`` for every interior face, in id order per axis."""
    counts, strides = part.counts, part.strides
    for axis, c in enumerate(counts):
        if c < 2:
            continue
        stride = strides[axis]
        for cid in range(part.cell_count):
            if (cid // stride) % c < c - 1:
                yield cid, axis


def lattice_edges(sys: LinearSystem, part: LatticePartition, faces=None,
                  full: bool = False) -> list[tuple[int, int]]:
    """Directed cell edges accepted by the fast (or full) test over the given faces."""
    if sys.n != part.n:
        raise ValueError("system and partition dimensions differ")
    edges = []
    for cid, axis in (_iter_faces(part) if faces is None else faces):
        hi = cid + part.strides[axis]
        if full:
            face = Face.between(part.cell_index(cid), axis)
            up = transition_feasible_full(sys, face, part, LOW_TO_HIGH)
            down = transition_feasible_full(sys, face, part, HIGH_TO_LOW)
        else:
            coord = _coord_getter(part, cid)
            up = _fast_lowest(sys, axis, coord, part, LOW_TO_HIGH)
            down = _fast_lowest(sys, axis, coord, part, HIGH_TO_LOW)
        if up:
            edges.append((cid, hi))
        if down:
            edges.append((hi, cid))
    return edges


def _coord_getter(part: LatticePartition, cid: int):
    strides, counts = part.strides, part.counts
    return lambda j: (cid // strides[j]) % counts[j]


def build_lattice_abstraction(sys: LinearSystem, part: LatticePartition, *,
                              self_loops: bool = True, budget: int = DEFAULT_CELL_BUDGET,
                              full: bool = False) -> TransitionSystem:
    """Quotient transition system over the lattice cells.

    One state per cell with the cell id as its output; edges between
    face-adjacent cells per the feasibility test.  The box boundary is
    absorbing: no edge leaves the grid.
    """
    total = part.cell_count
    if total > budget:
        raise BudgetExceeded(f"lattice has {total} cells, budget is {budget}")
    edges = lattice_edges(sys, part, full=full)
    if self_loops:
        edges.extend((c, c) for c in range(total))
    names = None
    if part.n <= 8:
        names = tuple("c" + "_".join(map(str, part.cell_index(c))) for c in range(total))
    return TransitionSystem(total, tuple(edges), tuple(range(total)), tuple(range(total)), names)
