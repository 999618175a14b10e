"""Leveled dyadic partition index over a pooled sample.

Two tree kinds are supported. ``regular`` level ``i`` splits every axis ``i``
times (cells are cubes of side 2**-i). ``cyclical`` level ``i`` has made ``i``
binary splits, the split from level ``l`` to ``l + 1`` acting on axis
``l mod D``; all cells at a level are congruent boxes with aspect ratio <= 2.

Cells are half-open ``[a, b)`` per axis; coordinate 1.0 is clamped into the
last cell. Only occupied cells are stored.

Envelope statistics (the cell dilated in l-inf by its smallest side) are read
off a finer "envelope grid" whose cells have that smallest side in every
direction; the envelope is then an exact union of envelope-grid cells.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import TARGET, DataError, Dataset

REGULAR = "regular"
CYCLICAL = "cyclical"

# cap on the size (in booleans) of one broadcast block in envelope queries
_BLOCK = 4_000_000


@dataclass(frozen=True, order=True)
class CellId:
    level: int
    coords: tuple[int, ...]


@dataclass(frozen=True)
class CellStats:
    count: int = 0
    label_sum: int = 0

    @property
    def mean(self) -> float:
        return self.label_sum / self.count if self.count else 0.0


def axis_splits(level: int, dim: int, kind: str) -> np.ndarray:
    """Number of bisections applied along each axis at ``level``."""
    if kind == REGULAR:
        return np.full(dim, level, dtype=np.int64)
    if kind == CYCLICAL:
        base, extra = divmod(level, dim)
        return base + (np.arange(dim) < extra).astype(np.int64)
    raise ValueError(f"unknown tree kind {kind!r}")


def envelope_level(level: int, dim: int, kind: str) -> int:
    """Level of the grid whose cells have side equal to the smallest side at ``level``."""
    if kind == REGULAR:
        return level
    return dim * math.ceil(level / dim)


def cell_coords(X: np.ndarray, splits: np.ndarray) -> np.ndarray:
    """Integer coordinates of the cells containing the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = (1 << splits).astype(np.int64)
    c = np.floor(X * m).astype(np.int64)
    return np.minimum(np.maximum(c, 0), m - 1)


def admissible_levels(n_p: int, n_q: int) -> list[int]:
    """Levels ``i`` (side ``2**-i``) with ``i = 0..ceil(log2(1/eps))``,
    ``eps = (n_p + n_q)**-1/2``."""
    n = int(n_p) + int(n_q)
    if n < 1:
        raise ValueError("need at least one sample to define admissible levels")
    # ceil(log2(sqrt(n))) computed in exact integer arithmetic
    deepest = 0
    while 4 ** deepest < n:
        deepest += 1
    return list(range(deepest + 1))


def tree_levels(n_p: int, n_q: int, dim: int, kind: str = REGULAR) -> list[int]:
    """Admissible levels expressed in the level numbering of ``kind``.

    A cyclical tree needs ``dim`` splits per halving of the cell side, so its
    deepest admissible level is ``dim`` times the regular one.
    """
    deepest = admissible_levels(n_p, n_q)[-1]
    if kind == CYCLICAL:
        deepest *= dim
    return list(range(deepest + 1))


def coarsest_level(dim: int, kind: str) -> int:
    """Level at which the smallest cell side first equals 1/2."""
    return 1 if kind == REGULAR else dim


class TreeIndex:
    """Per-level occupancy statistics of a pooled sample.

    Built by :func:`build_index`; read-only afterwards.
    """

    def __init__(self, data: Dataset, max_level: int, kind: str):
        if max_level < 0:
            raise ValueError("max_level must be >= 0")
        if kind not in (REGULAR, CYCLICAL):
            raise ValueError(f"unknown tree kind {kind!r}")
        X = data.X
        if X.size and (X.min() < 0.0 or X.max() > 1.0 or not np.isfinite(X).all()):
            raise DataError("features must lie in [0, 1]; normalize first")
        self.kind = kind
        self.dim = data.dim
        self.max_level = int(max_level)
        self.data = data
        self.total_counts = (data.n_source, data.n_target)
        top = envelope_level(self.max_level, self.dim, kind) if self.dim else self.max_level
        self._coords: dict[int, np.ndarray] = {}
        self._count: dict[int, np.ndarray] = {}
        self._labels: dict[int, np.ndarray] = {}
        self._point_cell: dict[int, np.ndarray] = {}
        y = data.y
        for level in range(top + 1):
            c = cell_coords(X, self.splits(level)) if len(data) else np.zeros((0, self.dim), np.int64)
            uniq, inv = np.unique(c, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            self._coords[level] = uniq
            self._count[level] = np.bincount(inv, minlength=len(uniq)).astype(np.int64)
            self._labels[level] = np.bincount(inv, weights=y, minlength=len(uniq)).astype(np.int64)
            self._point_cell[level] = inv

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def levels(self) -> range:
        return range(self.max_level + 1)

    def splits(self, level: int) -> np.ndarray:
        return axis_splits(level, self.dim, self.kind)

    def side_lengths(self, level: int) -> np.ndarray:
        return 2.0 ** -self.splits(level)

    def min_side(self, level: int) -> float:
        return float(self.side_lengths(level).min()) if self.dim else 1.0

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= self.max_level:
            raise ValueError(f"level {level} outside 0..{self.max_level}")

    def _check_cell(self, cell: CellId) -> None:
        self._check_level(cell.level)
        m = 1 << self.splits(cell.level)
        c = np.asarray(cell.coords)
        if c.shape != (self.dim,) or (c < 0).any() or (c >= m).any():
            raise ValueError(f"invalid cell {cell} for this index")

    # -- cell level -----------------------------------------------------

    def cell_of(self, x, level: int) -> CellId:
        self._check_level(level)
        c = cell_coords(np.asarray(x, dtype=float).reshape(1, -1), self.splits(level))[0]
        return CellId(level, tuple(int(v) for v in c))

    def cells(self, level: int) -> dict[CellId, CellStats]:
        """Occupied cells at ``level``; absent cells have zero stats."""
        self._check_level(level)
        return {
            CellId(level, tuple(int(v) for v in c)): CellStats(int(k), int(s))
            for c, k, s in zip(self._coords[level], self._count[level], self._labels[level])
        }

    def stats(self, cell: CellId) -> CellStats:
        self._check_cell(cell)
        coords = self._coords[cell.level]
        hit = np.flatnonzero((coords == np.asarray(cell.coords)).all(axis=1)) if len(coords) else []
        if len(hit) == 0:
            return CellStats()
        i = hit[0]
        return CellStats(int(self._count[cell.level][i]), int(self._labels[cell.level][i]))

    def point_cells(self, level: int) -> np.ndarray:
        """Row index into the occupied-cell table of ``level`` for every sample."""
        return self._point_cell[level]

    def occupied(self, level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(coords, counts, label_sums) of occupied cells at ``level``."""
        return self._coords[level], self._count[level], self._labels[level]

    # -- envelopes ------------------------------------------------------

    def envelope_box(self, level: int, coords: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
        """Inclusive coordinate ranges, on the envelope grid, covering the
        envelopes of the given cells."""
        elev = envelope_level(level, self.dim, self.kind)
        factor = (1 << (self.splits(elev) - self.splits(level))).astype(np.int64)
        coords = np.atleast_2d(coords)
        lo = coords * factor - 1
        hi = (coords + 1) * factor
        return elev, lo, hi

    def envelope_counts(self, level: int, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Envelope (count, label_sum) for each row of cell ``coords`` at ``level``."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.dim)
        q = coords.shape[0]
        if q == 0 or self.n == 0:
            return np.zeros(q, np.int64), np.zeros(q, np.int64)
        uniq, inv = np.unique(coords, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        elev, lo, hi = self.envelope_box(level, uniq)
        occ, cnt, lab = self._coords[elev], self._count[elev], self._labels[elev]
        # candidates: occupied cells inside the query box along the finest axis
        a = int(np.argmax(self.splits(elev)))
        order = np.argsort(occ[:, a], kind="stable")
        keys = occ[order, a]
        start = np.searchsorted(keys, lo[:, a], side="left")
        lens = np.searchsorted(keys, hi[:, a], side="right") - start
        out_c = np.zeros(len(uniq), np.int64)
        out_l = np.zeros(len(uniq), np.int64)
        budget = max(1, _BLOCK // max(1, self.dim))
        csum = np.cumsum(lens)
        s = 0
        while s < len(uniq):
            base = csum[s - 1] if s else 0
            e = max(s + 1, int(np.searchsorted(csum, base + budget, side="right")))
            qi = np.repeat(np.arange(s, e), lens[s:e])
            if qi.size:
                offs = np.arange(qi.size) - np.repeat(csum[s:e] - lens[s:e] - base, lens[s:e])
                ci = order[start[qi] + offs]
                inside = np.all((occ[ci] >= lo[qi]) & (occ[ci] <= hi[qi]), axis=1)
                out_c[s:e] = np.bincount(qi[inside] - s, weights=cnt[ci[inside]], minlength=e - s)
                out_l[s:e] = np.bincount(qi[inside] - s, weights=lab[ci[inside]], minlength=e - s)
            s = e
        return out_c[inv], out_l[inv]

    def envelope_stats(self, cell: CellId) -> CellStats:
        self._check_cell(cell)
        c, s = self.envelope_counts(cell.level, np.asarray(cell.coords).reshape(1, -1))
        return CellStats(int(c[0]), int(s[0]))

    def point_envelopes(self, X, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Envelope (count, label_sum) of the cell containing each query point."""
        self._check_level(level)
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        return self.envelope_counts(level, cell_coords(X, self.splits(level)))

    # -- estimates ------------------------------------------------------

    def eta_hat(self, x, level: int) -> float:
        return float(self.eta_hat_batch(np.asarray(x, dtype=float).reshape(1, -1), level)[0])

    def eta_hat_batch(self, X, level: int) -> np.ndarray:
        cnt, lab = self.point_envelopes(X, level)
        return np.divide(lab, cnt, out=np.zeros(len(cnt)), where=cnt > 0)

    def classify_at_level(self, x, level: int) -> int:
        return int(self.eta_hat(x, level) >= 0.5)

    def predict_level(self, X, level: int) -> np.ndarray:
        return (self.eta_hat_batch(X, level) >= 0.5).astype(np.int64)

    @cached_property
    def target_mask(self) -> np.ndarray:
        return self.data.origin == TARGET

    def dump_level(self, level: int, path) -> None:
        """Write the occupied cells of one level as CSV."""
        self._check_level(level)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["level", *(f"coord_{j}" for j in range(self.dim)), "count", "labelSum"])
            for c, k, s in zip(self._coords[level], self._count[level], self._labels[level]):
                w.writerow([level, *(int(v) for v in c), int(k), int(s)])


def build_index(data: Dataset, max_level: int, kind: str = REGULAR) -> TreeIndex:
    return TreeIndex(data, max_level, kind)


def cell_of(x, level: int, index: TreeIndex) -> CellId:
    return index.cell_of(x, level)


def envelope_stats(index: TreeIndex, cell: CellId) -> CellStats:
    return index.envelope_stats(cell)


def eta_hat(index: TreeIndex, x, level: int) -> float:
    return index.eta_hat(x, level)


def classify_at_level(index: TreeIndex, x, level: int) -> int:
    return index.classify_at_level(x, level)
