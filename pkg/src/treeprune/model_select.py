"""Baseline pruning rules: level selection by hold-out risk (CV, FCV, IWCV)
and penalized subtree selection with a mass-weighted complexity penalty
(SN on the pooled sample, SNQ on the target sample)."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import TARGET, DataError, Dataset
from .dyadic_tree import (CYCLICAL, REGULAR, CellId, TreeIndex, axis_splits,
                          build_index, cell_coords)

CV, FCV, IWCV = "CV", "FCV", "IWCV"
SN, SNQ = "SN", "SNQ"

SN_GRID = tuple(2.0 ** k for k in range(-6, 5))


# -- folds ------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    fold_count: int
    assignments: np.ndarray

    def holdout(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def train(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != k)


def make_folds(data: Dataset, fold_count: int = 2, seed: int = 0) -> FoldPlan:
    """Random folds stratified by origin; per-origin fold sizes differ by at most one."""
    if fold_count < 2:
        raise ValueError("fold_count must be >= 2")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(data), dtype=np.int64)
    for tag in np.unique(data.origin):
        idx = np.flatnonzero(data.origin == tag)
        if idx.size < fold_count:
            raise DataError(f"origin {tag} has {idx.size} samples, fewer than {fold_count} folds")
        perm = rng.permutation(idx)
        assign[perm] = np.arange(idx.size) % fold_count
    return FoldPlan(fold_count, assign)


# -- density ratios ---------------------------------------------------------

@dataclass(frozen=True)
class RatioEstimate:
    """Target/source density ratio from cell frequencies on one tree level.

    With ``interpolate`` set, a point's weight is the multilinear blend of the
    cell weights at the surrounding cell centres (clamped at the cube faces);
    otherwise it is the weight of the cell containing the point.
    """

    level: int
    cell_weights: dict
    smoothing: float
    default_weight: float = 1.0
    kind: str = REGULAR
    dim: int = 1
    interpolate: bool = True

    def _lookup(self, coords) -> np.ndarray:
        get, lvl, dflt = self.cell_weights.get, self.level, self.default_weight
        return np.array([get(CellId(lvl, tuple(int(v) for v in c)), dflt) for c in coords])

    def weights(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        splits = axis_splits(self.level, self.dim, self.kind)
        if not self.interpolate:
            return self._lookup(cell_coords(X, splits))
        m = (1 << splits.astype(np.int64)).astype(float)
        u = X * m - 0.5
        i0 = np.floor(u)
        t = u - i0
        i0 = i0.astype(np.int64)
        top = (m - 1).astype(np.int64)
        out = np.zeros(len(X))
        for corner in itertools.product((0, 1), repeat=self.dim):
            c = np.array(corner)
            coords = np.clip(i0 + c, 0, top)
            w = np.prod(np.where(c == 1, t, 1 - t), axis=1)
            out += w * self._lookup(coords)
        return out


@dataclass(frozen=True)
class AnalyticRatio:
    """Known density ratio ``q(x) / p(x)`` wrapped for :func:`iwcv_risk`."""

    fn: Callable[[np.ndarray], np.ndarray]

    def weights(self, X) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(X, dtype=float)), dtype=float).reshape(-1)


def estimate_density_ratio(source: Dataset, target: Dataset, level: int,
                           pseudo_count: float = 0.5, kind: str = REGULAR,
                           interpolate: bool = True) -> RatioEstimate:
    """Histogram ratio of smoothed target and source cell frequencies.

    For a cell with counts ``t`` (target) and ``s`` (source), the weight is
    ``((t + a) / (nQ + a c)) / ((s + a) / (nP + a c))`` where ``c`` counts the
    cells occupied by either sample and ``a`` is the pseudo-count.
    """
    if len(source) == 0 or len(target) == 0:
        raise DataError("density ratio needs non-empty source and target samples")
    if source.dim != target.dim:
        raise DataError("source and target dimensions differ")
    if pseudo_count < 0:
        raise ValueError("pseudo_count must be nonnegative")
    dim = source.dim
    if level < 0 or axis_splits(level, dim, kind).max() > 52:
        raise ValueError(f"level {level} out of range")
    splits = axis_splits(level, dim, kind)
    cs = cell_coords(source.X, splits)
    ct = cell_coords(target.X, splits)
    both = np.vstack([cs, ct])
    uniq, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    s_cnt = np.bincount(inv[:len(cs)], minlength=len(uniq))
    t_cnt = np.bincount(inv[len(cs):], minlength=len(uniq))
    a, c = pseudo_count, len(uniq)
    n_p, n_q = len(source), len(target)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = ((t_cnt + a) / (n_q + a * c)) / ((s_cnt + a) / (n_p + a * c))
    if not (np.isfinite(w).all() and (w > 0).all()):
        raise ValueError("zero or infinite density-ratio weights; use a positive pseudo_count")
    default = (n_p + a * c) / (n_q + a * c) if a > 0 else 1.0
    weights = {CellId(level, tuple(int(v) for v in u)): float(x) for u, x in zip(uniq, w)}
    return RatioEstimate(level, weights, a, default, kind, dim, interpolate)


def auto_ratio_level(source: Dataset, target: Dataset, kind: str = REGULAR,
                     min_mean_count: float = 10.0, max_level: int = 30) -> int:
    """Deepest level whose occupied cells hold on average >= ``min_mean_count`` points."""
    X = np.vstack([source.X, target.X])
    best = 0
    for level in range(1, max_level + 1):
        occupied = len(np.unique(cell_coords(X, axis_splits(level, X.shape[1], kind)), axis=0))
        if len(X) / occupied < min_mean_count:
            break
        best = level
    return best


def iwcv_risk(holdout: Dataset, ratio, predictions) -> float:
    """Hold-out risk with source errors reweighted by ``ratio.weights``."""
    pred = np.asarray(predictions).reshape(-1)
    if pred.shape[0] != len(holdout):
        raise ValueError(f"{pred.shape[0]} predictions for {len(holdout)} hold-out rows")
    if len(holdout) == 0:
        raise DataError("empty hold-out set")
    err = (pred != holdout.y).astype(float)
    src = holdout.is_source
    total = err[~src].sum()
    if src.any():
        total += float(np.dot(ratio.weights(holdout.X[src]), err[src]))
    return float(total / len(holdout))


def holdout_risk(kind: str, holdout: Dataset, predictions, ratio=None) -> float:
    pred = np.asarray(predictions)
    if kind == CV:
        tmask = holdout.origin == TARGET
        if not tmask.any():
            raise DataError("CV hold-out fold contains no target samples")
        return float(np.mean(pred[tmask] != holdout.y[tmask]))
    if kind == FCV:
        return float(np.mean(pred != holdout.y))
    if kind == IWCV:
        if ratio is None:
            raise ValueError("IWCV requires a density-ratio estimate")
        return iwcv_risk(holdout, ratio, pred)
    raise ValueError(f"unknown risk kind {kind!r}")


# -- level cross-validation -------------------------------------------------

@dataclass
class SelectionResult:
    method: str
    candidates: list
    fold_risks: np.ndarray  # (candidates, folds)
    selected: object

    @property
    def mean_risks(self) -> np.ndarray:
        return self.fold_risks.mean(axis=1)

    @property
    def level(self):
        return self.selected

    def report_rows(self) -> list[dict]:
        rows = []
        for cand, risks in zip(self.candidates, self.fold_risks):
            row = {"method": self.method, "candidate": cand}
            row.update({f"fold_{k + 1}": float(r) for k, r in enumerate(risks)})
            row["mean_risk"] = float(np.mean(risks))
            row["selected"] = int(cand == self.selected)
            rows.append(row)
        return rows


def level_cv(data: Dataset, folds: FoldPlan, risk: str, ratio=None,
             levels: Sequence[int] = (), kind: str = REGULAR) -> SelectionResult:
    """Pick the tree level with the smallest fold-averaged hold-out risk.

    Ties go to the shallowest level.
    """
    levels = sorted(set(int(l) for l in levels))
    if not levels:
        raise ValueError("levels must be non-empty")
    if risk == IWCV and ratio is None:
        raise ValueError("IWCV requires a density-ratio estimate")
    risks = np.zeros((len(levels), folds.fold_count))
    for k in range(folds.fold_count):
        train = data.take(folds.train(k))
        hold = data.take(folds.holdout(k))
        index = build_index(train, levels[-1], kind)
        for j, level in enumerate(levels):
            risks[j, k] = holdout_risk(risk, hold, index.predict_level(hold.X, level), ratio)
    best = int(np.argmin(risks.mean(axis=1)))
    return SelectionResult(risk, levels, risks, levels[best])


# -- penalized subtrees -----------------------------------------------------

def codelength(depth: int, dim: int, kind: str = CYCLICAL) -> int:
    """Prefix codelength of a node at ``depth``.

    Cyclical (binary) trees use ``ceil(depth (1 + log2 D))``; regular trees,
    whose nodes have ``2**D`` children, use ``depth (D + 1)``. Both satisfy
    Kraft's inequality over the leaves of any subtree.
    """
    if kind == CYCLICAL:
        return int(math.ceil(depth * (1.0 + math.log2(dim)) - 1e-9))
    return depth * (dim + 1)


@dataclass
class PenalizedTree:
    """Tree of occupied cells with per-node leaf risk, mass and codelength.

    ``risk`` is the empirical risk contribution of a node kept as a leaf
    (misclassified count over the risk-sample size), ``mass`` its empirical
    mass under the penalty sample. Node 0 is the root; children have larger
    ids than their parents.
    """

    children: list
    risk: np.ndarray
    mass: np.ndarray
    codelength: np.ndarray
    label: np.ndarray = None
    level: np.ndarray = None
    cells: list = field(default_factory=list)
    kind: str = CYCLICAL
    dim: int = 1

    def __len__(self) -> int:
        return len(self.children)

    def kraft_sum(self, leaves) -> float:
        return float(np.sum(2.0 ** -self.codelength[list(leaves)]))


def build_penalized_tree(index: TreeIndex, variant: str = SN) -> PenalizedTree:
    """Penalized tree over the occupied cells of ``index`` down to its max level."""
    data = index.data
    if variant == SN:
        rmask = np.ones(len(data), dtype=bool)
    elif variant == SNQ:
        rmask = data.origin == TARGET
    else:
        raise ValueError(f"unknown variant {variant!r}")
    n_r = int(rmask.sum())
    if n_r == 0:
        raise DataError(f"{variant} pruning needs a non-empty risk sample")
    y = data.y
    children, risk, mass, code, label, lev, cells = [], [], [], [], [], [], []
    offset = 0
    prev_offset = 0
    for level in range(index.max_level + 1):
        coords, cnt, lab = index.occupied(level)
        m = len(coords)
        pc = index.point_cells(level)
        r_cnt = np.bincount(pc[rmask], minlength=m)
        r_one = np.bincount(pc[rmask], weights=y[rmask], minlength=m)
        risk.extend(np.minimum(r_one, r_cnt - r_one) / n_r)
        mass.extend(r_cnt / n_r)
        code.extend([codelength(level, index.dim, index.kind)] * m)
        label.extend((2 * lab >= cnt).astype(np.int64))
        lev.extend([level] * m)
        cells.extend(CellId(level, tuple(int(v) for v in c)) for c in coords)
        children.extend([] for _ in range(m))
        if level > 0:
            parent = index.point_cells(level - 1)
            # first sample of each child cell identifies its parent cell
            _, first = np.unique(pc, return_index=True)
            for j in range(m):
                children[prev_offset + parent[first[j]]].append(offset + j)
        prev_offset = offset
        offset += m
    return PenalizedTree([np.array(c, dtype=np.int64) for c in children], np.array(risk),
                         np.array(mass), np.array(code, dtype=np.int64),
                         np.array(label, dtype=np.int64), np.array(lev), cells, index.kind, index.dim)


def leaf_penalties(tree: PenalizedTree, n: int, delta: float) -> np.ndarray:
    """Per-node penalty ``sqrt(2 p(A) ([[A]] log 2 + log(2/delta)) / n)``."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return np.sqrt(2.0 * tree.mass * (tree.codelength * math.log(2.0) + math.log(2.0 / delta)) / n)


def sn_penalty(tree: PenalizedTree, leaves, n: int, delta: float) -> float:
    """Penalty of the subtree with the given leaves; additive over leaves."""
    leaves = list(leaves)
    if tree.kraft_sum(leaves) > 1.0 + 1e-12:
        raise ValueError("codelengths violate Kraft's inequality")
    return float(leaf_penalties(tree, n, delta)[leaves].sum())


def optimal_subtree(tree: PenalizedTree, c: float, penalties: np.ndarray) -> tuple[float, list[int]]:
    """Minimize ``sum over leaves (risk + c * penalty)`` over prunings.

    Bottom-up dynamic program; a node collapses to a leaf unless its
    children are strictly better.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    k = len(tree)
    best = np.zeros(k)
    keep = np.zeros(k, dtype=bool)
    leaf_cost = tree.risk + c * penalties
    for v in range(k - 1, -1, -1):
        ch = tree.children[v]
        if len(ch):
            split = best[ch].sum()
            if split < leaf_cost[v]:
                best[v], keep[v] = split, True
                continue
        best[v] = leaf_cost[v]
    leaves, stack = [], [0]
    while stack:
        v = stack.pop()
        if keep[v]:
            stack.extend(tree.children[v][::-1])
        else:
            leaves.append(v)
    return float(best[0]), sorted(leaves)


def enumerate_subtrees(tree: PenalizedTree, node: int = 0):
    """Leaf sets of every pruning rooted at ``node`` (exponential; small trees only)."""
    yield [node]
    ch = tree.children[node]
    if len(ch):
        for combo in itertools.product(*(list(enumerate_subtrees(tree, int(c))) for c in ch)):
            yield [v for part in combo for v in part]


@dataclass
class PrunedTree:
    """Classifier given by a pruning of a :class:`PenalizedTree`."""

    tree: PenalizedTree
    leaves: list
    objective: float = float("nan")

    def __post_init__(self):
        self._lookup = {cell: i for i, cell in enumerate(self.tree.cells)}
        self._leafset = set(self.leaves)
        self._depth = int(self.tree.level.max()) if len(self.tree) else 0

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.tree.dim)
        coords = [cell_coords(X, axis_splits(l, self.tree.dim, self.tree.kind))
                  for l in range(self._depth + 1)]
        out = np.empty(len(X), dtype=np.int64)
        for i in range(len(X)):
            node = 0
            for l in range(1, self._depth + 1):
                if node in self._leafset:
                    break
                nxt = self._lookup.get(CellId(l, tuple(int(v) for v in coords[l][i])))
                if nxt is None:
                    break
                node = nxt
            out[i] = self.tree.label[node]
        return out

    def n_leaves(self) -> int:
        return len(self.leaves)


def sn_prune(index: TreeIndex, c: float, variant: str = SN, tree: PenalizedTree | None = None) -> PrunedTree:
    """Prune the tree of ``index`` by minimizing empirical risk + c * penalty.

    SN: pooled risk and masses. SNQ: target-only risk and masses; leaf labels
    are then re-estimated from the pooled sample.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    if tree is None:
        tree = build_penalized_tree(index, variant)
    n = len(index.data) if variant == SN else index.data.n_target
    pen = leaf_penalties(tree, n, 1.0 / n if n > 1 else 0.5)
    obj, leaves = optimal_subtree(tree, c, pen)
    return PrunedTree(tree, leaves, obj)


def tune_sn_constant(data: Dataset, variant: str, max_level: int, kind: str = CYCLICAL,
                     grid: Sequence[float] = SN_GRID, fold_count: int = 2,
                     seed: int = 0) -> SelectionResult:
    """Choose the penalty weight by target hold-out risk; ties go to the larger weight."""
    folds = make_folds(data, fold_count, seed)
    grid = sorted(grid)
    risks = np.zeros((len(grid), fold_count))
    for k in range(fold_count):
        train = data.take(folds.train(k))
        hold = data.take(folds.holdout(k))
        index = build_index(train, max_level, kind)
        tree = build_penalized_tree(index, variant)
        for j, c in enumerate(grid):
            pruned = sn_prune(index, c, variant, tree)
            risks[j, k] = holdout_risk(CV, hold, pruned.predict(hold.X))
    mean = risks.mean(axis=1)
    best = len(grid) - 1 - int(np.argmin(mean[::-1]))
    return SelectionResult(variant, list(grid), risks, grid[best])


def write_selection_report(results: Sequence[SelectionResult], path) -> None:
    rows = [r for res in results for r in res.report_rows()]
    folds = max((res.fold_risks.shape[1] for res in results), default=0)
    cols = ["method", "candidate", *(f"fold_{k + 1}" for k in range(folds)), "mean_risk", "selected"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
