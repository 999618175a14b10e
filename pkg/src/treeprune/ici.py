"""Local depth selection by intersecting confidence intervals.

Starting from a deep level, the walk moves one level up the branch containing
the query point, intersecting the intervals ``eta_r +/- 2 sigma_r``. It stops
when the intersection becomes empty (estimate: midpoint of the crossed
bounds), when it lies on one side of 1/2 (estimate: ``eta_r`` at that level),
or at the coarsest allowed level.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic_tree import TreeIndex, coarsest_level, tree_levels

DISJOINT = "disjoint"
ONE_SIDED = "oneSided"
CAP = "cap"

THEORETICAL = "theoretical"


def theoretical_constant(n: int, delta: float | None = None) -> float:
    """Union-bound width constant ``(1 + 2 sqrt(log(n / delta))) / 2``, natural log.

    ``delta`` defaults to ``1 / n``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if delta is None:
        delta = 1.0 / n
    return 0.5 * (1.0 + 2.0 * math.sqrt(max(0.0, math.log(n / delta))))


@dataclass(frozen=True)
class IciConfig:
    width_constant: float | str = 0.25
    start_level: int | None = None
    cap_level: int | None = None
    delta: float | None = None

    def __post_init__(self):
        if isinstance(self.width_constant, str):
            if self.width_constant != THEORETICAL:
                raise ValueError(f"width_constant must be a positive number or {THEORETICAL!r}")
        elif not self.width_constant > 0:
            raise ValueError("width_constant must be positive")
        if (self.start_level is not None and self.cap_level is not None
                and self.start_level < self.cap_level):
            raise ValueError("start_level must be at least as deep as cap_level")

    def constant(self, index: TreeIndex) -> float:
        if self.width_constant == THEORETICAL:
            return theoretical_constant(max(1, index.n), self.delta)
        return float(self.width_constant)

    def levels(self, index: TreeIndex) -> tuple[int, int]:
        """Resolved (start, cap) levels for ``index``."""
        start = self.start_level
        if start is None:
            n_p, n_q = index.total_counts
            start = tree_levels(n_p, n_q, index.dim, index.kind)[-1] if n_p + n_q else 0
        start = min(start, index.max_level)
        cap = self.cap_level if self.cap_level is not None else coarsest_level(index.dim, index.kind)
        return start, min(cap, start)


@dataclass
class IciTrace:
    visited_levels: list[int] = field(default_factory=list)
    eta: list[float] = field(default_factory=list)
    sigma: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    stop_reason: str = CAP
    estimate: float = 0.0
    label: int = 0

    @property
    def final_interval(self) -> tuple[float, float]:
        return self.lower[-1], self.upper[-1]

    @property
    def chosen_level(self) -> int:
        return self.visited_levels[-1]


def sigma_hat(index: TreeIndex, x, level: int, cfg: IciConfig) -> float:
    """``C / sqrt(envelope count)``; ``inf`` for an empty envelope."""
    cnt, _ = index.point_envelopes(np.asarray(x, dtype=float).reshape(1, -1), level)
    return _sigma(int(cnt[0]), cfg.constant(index))


def _sigma(count: int, c: float) -> float:
    return c / math.sqrt(count) if count > 0 else math.inf


def ici_classify(index: TreeIndex, x, cfg: IciConfig = IciConfig()) -> IciTrace:
    start, cap = cfg.levels(index)
    c = cfg.constant(index)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    trace = IciTrace()
    lo, hi = -math.inf, math.inf
    level = start
    while True:
        cnt, lab = index.point_envelopes(x, level)
        cnt, lab = int(cnt[0]), int(lab[0])
        eta = lab / cnt if cnt else 0.0
        sig = _sigma(cnt, c)
        if cnt:
            lo = max(lo, eta - 2 * sig)
            hi = min(hi, eta + 2 * sig)
        trace.visited_levels.append(level)
        trace.eta.append(eta)
        trace.sigma.append(sig)
        trace.lower.append(lo)
        trace.upper.append(hi)
        if hi <= lo:
            trace.stop_reason, trace.estimate = DISJOINT, (hi + lo) / 2
            break
        trace.estimate = eta
        if hi <= 0.5 or lo >= 0.5:
            trace.stop_reason = ONE_SIDED
            break
        if level <= cap:
            trace.stop_reason = CAP
            break
        level -= 1
    trace.label = int(trace.estimate >= 0.5)
    return trace


def ici_predict_batch(index: TreeIndex, points, cfg: IciConfig = IciConfig(),
                      return_levels: bool = False):
    """Vectorized :func:`ici_classify` labels for many points, in input order."""
    P = np.asarray(points, dtype=float).reshape(-1, index.dim) if len(points) else np.zeros((0, index.dim))
    q = P.shape[0]
    labels = np.zeros(q, np.int64)
    chosen = np.zeros(q, np.int64)
    if q == 0:
        return (labels, chosen) if return_levels else labels
    start, cap = cfg.levels(index)
    c = cfg.constant(index)
    lo = np.full(q, -np.inf)
    hi = np.full(q, np.inf)
    est = np.zeros(q)
    active = np.ones(q, dtype=bool)
    for level in range(start, cap - 1, -1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cnt, lab = index.point_envelopes(P[idx], level)
        eta = np.divide(lab, cnt, out=np.zeros(idx.size), where=cnt > 0)
        width = np.divide(2 * c, np.sqrt(cnt), out=np.full(idx.size, np.inf), where=cnt > 0)
        nonempty = cnt > 0
        lo[idx] = np.where(nonempty, np.maximum(lo[idx], eta - width), lo[idx])
        hi[idx] = np.where(nonempty, np.minimum(hi[idx], eta + width), hi[idx])
        l, h = lo[idx], hi[idx]
        disjoint = h <= l
        with np.errstate(invalid="ignore"):
            est[idx] = np.where(disjoint, (h + l) / 2, eta)
        stop = disjoint | (h <= 0.5) | (l >= 0.5) | (level <= cap)
        chosen[idx[stop]] = level
        active[idx[stop]] = False
    labels = (est >= 0.5).astype(np.int64)
    return (labels, chosen) if return_levels else labels


def dump_traces(traces, path) -> None:
    """CSV with one row per (point, visited level)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "level", "eta_hat", "sigma_hat", "eta_minus", "eta_plus", "stop_reason"])
        for pid, t in enumerate(traces):
            for k, level in enumerate(t.visited_levels):
                last = k == len(t.visited_levels) - 1
                w.writerow([pid, level, repr(t.eta[k]), repr(t.sigma[k]), repr(t.lower[k]),
                            repr(t.upper[k]), t.stop_reason if last else ""])
