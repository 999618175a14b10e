"""Numerical estimates of aggregate and integrated transfer exponents.

Each estimator accepts either a :class:`~treeprune.synth.Measure` (analytic
masses) or a :class:`~treeprune.core.Dataset` (empirical masses) for each of
the source P and target Q. Exponents are read off as slopes of
``log value`` against ``log(1/r)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .core import DataError, Dataset
from .dyadic_tree import REGULAR, build_index
from .synth import Measure, UniformMeasure

DEFAULT_RADII = tuple(2.0 ** -k for k in range(3, 9))


@dataclass(frozen=True)
class ExponentCurve:
    radii: tuple[float, ...]
    values: tuple[float, ...]
    slope: float
    residual: float

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if len(r) != len(self.values):
            raise ValueError("radii and values must have the same length")
        if (np.diff(r) >= 0).any():
            raise ValueError("radii must be strictly decreasing")
        if (np.asarray(self.values) <= 0).any():
            raise ValueError("curve values must be positive")

    @classmethod
    def fit(cls, radii, values) -> "ExponentCurve":
        order = np.argsort(-np.asarray(radii, dtype=float))
        r = tuple(float(radii[i]) for i in order)
        v = tuple(float(values[i]) for i in order)
        slope, res = exponent_slope(r, v)
        return cls(r, v, slope, res)

    def write_csv(self, path, label: str = "value") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", label, "logr", f"log{label}"])
            for r, v in zip(self.radii, self.values):
                w.writerow([repr(r), repr(v), repr(float(np.log(r))), repr(float(np.log(v)))])

    def summary(self) -> str:
        return f"slope={self.slope:.4f} residual={self.residual:.4f}"


def exponent_slope(radii, values) -> tuple[float, float]:
    """Least-squares slope of ``log value`` on ``log(1/r)`` and its RMS residual."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.shape != v.shape or r.size < 3:
        raise ValueError("need at least 3 (radius, value) pairs")
    if (v <= 0).any() or not np.isfinite(v).all():
        raise ValueError("values must be positive and finite")
    if (r <= 0).any():
        raise ValueError("radii must be positive")
    xs, ys = -np.log(r), np.log(v)
    A = np.stack([xs, np.ones_like(xs)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def _neighbor_sum(grid: np.ndarray) -> np.ndarray:
    """Sum of each cell and its 3^d - 1 neighbours, zero outside the cube."""
    out = np.pad(grid, 1)
    for ax in range(grid.ndim):
        out = out + np.roll(out, 1, axis=ax) + np.roll(out, -1, axis=ax)
    return out[(slice(1, -1),) * grid.ndim]


def lambda_occupied_cells(source, target, level: int, pseudo_count: float = 0.5) -> float:
    """``sum over target-occupied cells A of Q(env A) / P(env A)`` at side ``2**-level``.

    With datasets, zero source envelope counts are replaced by
    ``pseudo_count`` (``0`` disables the replacement and raises instead).
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    if isinstance(source, Measure) and isinstance(target, Measure):
        Qc, Pc = target.cell_masses(level), source.cell_masses(level)
        occupied = Qc > 0
        if not occupied.any():
            raise DataError("no target-occupied cells")
        Qe, Pe = _neighbor_sum(Qc)[occupied], _neighbor_sum(Pc)[occupied]
        if (Pe <= 0).any():
            raise DataError("target-occupied envelope with zero source mass")
        return float(np.sum(Qe / Pe))
    if isinstance(source, Dataset) and isinstance(target, Dataset):
        if len(target) == 0 or len(source) == 0:
            raise DataError("no target-occupied cells" if len(target) == 0 else "empty source sample")
        t_idx = build_index(target, level, REGULAR)
        s_idx = build_index(source, level, REGULAR)
        coords = t_idx.occupied(level)[0]
        q_cnt, _ = t_idx.envelope_counts(level, coords)
        p_cnt, _ = s_idx.envelope_counts(level, coords)
        p_cnt = p_cnt.astype(float)
        if pseudo_count > 0:
            p_cnt = np.where(p_cnt > 0, p_cnt, pseudo_count)
        elif (p_cnt == 0).any():
            raise DataError("source-empty envelope with pseudo-counts disabled")
        return float(np.sum((q_cnt / len(target)) / (p_cnt / len(source))))
    raise TypeError("source and target must both be Measures or both be Datasets")


def lambda_dyadic_ambient(source: Measure, target: Measure, level: int) -> float:
    """``sum over all cells C of Q(C) / P(C)``; cells without Q mass contribute 0."""
    Qc, Pc = target.cell_masses(level), source.cell_masses(level)
    pos = Qc > 0
    if (Pc[pos] <= 0).any():
        raise DataError("positive target mass on a cell with zero source mass")
    return float(np.sum(Qc[pos] / Pc[pos]))


def _target_points(target, n_mc: int, seed) -> np.ndarray:
    if isinstance(target, Dataset):
        return np.asarray(target.X)
    if isinstance(target, UniformMeasure):
        # the integrand is heavy-tailed; scrambled Sobol points cut the variance
        m = max(1, int(np.ceil(np.log2(max(n_mc, 2)))))
        return qmc.Sobol(target.dim, scramble=True, seed=seed).random_base2(m)
    if isinstance(target, Measure):
        return target.sample(n_mc, np.random.default_rng(seed))
    raise TypeError("target must be a Measure or a Dataset")


def _ball_masses(source, X: np.ndarray, r: float) -> np.ndarray:
    if isinstance(source, Measure):
        return source.rect_mass(X - r, X + r, open_=True)
    if isinstance(source, Dataset):
        if len(source) == 0:
            raise DataError("empty source sample")
        S = np.asarray(source.X)
        cnt = np.zeros(len(X))
        step = max(1, 4_000_000 // max(1, S.size))
        for s in range(0, len(X), step):
            d = np.abs(X[s:s + step, None, :] - S[None]).max(axis=2)
            cnt[s:s + step] = (d < r).sum(axis=1)
        return np.maximum(cnt, 0.5) / len(source)
    raise TypeError("source must be a Measure or a Dataset")


def phi_integrated(source, target, r: float, n_mc: int = 1 << 14, seed=0) -> float:
    """``integral of 1 / P(B(x, r)) dQ(x)`` with open l-inf balls.

    Analytic ball masses are used for Measures; for a source Dataset the
    empirical ball mass is floored at ``0.5 / nP``.
    """
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    X = _target_points(target, n_mc, seed)
    if len(X) == 0:
        raise DataError("empty target sample")
    mass = _ball_masses(source, X, r)
    if (mass <= 0).any():
        raise DataError("target point with zero source ball mass")
    return float(np.mean(1.0 / mass))


def phi_curve(source, target, radii=DEFAULT_RADII, n_mc: int = 1 << 14, seed=0) -> ExponentCurve:
    """phi over a radius grid; the same target points are reused at every radius."""
    radii = sorted((float(r) for r in radii), reverse=True)
    X = _target_points(target, n_mc, seed)
    values = [float(np.mean(1.0 / _ball_masses(source, X, r))) for r in radii]
    return ExponentCurve.fit(radii, values)


def lambda_curve(estimator, source, target, levels) -> ExponentCurve:
    """Apply a level-indexed estimator on each level; radius is ``2**-level``."""
    levels = sorted(int(l) for l in levels)
    return ExponentCurve.fit([2.0 ** -l for l in levels],
                             [estimator(source, target, l) for l in levels])
