"""Synthetic covariate-shift problems with known geometry.

Three families:

* ``singularPower``: target uniform on [0,1]^d, source density proportional to
  ``dist(x, A_k)**nu`` with ``A_k = {x : x_{k+1} = ... = x_d = 0}``
  (Euclidean distance), regression function ``(1 + sin(pi |x|_1)) / 2``.
* ``oneDExample``: d = 1, source density proportional to ``x**nu``, target
  uniform, ``eta(x) = x``.
* ``pathological``: d = 2 pair of non-doubling measures built from the
  squares ``B_i`` (side 2^-i) and ``B'_i`` (side 4^-i) meeting at
  ``x_i = (1 - 2^-i, 2^-i)``, with a source atom at (0, 1).

Each measure exposes exact or quadrature-based rectangle masses, which the
exponent estimators use in analytic mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import TARGET, Dataset

SINGULAR_POWER = "singularPower"
ONE_D = "oneDExample"
PATHOLOGICAL = "pathological"

SINE = "sine"
LINEAR_1D = "linear1D"
CONSTANT = "constant"

_GL_ORDER = 8
_CHUNK = 1 << 20


def _gauss_legendre(order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    return (t + 1.0) / 2.0, w / 2.0


def power_box_integral(lo, hi, nu: float, order: int = _GL_ORDER) -> np.ndarray:
    """``int over [lo, hi] of |z|**nu dz`` for boxes in the nonnegative orthant.

    ``lo`` and ``hi`` are (q, m). One axis is integrated in closed form;
    higher dimensions use tensor Gauss-Legendre (exact for even integer
    ``nu`` up to the rule's degree).
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    width = np.clip(hi - lo, 0.0, None)
    q, m = lo.shape
    if m == 0:
        return np.ones(q)
    if nu == 0:
        return width.prod(axis=1)
    if m == 1:
        a = np.clip(lo[:, 0], 0.0, None)
        b = np.maximum(a, hi[:, 0])
        return (b ** (nu + 1) - a ** (nu + 1)) / (nu + 1)
    t, w = _gauss_legendre(order)
    out = np.zeros(q)
    step = max(1, _CHUNK // order ** m)
    for s in range(0, q, step):
        lo_s, wd = lo[s:s + step], width[s:s + step]
        sq = np.zeros((len(lo_s),) + (order,) * m)
        wt = np.ones((len(lo_s),) + (order,) * m)
        for j in range(m):
            shape = [len(lo_s)] + [1] * m
            shape[j + 1] = order
            node = lo_s[:, j:j + 1] + wd[:, j:j + 1] * t[None, :]
            sq = sq + (node ** 2).reshape(shape)
            wt = wt * (wd[:, j:j + 1] * w[None, :]).reshape(shape)
        out[s:s + step] = (wt * sq ** (nu / 2)).reshape(len(lo_s), -1).sum(axis=1)
    return out


def _unit_power_integral(m: int, nu: float) -> float:
    """``int over [0,1]^m of |z|**nu``, composite rule on a sub-grid."""
    if m == 0 or nu == 0:
        return 1.0
    if m == 1:
        return 1.0 / (nu + 1)
    g = 8 if m <= 2 else (4 if m == 3 else 2)
    grid = np.stack(np.meshgrid(*([np.arange(g)] * m), indexing="ij"), -1).reshape(-1, m) / g
    return float(power_box_integral(grid, grid + 1.0 / g, nu, order=10 if m <= 3 else 6).sum())


def _clip_box(lo, hi):
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


class Measure:
    """Probability measure on [0,1]^d with computable rectangle masses."""

    dim: int

    def rect_mass(self, lo, hi, open_: bool = False) -> np.ndarray:
        """Masses of the boxes ``[lo, hi]`` (rows of (q, d) arrays).

        Atoms count when ``lo <= a < hi`` (``a <= hi`` at the cube's upper
        face), matching the half-open cell convention, or ``lo < a < hi``
        with ``open_`` for open l-inf balls. Boxes may extend past the cube.
        """
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def cell_masses(self, level: int) -> np.ndarray:
        """Masses of all regular cells of side ``2**-level``, shape ``(2**level,) * d``."""
        m = 1 << level
        if m ** self.dim > 1 << 24:
            raise ValueError("too many cells for a dense mass grid")
        grid = np.stack(np.meshgrid(*([np.arange(m)] * self.dim), indexing="ij"), -1)
        lo = grid.reshape(-1, self.dim) / m
        return self.rect_mass(lo, lo + 1.0 / m).reshape((m,) * self.dim)


class UniformMeasure(Measure):
    def __init__(self, dim: int):
        self.dim = dim

    def rect_mass(self, lo, hi, open_=False):
        lo, hi = _clip_box(np.atleast_2d(lo), np.atleast_2d(hi))
        return np.clip(hi - lo, 0.0, None).prod(axis=1)

    def sample(self, n, rng):
        return rng.random((n, self.dim))

    def density(self, X) -> np.ndarray:
        return np.ones(len(np.atleast_2d(X)))


class PowerMeasure(Measure):
    """Density proportional to ``dist(x, A_k)**nu`` on [0,1]^d."""

    def __init__(self, dim: int, singular_dim: int = 0, nu: float = 0.0, order: int = _GL_ORDER):
        if not 0 <= singular_dim < dim:
            raise ValueError("singular_dim must lie in 0..dim-1")
        if nu < 0:
            raise ValueError("nu must be nonnegative")
        self.dim, self.k, self.nu, self.order = dim, singular_dim, float(nu), order

    @cached_property
    def normalizer(self) -> float:
        return _unit_power_integral(self.dim - self.k, self.nu)

    @property
    def bound(self) -> float:
        """Maximum of ``dist(x, A_k)**nu`` over the cube."""
        return math.sqrt(self.dim - self.k) ** self.nu

    @property
    def acceptance(self) -> float:
        """Acceptance probability of the uniform-proposal rejection sampler."""
        return self.normalizer / self.bound

    def distance(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.sqrt((X[:, self.k:] ** 2).sum(axis=1))

    def density(self, X) -> np.ndarray:
        return self.distance(X) ** self.nu / self.normalizer

    def rect_mass(self, lo, hi, open_=False):
        lo, hi = _clip_box(np.atleast_2d(lo), np.atleast_2d(hi))
        flat = np.clip(hi[:, :self.k] - lo[:, :self.k], 0.0, None).prod(axis=1)
        return flat * power_box_integral(lo[:, self.k:], hi[:, self.k:], self.nu, self.order) / self.normalizer

    def sample(self, n, rng, return_proposals: bool = False):
        out, proposed, have = [], 0, 0
        batch = max(64, int(1.2 * n / max(self.acceptance, 1e-6)))
        while have < n:
            X = rng.random((batch, self.dim))
            ok = rng.random(batch) * self.bound < self.distance(X) ** self.nu
            acc = X[ok]
            need = n - have
            if len(acc) > need:
                # count proposals up to and including the last accepted row used
                proposed += int(np.flatnonzero(ok)[need - 1]) + 1
                acc = acc[:need]
            else:
                proposed += batch
            out.append(acc)
            have += len(acc)
        X = np.vstack(out) if out else np.zeros((0, self.dim))
        return (X, proposed) if return_proposals else X


class PathologicalMeasure(Measure):
    """Source (``"P"``) or target (``"Q"``) of the non-doubling planar pair."""

    def __init__(self, role: str, nu: float = 2.0, depth: int = 12, order: int = _GL_ORDER):
        if role not in ("P", "Q"):
            raise ValueError("role must be 'P' or 'Q'")
        self.dim, self.role, self.nu, self.depth, self.order = 2, role, float(nu), depth, order
        i = np.arange(1, depth + 1)
        self.side = 2.0 ** -i
        self.side2 = 4.0 ** -i
        self.corner = np.stack([1.0 - self.side, self.side], axis=1)  # x_i
        piece = 3.0 * 4.0 ** -i
        piece /= piece.sum()
        self.q_density = piece / (self.side ** 2 + self.side2 ** 2)
        self.unit = _unit_power_integral(2, self.nu)
        self.mass_b = self.q_density * self.side ** 2
        if role == "Q":
            self.mass_b2 = self.q_density * self.side2 ** 2
            self.atom_mass = 0.0
        else:
            self.mass_b2 = self.q_density * self.side2 ** (2 + self.nu) * self.unit
            self.atom_mass = 1.0 - self.mass_b.sum() - self.mass_b2.sum()
        self.atom = np.array([0.0, 1.0])

    def rect_mass(self, lo, hi, open_=False):
        lo_raw, hi_raw = np.atleast_2d(lo).astype(float), np.atleast_2d(hi).astype(float)
        lo, hi = _clip_box(lo_raw, hi_raw)
        total = np.zeros(len(lo))
        for i in range(self.depth):
            c, s, s2 = self.corner[i], self.side[i], self.side2[i]
            b_lo, b_hi = np.maximum(lo, c - s), np.minimum(hi, c)
            total += self.q_density[i] * np.clip(b_hi - b_lo, 0.0, None).prod(axis=1)
            p_lo, p_hi = np.maximum(lo, c), np.minimum(hi, c + s2)
            hit = (p_hi > p_lo).all(axis=1)
            if not hit.any():
                continue
            if self.role == "Q":
                total[hit] += self.q_density[i] * (p_hi[hit] - p_lo[hit]).prod(axis=1)
            else:
                total[hit] += self.q_density[i] * power_box_integral(
                    p_lo[hit] - c, p_hi[hit] - c, self.nu, self.order)
        if self.atom_mass > 0:
            a = self.atom
            if open_:
                inside = ((lo_raw < a) & (a < hi_raw)).all(axis=1)
            else:
                inside = ((lo_raw <= a) & ((a < hi_raw) | ((a == 1.0) & (hi_raw >= 1.0)))).all(axis=1)
            total = total + self.atom_mass * inside
        return total

    def sample(self, n, rng):
        probs = np.concatenate([self.mass_b, self.mass_b2, [self.atom_mass]])
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        which = rng.choice(len(probs), size=n, p=probs)
        X = np.empty((n, 2))
        for j in np.unique(which):
            rows = np.flatnonzero(which == j)
            if j == 2 * self.depth:
                X[rows] = self.atom
            elif j < self.depth:
                c, s = self.corner[j], self.side[j]
                X[rows] = c - s + s * rng.random((len(rows), 2))
            else:
                i = j - self.depth
                c, s2 = self.corner[i], self.side2[i]
                if self.role == "Q":
                    X[rows] = c + s2 * rng.random((len(rows), 2))
                else:
                    X[rows] = c + s2 * PowerMeasure(2, 0, self.nu).sample(len(rows), rng)
        return X


# -- problem specifications -------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    dim: int = 5
    singular_dim: int = 0
    strength: float = 5.0
    eta_kind: str = SINE
    eta_value: float = 0.5
    family: str = SINGULAR_POWER

    def __post_init__(self):
        if self.family not in (SINGULAR_POWER, ONE_D, PATHOLOGICAL):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == ONE_D and self.dim != 1:
            raise ValueError("oneDExample requires dim = 1")
        if self.family == PATHOLOGICAL and self.dim != 2:
            raise ValueError("pathological family requires dim = 2")
        if self.dim < 1 or not 0 <= self.singular_dim < self.dim:
            raise ValueError("singular_dim must lie in 0..dim-1")
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")
        if self.eta_kind not in (SINE, LINEAR_1D, CONSTANT):
            raise ValueError(f"unknown eta kind {self.eta_kind!r}")
        if self.eta_kind == LINEAR_1D and self.dim != 1:
            raise ValueError("linear1D regression function requires dim = 1")
        if self.eta_kind == CONSTANT and not 0 <= self.eta_value <= 1:
            raise ValueError("constant eta must lie in [0, 1]")

    @classmethod
    def singular_power(cls, singular_dim: int = 0, strength: float = 5.0, dim: int = 5) -> "SyntheticSpec":
        return cls(dim, singular_dim, strength, SINE, 0.5, SINGULAR_POWER)

    @classmethod
    def one_d(cls, strength: float = 3.0) -> "SyntheticSpec":
        return cls(1, 0, strength, LINEAR_1D, 0.5, ONE_D)

    @classmethod
    def pathological(cls, strength: float = 2.0) -> "SyntheticSpec":
        return cls(2, 0, strength, SINE, 0.5, PATHOLOGICAL)


def source_measure(spec: SyntheticSpec) -> Measure:
    if spec.family == PATHOLOGICAL:
        return PathologicalMeasure("P", spec.strength)
    return PowerMeasure(spec.dim, spec.singular_dim, spec.strength)


def target_measure(spec: SyntheticSpec) -> Measure:
    if spec.family == PATHOLOGICAL:
        return PathologicalMeasure("Q", spec.strength)
    return UniformMeasure(spec.dim)


def eta_true(spec: SyntheticSpec, x):
    """Regression function; scalar in, scalar out; (n, d) in, (n,) out."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1 and (spec.dim > 1 or X.size == 1)
    X = X.reshape(-1, spec.dim)
    if spec.eta_kind == SINE:
        val = 0.5 * (1.0 + np.sin(np.pi * np.abs(X).sum(axis=1)))
    elif spec.eta_kind == LINEAR_1D:
        val = X[:, 0].copy()
    else:
        val = np.full(len(X), float(spec.eta_value))
    val = np.clip(val, 0.0, 1.0)
    return float(val[0]) if single else val


def sample_synthetic(spec: SyntheticSpec, role: str, n: int, seed) -> Dataset:
    """Draw ``n`` labeled points from the source (origin P) or target (origin Q)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if role not in ("source", "target"):
        raise ValueError("role must be 'source' or 'target'")
    rng = np.random.default_rng(seed)
    measure = source_measure(spec) if role == "source" else target_measure(spec)
    X = measure.sample(n, rng) if n else np.zeros((0, spec.dim))
    y = (rng.random(n) < eta_true(spec, X)).astype(np.int64) if n else np.zeros(0, np.int64)
    origin = np.full(n, 1 if role == "source" else TARGET, dtype=np.int64)
    return Dataset(X, y, origin)


def bayes_risk_mc(spec: SyntheticSpec, n_mc: int = 10 ** 6, seed=0) -> float:
    """Monte Carlo ``E_Q min(eta, 1 - eta)``."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = np.random.default_rng(seed)
    eta = eta_true(spec, target_measure(spec).sample(n_mc, rng))
    return float(np.minimum(eta, 1.0 - eta).mean())


def excess_risk_mc(classifier, spec: SyntheticSpec, n_mc: int = 10 ** 5, seed=0) -> float:
    """Monte Carlo ``2 E_Q |eta - 1/2| 1{f != f*}`` for a batch classifier ``X -> labels``."""
    rng = np.random.default_rng(seed)
    X = target_measure(spec).sample(n_mc, rng)
    return excess_risk_at(classifier(X), spec, X)


def excess_risk_at(predictions, spec: SyntheticSpec, X) -> float:
    eta = eta_true(spec, np.asarray(X).reshape(-1, spec.dim))
    bayes = (eta >= 0.5).astype(np.int64)
    predictions = np.asarray(predictions).reshape(-1)
    if len(predictions) != len(eta):
        raise ValueError("predictions and points differ in length")
    wrong = predictions != bayes
    return float(np.mean(2.0 * np.abs(eta - 0.5) * wrong))
