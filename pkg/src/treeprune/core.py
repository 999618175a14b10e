"""Labeled samples, CSV ingestion and the source/target split protocols."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

TARGET = 0  # origin tag of target samples; sources are tagged 1..k


class DataError(ValueError):
    """Raised for malformed or insufficient input data."""


def origin_name(origin: int) -> str:
    if origin == TARGET:
        return "Q"
    return "P" if origin == 1 else f"P{origin}"


def parse_origin(value: str) -> int:
    v = value.strip()
    if v == "Q":
        return TARGET
    if v == "P":
        return 1
    if v.startswith("P") and v[1:].isdigit() and int(v[1:]) >= 1:
        return int(v[1:])
    raise DataError(f"unknown origin tag {value!r} (expected Q, P or P1..Pk)")


@dataclass(frozen=True)
class LabeledSample:
    features: tuple[float, ...]
    label: int
    origin: int = TARGET

    @property
    def is_target(self) -> bool:
        return self.origin == TARGET


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Pooled sample stored column-wise.

    ``X`` is (n, D), ``y`` holds 0/1 labels and ``origin`` the per-row tag
    (0 = target, j >= 1 = source j). Arrays are read-only after construction.
    """

    X: np.ndarray
    y: np.ndarray
    origin: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        y = np.array(self.y, dtype=np.int64, copy=True).reshape(-1)
        origin = np.array(self.origin, dtype=np.int64, copy=True).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or y.shape[0] != origin.shape[0]:
            raise DataError("features, labels and origins must have matching lengths")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if origin.size and origin.min() < 0:
            raise DataError("origin tags must be nonnegative")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match dimension")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "origin", _frozen(origin))
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_parts(cls, source: "Dataset | None", target: "Dataset | None") -> "Dataset":
        """Pool a source and a target sample, retagging them P (1) and Q (0)."""
        parts = [d for d in (source, target) if d is not None and len(d)]
        if not parts:
            ref = source if source is not None else target
            dim = ref.dim if ref is not None else 0
            return cls(np.zeros((0, dim)), [], [])
        X = np.vstack([d.X for d in parts])
        y = np.concatenate([d.y for d in parts])
        tags = []
        if source is not None and len(source):
            tags.append(np.where(source.origin == TARGET, 1, source.origin))
        if target is not None and len(target):
            tags.append(np.zeros(len(target), dtype=np.int64))
        return cls(X, y, np.concatenate(tags), parts[0].feature_names)

    def __len__(self) -> int:
        return self.y.shape[0]

    def __iter__(self) -> Iterator[LabeledSample]:
        for x, yy, o in zip(self.X, self.y, self.origin):
            yield LabeledSample(tuple(float(v) for v in x), int(yy), int(o))

    @property
    def samples(self) -> list[LabeledSample]:
        return list(self)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def counts(self) -> dict[int, int]:
        tags, cnt = np.unique(self.origin, return_counts=True)
        return {int(t): int(c) for t, c in zip(tags, cnt)}

    @property
    def n_target(self) -> int:
        return int(np.count_nonzero(self.origin == TARGET))

    @property
    def n_source(self) -> int:
        return int(np.count_nonzero(self.origin != TARGET))

    @property
    def is_source(self) -> np.ndarray:
        return self.origin != TARGET

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.origin[idx], self.feature_names)

    def target(self) -> "Dataset":
        return self.take(np.flatnonzero(self.origin == TARGET))

    def source(self) -> "Dataset":
        return self.take(np.flatnonzero(self.origin != TARGET))


@dataclass(frozen=True)
class SplitRule:
    """Rows whose listed features all exceed ``threshold`` are target candidates."""

    feature_indices: tuple[int, ...]
    threshold: float = 0.3
    accept_prob: float = 0.95

    def __post_init__(self):
        idx = tuple(int(i) for i in self.feature_indices)
        if len(set(idx)) != len(idx):
            raise ValueError("feature indices must be distinct")
        if any(i < 0 for i in idx):
            raise ValueError("feature indices must be nonnegative")
        if not 0.0 <= self.accept_prob <= 1.0:
            raise ValueError("accept_prob must lie in [0, 1]")
        object.__setattr__(self, "feature_indices", idx)

    def predicate(self, X: np.ndarray) -> np.ndarray:
        return np.all(X[:, list(self.feature_indices)] > self.threshold, axis=1)


def load_dataset(path, label_column: str = "label", origin_column: str | None = None) -> Dataset:
    """Read a headered CSV. Every column other than label/origin is a feature."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DataError(f"{path}: no label column {label_column!r}")
    if origin_column is not None and origin_column not in header:
        raise DataError(f"{path}: no origin column {origin_column!r}")
    li = header.index(label_column)
    oi = header.index(origin_column) if origin_column is not None else None
    fcols = [j for j in range(len(header)) if j not in (li, oi)]

    X = np.empty((len(rows) - 1, len(fcols)))
    raw_labels, origins = [], []
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} fields, expected {len(header)}")
        for c, j in enumerate(fcols):
            try:
                X[r, c] = float(row[j])
            except ValueError:
                raise DataError(f"{path}: non-numeric feature {row[j]!r} in row {r + 2}") from None
        raw_labels.append(row[li].strip())
        origins.append(parse_origin(row[oi]) if oi is not None else TARGET)

    values = sorted(set(raw_labels))
    if len(values) > 2:
        raise DataError(f"{path}: label column has more than two values: {values[:5]}")
    if set(values) <= {"0", "1"}:
        y = [int(v) for v in raw_labels]
    elif set(values) <= {"0.0", "1.0", "0", "1"}:
        y = [int(float(v)) for v in raw_labels]
    else:
        code = {v: i for i, v in enumerate(values)}
        y = [code[v] for v in raw_labels]
    return Dataset(X, y, origins, tuple(header[j] for j in fcols))


def save_dataset(data: Dataset, path, label_column: str = "label", origin_column: str | None = "origin") -> None:
    """Write features, label and (unless ``origin_column`` is None) origin tags."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        tail = [origin_column] if origin_column is not None else []
        w.writerow([*data.feature_names, label_column, *tail])
        for x, yy, o in zip(data.X, data.y, data.origin):
            tag = [origin_name(int(o))] if origin_column is not None else []
            w.writerow([*(repr(float(v)) for v in x), int(yy), *tag])


def normalize_features(data: Dataset) -> Dataset:
    """Min-max scale each coordinate to [0, 1] using pooled extremes.

    Constant coordinates map to 0.
    """
    if len(data) == 0:
        raise DataError("cannot normalize an empty dataset")
    lo = data.X.min(axis=0)
    span = data.X.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    Xn = np.where(span > 0, (data.X - lo) / safe, 0.0)
    return Dataset(np.clip(Xn, 0.0, 1.0), data.y, data.origin, data.feature_names)


def threshold_split(data: Dataset, rule: SplitRule, seed: int) -> tuple[Dataset, Dataset]:
    """Threshold-based covariate-shift split of one labeled pool.

    Candidate-target rows are kept as target with probability ``accept_prob``;
    the others are kept as source with the same probability. Rows failing the
    coin are discarded. Returns ``(source, target)``.
    """
    if any(i >= data.dim for i in rule.feature_indices):
        raise DataError(f"split feature index out of range for dimension {data.dim}")
    rng = np.random.default_rng(seed)
    keep = rng.random(len(data)) < rule.accept_prob
    cand = rule.predicate(data.X)
    src = data.take(np.flatnonzero(~cand & keep))
    tgt = data.take(np.flatnonzero(cand & keep))
    src = Dataset(src.X, src.y, np.ones(len(src), dtype=np.int64), data.feature_names)
    tgt = Dataset(tgt.X, tgt.y, np.zeros(len(tgt), dtype=np.int64), data.feature_names)
    return src, tgt


def subsample(data: Dataset, n_target: int, n_source: int, seed: int) -> Dataset:
    """Uniform draw without replacement: ``n_target`` target rows and
    ``n_source`` rows pooled over all sources."""
    tgt = np.flatnonzero(data.origin == TARGET)
    src = np.flatnonzero(data.origin != TARGET)
    if n_target < 0 or n_source < 0:
        raise DataError("requested counts must be nonnegative")
    if n_target > tgt.size:
        raise DataError(f"insufficient target samples: requested {n_target}, have {tgt.size}")
    if n_source > src.size:
        raise DataError(f"insufficient source samples: requested {n_source}, have {src.size}")
    rng = np.random.default_rng(seed)
    pick = np.concatenate([
        rng.choice(src, size=n_source, replace=False),
        rng.choice(tgt, size=n_target, replace=False),
    ]).astype(np.int64)
    return data.take(pick)


def split_off(data: Dataset, n: int, seed: int, origin: int = TARGET) -> tuple[Dataset, Dataset]:
    """Reserve ``n`` rows of one origin as a held-out set; returns (rest, held)."""
    idx = np.flatnonzero(data.origin == origin)
    if n > idx.size:
        raise DataError(f"cannot reserve {n} rows of origin {origin_name(origin)}, have {idx.size}")
    rng = np.random.default_rng(seed)
    held = np.sort(rng.choice(idx, size=n, replace=False))
    mask = np.ones(len(data), dtype=bool)
    mask[held] = False
    return data.take(np.flatnonzero(mask)), data.take(held)


def stack(datasets: Sequence[Dataset]) -> Dataset:
    ds = [d for d in datasets if len(d)]
    if not ds:
        return datasets[0]
    return Dataset(np.vstack([d.X for d in ds]), np.concatenate([d.y for d in ds]),
                   np.concatenate([d.origin for d in ds]), ds[0].feature_names)
