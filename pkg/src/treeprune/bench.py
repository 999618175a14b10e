"""Experiment harness: methods x sample-size grid x repetitions.

Every (grid point, repetition) job derives its own seed from
``(seed, grid_index, rep_index)``, so results do not depend on execution
order or on the number of workers.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import TARGET, DataError, Dataset, SplitRule, load_dataset, normalize_features, \
    split_off, stack, subsample, threshold_split
from .dyadic_tree import CYCLICAL, build_index, tree_levels
from .ici import IciConfig, ici_predict_batch
from .model_select import CV, FCV, IWCV, SN, SNQ, auto_ratio_level, estimate_density_ratio, \
    level_cv, make_folds, sn_prune, tune_sn_constant
from .synth import SyntheticSpec, excess_risk_at, sample_synthetic

AD = "AD"
ORACLE_LEVEL = "ORACLE_LEVEL"
METHODS = (AD, CV, FCV, IWCV, SN, SNQ, ORACLE_LEVEL)
CSV_COLUMNS = ("method", "nP", "nQ", "rep", "risk", "excess", "wall_ms", "selected_level")


@dataclass(frozen=True)
class BenchConfig:
    spec: SyntheticSpec | None = None
    csv_path: str | None = None
    split_rule: SplitRule | None = None
    label_column: str = "label"
    origin_column: str | None = None
    methods: tuple[str, ...] = (AD, CV)
    grid: tuple[tuple[int, int], ...] = ((1000, 100),)
    repetitions: int = 10
    test_size: int = 5000
    seed: int = 0
    ici: IciConfig = field(default_factory=IciConfig)
    kind: str = CYCLICAL
    fold_count: int = 2
    output_dir: str = "results"
    timing: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.grid:
            raise ValueError("grid must be non-empty")
        if not self.methods:
            raise ValueError("methods must be non-empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
        if (self.spec is None) == (self.csv_path is None):
            raise ValueError("exactly one of spec and csv_path must be given")
        if self.csv_path is not None and self.split_rule is None and self.origin_column is None:
            raise ValueError("a CSV data source needs a split rule or an origin column")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")
        if any(n_p < 0 or n_q < 0 or n_p + n_q == 0 for n_p, n_q in self.grid):
            raise ValueError("grid sizes must be nonnegative and not both zero")


@dataclass(frozen=True)
class BenchRow:
    method: str
    n_p: int
    n_q: int
    rep: int
    risk: float
    excess: float | None = None
    wall_ms: float = 0.0
    selected_level: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.risk <= 1.0:
            raise ValueError("risk must lie in [0, 1]")


@dataclass
class BenchResult:
    rows: list[BenchRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def summary(self, x: str = "nP") -> dict[tuple[str, int], tuple[float, float, int]]:
        """(method, x value) -> (mean risk, standard error, count)."""
        groups: dict[tuple[str, int], list[float]] = {}
        for r in self.rows:
            groups.setdefault((r.method, r.n_p if x == "nP" else r.n_q), []).append(r.risk)
        out = {}
        for key, vals in groups.items():
            v = np.asarray(vals)
            se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
            out[key] = (float(v.mean()), se, len(v))
        return out


def empirical_risk(predictions, truth) -> float:
    p, t = np.asarray(predictions).reshape(-1), np.asarray(truth).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} labels")
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.mean(p != t))


# -- methods ----------------------------------------------------------------

def _unlabeled(X: np.ndarray, origin: int) -> Dataset:
    return Dataset(X, np.zeros(len(X), np.int64), np.full(len(X), origin, np.int64))


def fit_predict(method: str, train: Dataset, test: Dataset, cfg: BenchConfig, seed: int):
    """Fit ``method`` on ``train`` and label ``test.X``; returns (labels, level or None)."""
    n_p, n_q = train.n_source, train.n_target
    levels = tree_levels(n_p, n_q, train.dim, cfg.kind)
    deepest = levels[-1]
    if method == AD:
        index = build_index(train, deepest, cfg.kind)
        return ici_predict_batch(index, test.X, cfg.ici), None
    if method in (CV, FCV, IWCV):
        folds = make_folds(train, cfg.fold_count, seed)
        ratio = None
        if method == IWCV:
            src = train.source()
            # every available target feature vector, labeled or not
            tgt = stack([train.target(), _unlabeled(test.X, TARGET)])
            ratio = estimate_density_ratio(src, tgt, auto_ratio_level(src, tgt, cfg.kind), kind=cfg.kind)
        sel = level_cv(train, folds, method, ratio, levels, cfg.kind)
        index = build_index(train, sel.level, cfg.kind)
        return index.predict_level(test.X, sel.level), sel.level
    if method in (SN, SNQ):
        sel = tune_sn_constant(train, method, deepest, cfg.kind, fold_count=cfg.fold_count, seed=seed)
        index = build_index(train, deepest, cfg.kind)
        return sn_prune(index, sel.selected, method).predict(test.X), None
    if method == ORACLE_LEVEL:
        index = build_index(train, deepest, cfg.kind)
        risks = [empirical_risk(index.predict_level(test.X, l), test.y) for l in levels]
        best = int(np.argmin(risks))
        return index.predict_level(test.X, levels[best]), levels[best]
    raise ValueError(f"unknown method {method!r}")


# -- jobs -------------------------------------------------------------------

def _job_seeds(seed: int, g: int, r: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([seed, g, r]).generate_state(4)]


def _load_pool(cfg: BenchConfig) -> tuple[Dataset, Dataset]:
    """Normalized CSV pool and its reserved target test split."""
    data = load_dataset(cfg.csv_path, cfg.label_column, cfg.origin_column)
    data = normalize_features(data)
    if cfg.origin_column is None:
        src, tgt = threshold_split(data, cfg.split_rule, cfg.seed)
        data = Dataset.from_parts(src, tgt)
    return split_off(data, cfg.test_size, cfg.seed, TARGET)


def _run_job(cfg: BenchConfig, g: int, r: int, pool=None) -> list[BenchRow]:
    n_p, n_q = cfg.grid[g]
    s_src, s_tgt, s_test, s_fit = _job_seeds(cfg.seed, g, r)
    if cfg.spec is not None:
        train = Dataset.from_parts(sample_synthetic(cfg.spec, "source", n_p, s_src),
                                   sample_synthetic(cfg.spec, "target", n_q, s_tgt))
        test = sample_synthetic(cfg.spec, "target", cfg.test_size, s_test)
    else:
        rest, test = pool
        train = subsample(rest, n_q, n_p, s_src)
    rows = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        pred, level = fit_predict(method, train, test, cfg, s_fit)
        wall = (time.perf_counter() - t0) * 1000.0 if cfg.timing else 0.0
        excess = excess_risk_at(pred, cfg.spec, test.X) if cfg.spec is not None else None
        rows.append(BenchRow(method, n_p, n_q, r, empirical_risk(pred, test.y), excess, wall, level))
    return rows


def _run_job_args(args):
    return _run_job(*args)


def run_benchmark(cfg: BenchConfig) -> BenchResult:
    pool = _load_pool(cfg) if cfg.csv_path is not None else None
    jobs = [(cfg, g, r, pool) for g in range(len(cfg.grid)) for r in range(cfg.repetitions)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            chunks = list(ex.map(_run_job_args, jobs))
    else:
        chunks = [_run_job_args(j) for j in jobs]
    # canonical order: grid point, repetition, method as configured
    return BenchResult([row for chunk in chunks for row in chunk])


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(result: BenchResult, path) -> None:
    if not result.rows:
        raise ValueError("cannot write an empty benchmark result")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in result.rows:
            w.writerow([r.method, r.n_p, r.n_q, r.rep, _fmt(float(r.risk)),
                        _fmt(None if r.excess is None else float(r.excess)),
                        _fmt(float(r.wall_ms)), _fmt(r.selected_level)])


def read_csv(path) -> BenchResult:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for d in csv.DictReader(fh):
            rows.append(BenchRow(d["method"], int(d["nP"]), int(d["nQ"]), int(d["rep"]), float(d["risk"]),
                                 float(d["excess"]) if d["excess"] else None, float(d["wall_ms"]),
                                 int(d["selected_level"]) if d["selected_level"] else None))
    return BenchResult(rows)


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def emit_plot(result: BenchResult, path, x: str = "nP", title: str = "") -> None:
    """Mean target risk against ``x`` with +/- 1 standard-error bars, one curve per method."""
    if x not in ("nP", "nQ"):
        raise ValueError("x must be 'nP' or 'nQ'")
    summ = result.summary(x)
    methods = list(dict.fromkeys(r.method for r in result.rows))
    if not methods:
        raise ValueError("nothing to plot")
    W, H, L, R, T, B = 640, 420, 70, 150, 40, 60
    xs = sorted({k[1] for k in summ})
    lo = min(m - s for m, s, _ in summ.values())
    hi = max(m + s for m, s, _ in summ.values())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.01, hi + 0.01
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    logx = len(xs) > 1 and xs[0] > 0 and xs[-1] / xs[0] >= 8
    tx = (lambda v: math.log(v)) if logx else float
    x0, x1 = tx(xs[0]), tx(xs[-1])
    span = (x1 - x0) or 1.0

    def px(v):
        return L + (tx(v) - x0) / span * (W - L - R) if len(xs) > 1 else L + (W - L - R) / 2

    def py(v):
        return T + (hi - v) / (hi - lo) * (H - T - B)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    for v in xs:
        out.append(f'<text x="{px(v):.1f}" y="{H - B + 18}" font-size="11" text-anchor="middle">{v}</text>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        out.append(f'<text x="{L - 6}" y="{py(v) + 4:.1f}" font-size="11" text-anchor="end">{v:.3f}</text>')
    out.append(f'<text x="{(L + W - R) / 2}" y="{H - 15}" font-size="13" text-anchor="middle">{x}</text>')
    out.append(f'<text x="18" y="{(T + H - B) / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 18 {(T + H - B) / 2})">target risk</text>')
    if title:
        out.append(f'<text x="{W / 2}" y="22" font-size="14" text-anchor="middle">{title}</text>')
    for i, m in enumerate(methods):
        color = _COLORS[i % len(_COLORS)]
        pts = [(v, *summ[(m, v)][:2]) for v in xs if (m, v) in summ]
        coords = " ".join(f"{px(v):.1f},{py(mu):.1f}" for v, mu, _ in pts)
        out.append(f'<polyline class="curve" data-method="{m}" points="{coords}" fill="none" '
                   f'stroke="{color}" stroke-width="2"/>')
        for v, mu, se in pts:
            out.append(f'<line class="errbar" x1="{px(v):.1f}" y1="{py(mu - se):.1f}" x2="{px(v):.1f}" '
                       f'y2="{py(mu + se):.1f}" stroke="{color}"/>')
        ly = T + 10 + 20 * i
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{W - R + 36}" y="{ly + 4}" font-size="12">{m}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# -- config files -----------------------------------------------------------

def _parse_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_grid(v: str) -> tuple[tuple[int, int], ...]:
    pairs = []
    for item in v.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        a, sep, b = item.partition(":")
        if not sep:
            raise ValueError(f"grid entries look like nP:nQ, got {item!r}")
        pairs.append((int(a), int(b)))
    return tuple(pairs)


def _parse_list(v: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in v.split(",") if s.strip())


def _parse_width(v: str):
    return v.strip() if v.strip() == "theoretical" else float(v)


# key -> (parser, help). Flat ``key = value`` lines; '#' starts a comment.
CONFIG_KEYS = {
    "family": (str, "synthetic family: singularPower, oneDExample or pathological"),
    "dim": (int, "feature dimension of the synthetic spec"),
    "singular_dim": (int, "k, dimension of the singular set of the source density"),
    "strength": (float, "nu, exponent of the source density"),
    "eta_kind": (str, "regression function: sine, linear1D or constant"),
    "eta_value": (float, "value of a constant regression function"),
    "csv": (str, "labeled CSV data source instead of a synthetic spec"),
    "label_column": (str, "label column of the CSV"),
    "origin_column": (str, "origin column (P/Q) of the CSV, if pre-split"),
    "split_features": (lambda v: tuple(int(i) for i in _parse_list(v)), "feature indices of the split rule"),
    "split_threshold": (float, "threshold of the split rule"),
    "split_accept": (float, "keep probability of the split rule"),
    "methods": (_parse_list, "comma list from AD,CV,FCV,IWCV,SN,SNQ,ORACLE_LEVEL"),
    "grid": (_parse_grid, "comma list of nP:nQ pairs"),
    "repetitions": (int, "repetitions per grid point"),
    "test_size": (int, "target test-set size"),
    "seed": (int, "master seed"),
    "width_constant": (_parse_width, "ICI width constant C, or 'theoretical'"),
    "start_level": (int, "ICI starting level"),
    "cap_level": (int, "ICI coarsest level"),
    "kind": (str, "tree kind: regular or cyclical"),
    "fold_count": (int, "cross-validation folds"),
    "output_dir": (str, "directory for CSV and SVG output"),
    "timing": (_parse_bool, "record wall time (false writes 0 for reproducible files)"),
    "workers": (int, "parallel worker processes"),
}


def read_config_file(path) -> dict[str, str]:
    """Raw ``key = value`` pairs of a config file."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: expected one of the known 'key = value' settings")
        out[key] = value.strip()
    return out


def config_from_mapping(raw: dict[str, str]) -> BenchConfig:
    """Build a BenchConfig from raw string settings (unknown keys are an error)."""
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    v = {k: CONFIG_KEYS[k][0](s) for k, s in raw.items() if s is not None and s != ""}
    spec = None
    if "csv" not in v:
        base = SyntheticSpec()
        spec = SyntheticSpec(
            dim=v.get("dim", 1 if v.get("family") == "oneDExample" else 2 if v.get("family") == "pathological"
                      else base.dim),
            singular_dim=v.get("singular_dim", 0),
            strength=v.get("strength", base.strength),
            eta_kind=v.get("eta_kind", "linear1D" if v.get("family") == "oneDExample" else base.eta_kind),
            eta_value=v.get("eta_value", base.eta_value),
            family=v.get("family", base.family))
    rule = None
    if "split_features" in v:
        rule = SplitRule(v["split_features"], v.get("split_threshold", 0.3), v.get("split_accept", 0.95))
    ici = IciConfig(v.get("width_constant", 0.25), v.get("start_level"), v.get("cap_level"))
    kw = {k: v[k] for k in ("methods", "grid", "repetitions", "test_size", "seed", "kind",
                             "fold_count", "output_dir", "timing", "workers", "label_column",
                             "origin_column") if k in v}
    return BenchConfig(spec=spec, csv_path=v.get("csv"), split_rule=rule, ici=ici, **kw)
