"""Command-line entry point: gen, split, fit, bench, exponent.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench
from .core import DataError, Dataset, SplitRule, load_dataset, normalize_features, save_dataset, \
    threshold_split
from .dyadic_tree import CYCLICAL, REGULAR, build_index, tree_levels
from .exponent import DEFAULT_RADII, lambda_curve, lambda_dyadic_ambient, \
    lambda_occupied_cells, phi_curve
from .ici import IciConfig, dump_traces, ici_classify
from .synth import SyntheticSpec, sample_synthetic, source_measure, target_measure

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_spec_args(p):
    g = p.add_argument_group("synthetic spec")
    g.add_argument("--family", default="singularPower", choices=["singularPower", "oneDExample", "pathological"])
    g.add_argument("--dim", type=int)
    g.add_argument("--singular-dim", type=int, default=0)
    g.add_argument("--strength", type=float, default=5.0)
    g.add_argument("--eta-kind", choices=["sine", "linear1D", "constant"])
    g.add_argument("--eta-value", type=float, default=0.5)


def _spec(args) -> SyntheticSpec:
    dim = args.dim or {"oneDExample": 1, "pathological": 2}.get(args.family, 5)
    eta = args.eta_kind or ("linear1D" if args.family == "oneDExample" else "sine")
    try:
        return SyntheticSpec(dim, args.singular_dim, args.strength, eta, args.eta_value, args.family)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load(path, label_column):
    """Load a CSV, treating an ``origin`` column (as written by gen/split) as origin tags."""
    try:
        with open(path, encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().split(",")]
    except OSError:
        header = []
    return load_dataset(path, label_column, "origin" if "origin" in header else None)


def _ici_args(p):
    p.add_argument("--width-constant", default="0.25", help="ICI constant C, or 'theoretical'")
    p.add_argument("--start-level", type=int)
    p.add_argument("--cap-level", type=int)


def _ici(args) -> IciConfig:
    w = args.width_constant
    try:
        return IciConfig(w if w == "theoretical" else float(w), args.start_level, args.cap_level)
    except ValueError as e:
        raise UsageError(str(e)) from None


# -- subcommands ------------------------------------------------------------

def cmd_gen(args):
    spec = _spec(args)
    if args.n_source < 0 or args.n_target < 0:
        raise UsageError("sample sizes must be nonnegative")
    ss = np.random.SeedSequence(args.seed).generate_state(2)
    data = Dataset.from_parts(sample_synthetic(spec, "source", args.n_source, int(ss[0])),
                              sample_synthetic(spec, "target", args.n_target, int(ss[1])))
    save_dataset(data, args.out)
    print(f"wrote {len(data)} rows to {args.out}")


def cmd_split(args):
    data = _load(args.csv, args.label_column)
    if args.normalize:
        data = normalize_features(data)
    try:
        rule = SplitRule(tuple(args.features), args.threshold, args.accept)
    except ValueError as e:
        raise UsageError(str(e)) from None
    src, tgt = threshold_split(data, rule, args.seed)
    save_dataset(src, args.source_out)
    save_dataset(tgt, args.target_out)
    print(f"source {len(src)} rows -> {args.source_out}; target {len(tgt)} rows -> {args.target_out}")


def cmd_fit(args):
    train = load_dataset(args.train, args.label_column, args.origin_column)
    test = _load(args.test, args.label_column)
    if train.dim != test.dim:
        raise DataError("train and test dimensions differ")
    cfg = bench.BenchConfig(spec=SyntheticSpec(), methods=(args.method,), ici=_ici(args),
                            kind=args.kind, fold_count=args.fold_count, seed=args.seed)
    pred, level = bench.fit_predict(args.method, train, test, cfg, args.seed)
    risk = bench.empirical_risk(pred, test.y)
    line = f"method={args.method} test_risk={risk:.6f}"
    if level is not None:
        line += f" selected_level={level}"
    print(line)
    if args.trace:
        deepest = tree_levels(train.n_source, train.n_target, train.dim, args.kind)[-1]
        index = build_index(train, max(deepest, args.start_level or 0), args.kind)
        dump_traces([ici_classify(index, x, cfg.ici) for x in test.X], args.trace)
    if args.predictions:
        np.savetxt(args.predictions, pred, fmt="%d")


def cmd_bench(args):
    raw = bench.read_config_file(args.config) if args.config else {}
    for key in bench.CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    try:
        cfg = bench.config_from_mapping(raw)
    except ValueError as e:
        raise UsageError(str(e)) from None
    result = bench.run_benchmark(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bench.emit_csv(result, out / "bench.csv")
    bench.emit_plot(result, out / "bench.svg", x=args.x)
    for (method, xv), (mu, se, k) in sorted(result.summary(args.x).items()):
        print(f"{method:>12} {args.x}={xv:<7} risk={mu:.4f} +/- {se:.4f} (n={k})")
    print(f"wrote {out / 'bench.csv'} and {out / 'bench.svg'}")


def cmd_exponent(args):
    if (args.source is None) != (args.target is None):
        raise UsageError("--source and --target go together")
    if args.source is not None:
        src = _load(args.source, args.label_column)
        tgt = _load(args.target, args.label_column)
        if args.estimator == "ambient":
            raise UsageError("the ambient dyadic sum needs analytic measures (use a synthetic spec)")
    else:
        spec = _spec(args)
        src, tgt = source_measure(spec), target_measure(spec)
    if args.estimator == "phi":
        radii = [2.0 ** -k for k in args.levels] if args.levels else DEFAULT_RADII
        curve = phi_curve(src, tgt, radii, args.n_mc, args.seed)
    else:
        fn = lambda_occupied_cells if args.estimator == "occupied" else lambda_dyadic_ambient
        curve = lambda_curve(fn, src, tgt, args.levels or range(3, 9))
    if args.out:
        curve.write_csv(args.out, "phi" if args.estimator == "phi" else "lambda")
    print(curve.summary())


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="treeprune", description="Adaptive dyadic-tree classification under covariate shift.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="sample a synthetic source/target dataset to CSV")
    _add_spec_args(g)
    g.add_argument("--n-source", type=int, default=1000)
    g.add_argument("--n-target", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("split", help="split a labeled CSV into source and target by a feature threshold")
    s.add_argument("csv")
    s.add_argument("--features", type=int, nargs="+", required=True)
    s.add_argument("--threshold", type=float, default=0.3)
    s.add_argument("--accept", type=float, default=0.95)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--label-column", default="label")
    s.add_argument("--normalize", action="store_true", help="min-max scale features before splitting")
    s.add_argument("--source-out", required=True)
    s.add_argument("--target-out", required=True)
    s.set_defaults(func=cmd_split)

    f = sub.add_parser("fit", help="train one method and print its test risk")
    f.add_argument("--train", required=True, help="CSV with an origin column (P/Q)")
    f.add_argument("--test", required=True, help="labeled target CSV")
    f.add_argument("--method", default="AD", choices=list(bench.METHODS))
    f.add_argument("--kind", default=CYCLICAL, choices=[REGULAR, CYCLICAL])
    f.add_argument("--fold-count", type=int, default=2)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--label-column", default="label")
    f.add_argument("--origin-column", default="origin")
    f.add_argument("--trace", help="write per-point ICI traces to this CSV")
    f.add_argument("--predictions", help="write predicted labels, one per line")
    _ici_args(f)
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bench", help="run a benchmark from a config file; writes CSV and SVG")
    b.add_argument("--config", help="flat 'key = value' config file")
    b.add_argument("--x", default="nP", choices=["nP", "nQ"], help="x axis of the plot")
    for key, (_, helptext) in bench.CONFIG_KEYS.items():
        b.add_argument("--" + key.replace("_", "-"), dest=key, help=helptext)
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("exponent", help="estimate a transfer-exponent curve and its slope")
    _add_spec_args(e)
    e.add_argument("--source", help="source CSV (empirical mode)")
    e.add_argument("--target", help="target CSV (empirical mode)")
    e.add_argument("--label-column", default="label")
    e.add_argument("--estimator", default="phi", choices=["phi", "occupied", "ambient"])
    e.add_argument("--levels", type=int, nargs="+", help="levels k (radius 2^-k)")
    e.add_argument("--n-mc", type=int, default=1 << 14)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="curve CSV")
    e.set_defaults(func=cmd_exponent)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # --help or a usage error already reported by argparse
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except UsageError as e:
        print(f"treeprune: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError) as e:
        print(f"treeprune: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
