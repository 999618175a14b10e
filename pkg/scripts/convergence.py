"""Excess risk against source sample size on the 1-d example, for AD and level CV.

    python3 scripts/convergence.py --sizes 256 1024 4096 --reps 10
"""
import argparse
from pathlib import Path

from treeprune.bench import AD, BenchConfig, emit_csv, emit_plot, run_benchmark
from treeprune.dyadic_tree import REGULAR
from treeprune.model_select import FCV
from treeprune.synth import SyntheticSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--n-target", type=int, default=20)
    ap.add_argument("--strength", type=float, default=3.0)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--out", default="results/convergence")
    args = ap.parse_args()

    cfg = BenchConfig(spec=SyntheticSpec.one_d(args.strength), methods=(AD, FCV),
                      grid=tuple((n, args.n_target) for n in args.sizes), repetitions=args.reps,
                      kind=REGULAR, timing=False)
    res = run_benchmark(cfg)
    excess = {}
    for r in res.rows:
        excess.setdefault((r.method, r.n_p), []).append(r.excess)
    for (m, n), v in sorted(excess.items()):
        print(f"{m:>4} nP={n:<6} excess={sum(v) / len(v):.4f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(res, out / "convergence.csv")
    emit_plot(res, out / "convergence.svg", title="1-d example: target risk vs nP")
    print(f"wrote results to {out}")


if __name__ == "__main__":
    main()
