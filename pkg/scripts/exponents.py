"""Transfer-exponent curves for the power-law source family and the non-doubling pair.

For p proportional to ||x||^nu against a uniform target the integrated and
occupied-cell estimates should grow like r^-max(nu, d). On the planar
non-doubling pair the ambient dyadic sum grows much faster than the
grid-based estimates.

    python3 scripts/exponents.py --out results/exponents
"""
import argparse
from pathlib import Path

from treeprune.exponent import lambda_curve, lambda_dyadic_ambient, lambda_occupied_cells, phi_curve
from treeprune.synth import PathologicalMeasure, PowerMeasure, UniformMeasure


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-mc", type=int, default=1 << 16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/exponents")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for d, nu in [(1, 3.0), (2, 1.0), (2, 3.0)]:
        P, Q = PowerMeasure(d, 0, nu), UniformMeasure(d)
        phi = phi_curve(P, Q, n_mc=args.n_mc, seed=args.seed)
        phi.write_csv(out / f"phi_d{d}_nu{nu:g}.csv", "phi")
        line = f"d={d} nu={nu:g} expected {max(nu, d):g}: phi {phi.summary()}"
        occ = lambda_curve(lambda_occupied_cells, P, Q, range(3, 9))
        occ.write_csv(out / f"occupied_d{d}_nu{nu:g}.csv", "lambda")
        line += f"; occupied {occ.summary()}"
        print(line)

    P, Q = PathologicalMeasure("P", 2.0), PathologicalMeasure("Q", 2.0)
    levels = range(4, 9)
    curves = {
        "ambient": lambda_curve(lambda_dyadic_ambient, P, Q, levels),
        "occupied": lambda_curve(lambda_occupied_cells, P, Q, levels),
        "phi": phi_curve(P, Q, [2.0 ** -l for l in levels], n_mc=args.n_mc, seed=args.seed),
    }
    for name, c in curves.items():
        c.write_csv(out / f"pathological_{name}.csv", "phi" if name == "phi" else "lambda")
        print(f"non-doubling pair, {name:>8}: {c.summary()}")
    print(f"wrote curves to {out}")


if __name__ == "__main__":
    main()
