"""Gap between test statistics built from estimated and from true factors.

For each (N, T) the script simulates case 2 panels, computes the CvM
statistic once with principal-components factors and once with the true
factors mapped into the estimated factor space, and reports the median
and mean absolute gap.  The gap should shrink as N and T grow.
"""

import argparse
import csv
from pathlib import Path

from qarspec.montecarlo import DgpSpec, lemma1_convergence_check


def parse_size(text):
    N, T = text.lower().split("x")
    return int(N), int(T)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=parse_size, nargs="+", default=[(100, 100), (200, 100), (400, 200), (800, 400)],
                    help="panel sizes as NxT")
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--null", choices=["H01", "H02"], default="H02")
    ap.add_argument("--noise", type=float, default=1.0, help="idiosyncratic panel noise scale")
    ap.add_argument("--out", default="results/lemma1.csv")
    args = ap.parse_args()

    spec = DgpSpec("case2", 100, panel_noise=args.noise)
    rows = lemma1_convergence_check(spec, args.sizes, args.seed, reps=args.reps, which_null=args.null)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "T", "median_gap", "mean_gap", "reps"])
        for r in rows:
            w.writerow([r["N"], r["T"], repr(r["median_gap"]), repr(r["mean_gap"]), args.reps])
    for r in rows:
        print(f"N={r['N']:>5} T={r['T']:>5}  median gap {r['median_gap']:.4g}  mean gap {r['mean_gap']:.4g}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
