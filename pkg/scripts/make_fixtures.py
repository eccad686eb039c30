"""Write the synthetic Case 1 / Case 2 fixtures used by the CLI tests.

Each fixture is a series file (period, y) plus a companion panel file
(period, x0..x{N-1}).  Values are written with 12 significant digits.
"""

import argparse
from pathlib import Path

from qarspec.montecarlo import DgpSpec, simulate_dgp
from qarspec.rng import stream


def write(path: Path, header, rows):
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(r) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="tests/fixtures")
    ap.add_argument("--T", type=int, default=300)
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for case in ("case1", "case2"):
        spec = DgpSpec(case, args.T, panel_N=args.N)
        # raw panel (before standardization) so the file looks like real input
        rng = stream(args.seed, "cli", 1 if case == "case1" else 2)
        data = simulate_dgp(spec, rng)
        raw = data.panel.values * data.panel.scales[:, None] + data.panel.means[:, None]
        periods = [f"t{t:04d}" for t in range(args.T)]
        write(out / f"{case}_series.csv", ["period", "y"],
              [[p, f"{v:.12g}"] for p, v in zip(periods, data.y)])
        write(out / f"{case}_panel.csv", ["period"] + [f"x{i}" for i in range(args.N)],
              [[p] + [f"{v:.12g}" for v in raw[:, t]] for t, p in enumerate(periods)])
        print(f"wrote {case} fixtures to {out}")


if __name__ == "__main__":
    main()
