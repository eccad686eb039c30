"""Specification-test report on the bundled synthetic fixtures.

Runs ``qarspec test`` on the case 1 and case 2 fixtures for grids of
5, 9 and 17 quantile levels and prints the two reports.
"""

import argparse
from pathlib import Path

from qarspec.cli import main as cli_main

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--B", type=int, default=99)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()
    Path(args.outdir).mkdir(parents=True, exist_ok=True)
    for case in ("case1", "case2"):
        out = Path(args.outdir) / f"{case}_report.txt"
        code = cli_main(["test", "--series", str(FIXTURES / f"{case}_series.csv"),
                         "--panel", str(FIXTURES / f"{case}_panel.csv"), "--m", "5,9,17",
                         "--B", str(args.B), "--seed", str(args.seed), "--out", str(out)])
        if code:
            raise SystemExit(code)
        print(f"== {case} ==")
        print(out.read_text())


if __name__ == "__main__":
    main()
