"""Reproduce the benchmark table: shielded and unshielded rows for Tiger and UUV grids.

    python scripts/run_benchmarks.py --episodes 100 --out results/benchmarks.csv
"""
import argparse
import csv
import sys
from dataclasses import asdict

from coshield.harness import ExperimentConfig, InvariantViolation, compare, format_compare, run_experiment

ROWS = [("tiger-simple", 8), ("tiger-fuzzy", 8), ("uuv", 8), ("uuv", 12), ("uuv", 16), ("uuv", 20)]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-size", type=int, default=20, help="skip UUV grids larger than this")
    p.add_argument("--out", help="CSV file for all rows")
    args = p.parse_args()

    rows = []
    for bench, size in ROWS:
        if bench == "uuv" and size > args.max_size:
            continue
        pair = {}
        for mode in ("shielded", "unshielded"):
            cfg = ExperimentConfig(benchmark=bench, size=size, mode=mode, episodes=args.episodes,
                                   seed=args.seed, workers=args.workers)
            try:
                pair[mode] = run_experiment(cfg).row
            except InvariantViolation as e:
                print(f"{cfg.label} {mode}: {e}", file=sys.stderr)
                return 1
            print(pair[mode].format(), flush=True)
            rows.append(pair[mode])
        print("  " + format_compare(compare(pair["shielded"], pair["unshielded"])), flush=True)

    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(asdict(rows[0])))
            w.writeheader()
            w.writerows(asdict(r) for r in rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
