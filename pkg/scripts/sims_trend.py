"""Tiger hit rate and cost as the number of simulations per step grows."""
import argparse
from dataclasses import replace

from coshield.harness import ExperimentConfig, run_experiment
from coshield.pomcp import TIGER_CONFIG


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sims", type=int, nargs="+", default=[10, 100, 1000])
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--benchmark", default="tiger-simple", choices=["tiger-simple", "tiger-fuzzy"])
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    for sims in args.sims:
        cfg = ExperimentConfig(benchmark=args.benchmark, planner=replace(TIGER_CONFIG, simulations=sims),
                               episodes=args.episodes, seed=args.seed)
        row = run_experiment(cfg).row
        print(f"sims={sims:<6} hit={row.hit:6.2f}% cost={row.cost_mean:9.2f} ± {row.cost_std:.2f}")


if __name__ == "__main__":
    main()
