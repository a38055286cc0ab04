"""Shield synthesis time and size per UUV grid."""
import argparse

from coshield.benchmarks import UuvParams, build_uuv
from coshield.shield import feasibility, synthesize


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", type=int, nargs="+", default=[8, 12, 16, 20])
    args = p.parse_args()
    print(f"{'grid':>6} {'cap':>4} {'supports':>9} {'tokens':>8} {'passes':>6} {'seconds':>8} feasible")
    for n in args.sizes:
        m = build_uuv(UuvParams(size=n))
        res = synthesize(m)
        print(f"{n:>3}x{n:<2} {m.capacity:>4} {len(res.token.supports):>9} {res.token.n_states:>8} "
              f"{res.pruned.passes:>6} {res.seconds:>8.2f} {feasibility(res.shield, m)}")


if __name__ == "__main__":
    main()
