"""Zero-temperature limit of beta f for a first-coordinate potential, against q_beta(1)."""

import argparse
import math

from ruelle.alphabet import finite_measure
from ruelle.potential import first_coordinate
from ruelle.seqspace import Grid
from ruelle.thermo import beta_scan


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--c1", type=float, default=math.log(3), help="value of f on symbol 1 (0 on symbol 0)")
    parser.add_argument("--betas", type=float, nargs="+", default=[0, 0.5, 1, 2, 5, 10, 20, 50])
    parser.add_argument("--depth", type=int, default=6)
    args = parser.parse_args()

    f = first_coordinate([0.0, args.c1])
    scan = beta_scan(f, args.betas, Grid(finite_measure(size=2), args.depth))
    print(f"{'beta':>6} {'log lambda':>12} {'<f>':>10} {'entropy':>10} {'mass on 1':>14} {'closed form':>14}")
    for r in scan.rows:
        q1 = 1.0 / (1.0 + math.exp(-r.beta * args.c1))
        print(f"{r.beta:6.1f} {r.log_lambda:12.6f} {r.mean_f:10.6f} {r.entropy:10.6f} "
              f"{r.marginal[1]:14.12f} {q1:14.12f}")
    if scan.error:
        print("stopped:", scan.error)
    print("monotone <f>:", scan.monotone())


if __name__ == "__main__":
    main()
