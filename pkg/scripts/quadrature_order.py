"""Error of L_f 1 = E[exp(-X^2)] = 3^{-1/2} under Gauss-Hermite rules of growing order."""

import argparse

import numpy as np

from ruelle.alphabet import gaussian_measure
from ruelle.potential import first_coordinate
from ruelle.seqspace import Grid, constant_function
from ruelle.transfer import apply_operator


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--orders", type=int, nargs="+", default=[11, 21, 31, 41, 61])
    args = parser.parse_args()
    print(f"{'order':>6} {'max error':>12}")
    for order in args.orders:
        m = gaussian_measure(order=order)
        grid = Grid(m, 1)
        L1 = apply_operator(first_coordinate(-m.alphabet.nodes**2), constant_function(grid))
        print(f"{order:6d} {np.abs(L1.values - 3**-0.5).max():12.3e}")


if __name__ == "__main__":
    main()
