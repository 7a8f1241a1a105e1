"""Spectral gap of a two-coordinate potential: fitted rate against the 2x2 eigenvalue ratio."""

import argparse
import math

import numpy as np

from ruelle.alphabet import finite_measure
from ruelle.potential import two_coordinate
from ruelle.seqspace import Grid, cylinder_dictionary
from ruelle.transfer import eigen_triple, qnorm_decay, spectral_gap_estimate


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--matrix", type=float, nargs=4, default=[0.0, math.log(2), math.log(3), 0.0],
                        help="A[0,0] A[0,1] A[1,0] A[1,1]")
    parser.add_argument("--depth", type=int, default=8)
    parser.add_argument("--n-max", type=int, default=14)
    args = parser.parse_args()

    A = np.asarray(args.matrix).reshape(2, 2)
    f = two_coordinate(A)
    grid = Grid(finite_measure(size=2), args.depth)
    t = eigen_triple(f, grid)
    fit = spectral_gap_estimate(f, t, n_max=args.n_max, n_min=2)
    w = np.sort(np.abs(np.linalg.eigvals(np.exp(A) * 0.5)))
    print(f"lambda       {t.lam:.12f}")
    print(f"s_hat        {fit.s_hat:.6f}  (R^2 {fit.r2:.6f})")
    print(f"ratio oracle {w[0] / w[1]:.6f}")
    print("\nQ-norm decay per dictionary function (n = 1, 3, 5, ...):")
    for phi in cylinder_dictionary(grid, 5):
        d = qnorm_decay(f, phi, t)
        print("  " + " ".join(f"{e:8.1e}" for e in d.entries[::2]) + f"   rate {d.rate:.4f}")


if __name__ == "__main__":
    main()
