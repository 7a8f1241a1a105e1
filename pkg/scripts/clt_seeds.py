"""KS statistic of normalised Birkhoff sums across seeds, for the iid and a two-coordinate chain.

The iid sums are lattice valued, so their KS distance to a Gaussian has a
floor of half the largest atom; this script shows how often 0.02 is met.
"""

import argparse
import math

import numpy as np
from scipy import stats

from ruelle.alphabet import finite_measure
from ruelle.markov import build_kernel, clt_check, clt_variance, ks_threshold
from ruelle.potential import constant, first_coordinate, two_coordinate
from ruelle.seqspace import Grid
from ruelle.transfer import normalize_potential


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--samples", type=int, default=10_000)
    parser.add_argument("--target", type=float, default=0.02)
    args = parser.parse_args()

    xi = first_coordinate([0.0, 1.0])
    grid = Grid(finite_measure(size=2), 6)
    fbar, _ = normalize_potential(two_coordinate([[0.0, math.log(2)], [math.log(3), 0.0]]), grid)
    kernels = {"iid": build_kernel(constant(0.0), grid), "two-coordinate": build_kernel(fbar, grid)}

    atom = stats.binom.pmf(args.n // 2, args.n, 0.5)
    print(f"largest atom of the iid sum: {atom:.4f}; KS floor ~ {atom / 2:.4f}")
    print(f"declared threshold: {ks_threshold(args.n, args.samples):.4f}")
    for name, k in kernels.items():
        var = clt_variance(k, xi)
        ks = np.array([clt_check(k, xi, args.n, args.samples, s, variance=var).ks_stat for s in range(args.seeds)])
        hits = int((ks <= args.target).sum())
        print(f"{name:15s} s^2={var.s2:.5f} KS mean={ks.mean():.4f} max={ks.max():.4f} "
              f"<= {args.target}: {hits}/{args.seeds}")


if __name__ == "__main__":
    main()
