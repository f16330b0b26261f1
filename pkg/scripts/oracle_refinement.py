"""Spectral stepper against the dense direct sum under simultaneous dt, dx halving (d = 1).

    python scripts/oracle_refinement.py --cov bump --s 0.5
    python scripts/oracle_refinement.py --cov white

White noise converges only at the pathwise rate sqrt(dx), so its ratios sit near 0.7-0.9.
"""

import argparse

import numpy as np

from swe_ergodic.grid import GridSpec
from swe_ergodic.noise import CovarianceSpec, noise_history, periodize_spectrum
from swe_ergodic.solver import SigmaSpec, solve, solve_oracle_d1


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cov", choices=("white", "bump", "riesz"), default="bump")
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--sigma", default="linear")
    ap.add_argument("--L", type=float, default=8.0)
    ap.add_argument("--replicas", type=int, default=8)
    ap.add_argument("--seed", type=int, default=17)
    args = ap.parse_args()
    cov = {"white": lambda: CovarianceSpec.white(1), "bump": lambda: CovarianceSpec.bump(1, args.s),
           "riesz": lambda: CovarianceSpec.riesz(1, args.beta)}[args.cov]()
    sigma = SigmaSpec(args.sigma)
    prev = None
    print(f"{'N':>5} {'dx':>9} {'mean max|err|':>14} {'ratio':>7}")
    for N in (64, 128, 256, 512):
        grid = GridSpec(1, args.L, N, args.L / N, 1.0)
        noise = noise_history(periodize_spectrum(cov, grid), args.seed, range(args.replicas))
        a = solve(grid, cov, sigma, replicas=args.replicas, noise=noise).u
        b = solve_oracle_d1(grid, cov, sigma, replicas=args.replicas, noise=noise).u
        err = float(np.abs(a - b).max(axis=1).mean())
        ratio = "" if prev is None else f"{err / prev:.3f}"
        print(f"{N:5d} {grid.dx:9.5f} {err:14.6e} {ratio:>7}")
        prev = err


if __name__ == "__main__":
    main()
