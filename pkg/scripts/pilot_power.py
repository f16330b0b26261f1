"""How many replicas the ratio test needs: V(2R)/V(R) and its standard error against M.

    python scripts/pilot_power.py --cov riesz --beta 0.8
"""

import argparse

from swe_ergodic.ergodicity import DECAY_THRESHOLD, N_SIGMA, ErgodicProblem, variance_curve, variance_stats
from swe_ergodic.grid import GridSpec
from swe_ergodic.noise import CovarianceSpec
from swe_ergodic.solver import SigmaSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cov", choices=("white", "riesz", "bump"), default="white")
    ap.add_argument("--beta", type=float, default=0.8)
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--sigma", default="linear")
    ap.add_argument("--max-replicas", type=int, default=2000)
    args = ap.parse_args()
    cov = {"white": lambda: CovarianceSpec.white(1), "riesz": lambda: CovarianceSpec.riesz(1, args.beta),
           "bump": lambda: CovarianceSpec.bump(1, args.s)}[args.cov]()
    grid = GridSpec(1, 40.0, 320, 0.125, 1.0)
    radii = (2.0, 4.0, 8.0, 16.0)
    rep = variance_curve(ErgodicProblem(grid, cov, SigmaSpec(args.sigma), seed=1), radii,
                         M=args.max_replicas, keep_samples=True)
    print(f"{'M':>6}  worst ratio + {N_SIGMA:g} se   (decaying needs < {DECAY_THRESHOLD})")
    M = 100
    while M <= args.max_replicas:
        _, _, ratios, se = variance_stats(rep.samples[:M])
        print(f"{M:6d}  {(ratios + N_SIGMA * se).max():.3f}")
        M *= 2


if __name__ == "__main__":
    main()
