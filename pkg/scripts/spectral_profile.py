"""D(R) profiles and their last doubling ratio against the R^-beta law of Riesz tails.

    python scripts/spectral_profile.py --out profile.csv
"""

import argparse
import csv

import numpy as np

from swe_ergodic.noise import CovarianceSpec
from swe_ergodic.spectral import riemann_lebesgue_profile

MODELS = [
    (CovarianceSpec.white(1), 1.0),
    (CovarianceSpec.riesz(1, 0.5), 0.5),
    (CovarianceSpec.riesz(1, 0.8), 0.8),
    (CovarianceSpec.fractional(0.55), 0.9),
    (CovarianceSpec.bump(1, 0.5), 1.0),
    (CovarianceSpec.riesz(2, 1.0), 1.0),
    (CovarianceSpec.bump(2, 0.5), 2.0),
    (CovarianceSpec.riesz(3, 1.0), 1.0),
    (CovarianceSpec.bump(3, 0.5), 3.0),
    (CovarianceSpec.atom(2, 1.0), 0.0),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--b", type=float, default=1.0, help="inner ball radius (the time horizon)")
    ap.add_argument("--rmax", type=float, default=64.0)
    ap.add_argument("--out", default="profile.csv")
    args = ap.parse_args()
    radii = 2.0 ** np.arange(0, int(np.log2(args.rmax)) + 1)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "R", "D"])
        for cov, rate in MODELS:
            prof = riemann_lebesgue_profile(cov, args.b, radii)
            w.writerows([cov.label, r, "%.10g" % v] for r, v in zip(radii, prof.values))
            print(f"{cov.label:28s} D(16)/D(1) = {prof.values[4] / prof.values[0]:.4f}   "
                  f"last ratio {prof.ratios[-1]:.4f}  (2^-rate = {2.0 ** -rate:.4f})")


if __name__ == "__main__":
    main()
