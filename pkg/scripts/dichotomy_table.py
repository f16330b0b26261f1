"""Decay verdicts of V(R) across the covariance catalog plus the Atom model.

    python scripts/dichotomy_table.py --replicas 1000 --out dichotomy.csv

d = 3 entries dominate the run time; ``--skip-3d`` drops them.
"""

import argparse
import csv

from swe_ergodic.ergodicity import ErgodicProblem, gamma_average_profile, variance_curve
from swe_ergodic.grid import GridSpec
from swe_ergodic.noise import CovarianceSpec
from swe_ergodic.solver import SigmaSpec

RADII = (2.0, 4.0, 8.0, 16.0)


def catalog(skip_3d):
    g1 = GridSpec(1, 40.0, 320, 0.125, 1.0)
    g2 = GridSpec(2, 40.0, 160, 0.25, 1.0)
    g3 = GridSpec(3, 34.0, 64, 0.5, 1.0)
    rows = [
        ("white d=1", CovarianceSpec.white(1), g1, "linear"),
        ("riesz d=1 beta=0.8", CovarianceSpec.riesz(1, 0.8), g1, "linear"),
        ("fractional H=0.55", CovarianceSpec.fractional(0.55), g1, "linear"),
        ("bump d=1 s=0.5", CovarianceSpec.bump(1, 0.5), g1, "sin"),
        ("riesz d=2 beta=1", CovarianceSpec.riesz(2, 1.0), g2, "linear"),
        ("bump d=2 s=0.5", CovarianceSpec.bump(2, 0.5), g2, "sin"),
        ("atom c=1", CovarianceSpec.atom(1, 1.0), GridSpec(1, 34.0, 2176, 1 / 64, 1.0), "constant"),
    ]
    if not skip_3d:
        rows += [("riesz d=3 beta=1", CovarianceSpec.riesz(3, 1.0), g3, "linear"),
                 ("bump d=3 s=0.5", CovarianceSpec.bump(3, 0.5), g3, "sin")]
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--skip-3d", action="store_true")
    ap.add_argument("--out", default="dichotomy.csv")
    args = ap.parse_args()

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "verdict", "gamma_average_vanishes", "V(2)", "V(16)",
                    *[f"ratio_{int(r)}" for r in RADII[1:]]])
        for label, cov, grid, sigma in catalog(args.skip_3d):
            prob = ErgodicProblem(grid, cov, SigmaSpec(sigma), args.seed, args.threads)
            rep = variance_curve(prob, RADII, M=args.replicas)
            vanish = gamma_average_profile(cov, RADII).vanishes if cov.is_function else ""
            w.writerow([label, rep.verdict, vanish, "%.6g" % rep.V[0], "%.6g" % rep.V[-1],
                        *["%.4f+-%.4f" % (q, s) for q, s in zip(rep.ratios, rep.ratio_stderr)]])
            print(f"{label:22s} {rep.verdict:12s} " + " ".join("%.3f" % q for q in rep.ratios), flush=True)


if __name__ == "__main__":
    main()
