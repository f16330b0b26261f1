"""Command-line entry point: ``swe-ergodic <subcommand> [--config PATH] [overrides]``.

Every run writes its CSV/JSON artifacts, ``properties.json`` (one record per
asserted property) and ``manifest.json`` into ``--out``; when a property fails
``failure.json`` lists (property, expected, observed, tolerance) and the exit
status is 1.  Configuration errors exit with status 3.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import struct
import sys
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import SUBCOMMANDS, ConfigError, ExperimentConfig, emit_config, parse_config
from .ergodicity import ErgodicProblem, TestFunctional, atom_plateau, field_moments, variance_curve
from .kernels import discretize_kernel
from .malliavin import ProbeProblem, distance_to, fd_derivative, support_growth
from .noise import DalangResult, dalang_check
from .solver import picard_increments, picard_iterate, solve
from .spectral import ball_ft_closed_form, ball_indicator_ft_sq, riemann_lebesgue_profile, u_constant

DEFAULT_GRID = {"d": 1, "L": 40.0, "N": 320, "T": 1.0}
PROFILE_RADII = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass
class Property:
    property: str
    expected: object
    observed: object
    tolerance: object
    passed: bool


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def write_csv(path: Path, header, rows):
    """RFC-4180 CSV with 17 significant digits."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return "%.17g" % v
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_num)
        fh.write("\n")


def write_snapshot(path: Path, field: np.ndarray, L: float, t: float):
    """Header (d, N, L, t) as <qqdd, then the field as little-endian float64."""
    d, N = field.ndim, field.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qqdd", d, N, L, t))
        fh.write(np.ascontiguousarray(field, dtype="<f8").tobytes())


# --------------------------------------------------------------------------
# subcommands; each returns (properties, summary dict)


def run_simulate(cfg: ExperimentConfig, out: Path, threads: int, args):
    grid = cfg.grid
    problem = ErgodicProblem(grid, cfg.cov, cfg.sigma_spec, cfg.seed, threads, cfg.scheme)
    mom = field_moments(problem, cfg.replicas)
    coords = np.indices(grid.shape).reshape(grid.d, -1).T
    offsets = (coords + grid.N // 2) % grid.N - grid.N // 2
    rows = [(*(o * grid.dx), m, v) for o, m, v in zip(offsets, mom.mean.ravel(), mom.var.ravel())]
    write_csv(out / "simulate.csv", [*"xyz"[: grid.d], "mean_u", "var_u"], rows)
    if args.dump_fields:
        state = solve(grid, cfg.cov, cfg.sigma_spec, cfg.seed, [0], scheme=cfg.scheme)
        write_snapshot(out / "field_r0.bin", state.u[0], grid.L, grid.T)
    dev = abs(float(mom.torus_means.mean()) - 1.0)
    props = [
        Property("finite_fields", True, bool(np.all(np.isfinite(mom.var))), None, bool(np.all(np.isfinite(mom.var)))),
        Property("mean_preservation", 1.0, float(mom.torus_means.mean()), 5 * mom.mean_stderr,
                 dev <= 5 * mom.mean_stderr),
    ]
    return props, {"mean_of_torus_means": float(mom.torus_means.mean()),
                   "mean_stderr": mom.mean_stderr, "mean_pointwise_variance": float(mom.var.mean())}


def run_ergodicity(cfg: ExperimentConfig, out: Path, threads: int, args):
    problem = ErgodicProblem(cfg.grid, cfg.cov, cfg.sigma_spec, cfg.seed, threads, cfg.scheme)
    report = variance_curve(problem, cfg.radii, cfg.replicas, TestFunctional(cfg.functional))
    rows = [(r["R"], r["mean_A"], r["V"], r["stderr"], r["ratio"]) for r in report.rows()]
    write_csv(out / "ergodicity.csv", ["R", "mean_A", "V", "stderr", "ratio"], rows)
    expected = "plateau" if cfg.cov.atom_mass > 0 else "decaying"
    props = [Property("verdict", expected, report.verdict, "ratio test: 0.75 at 3 standard errors",
                      report.verdict == expected)]
    if cfg.cov.kind == "atom" and cfg.sigma == "constant" and cfg.functional == ("identity",):
        target = atom_plateau(cfg.cov.c, cfg.grid.T)
        props.append(Property("atom_plateau_value", target, float(report.V[0]), 5 * float(report.stderr[0]),
                              abs(report.V[0] - target) <= 5 * report.stderr[0]))
    summary = {"verdict": report.verdict, "M": report.M, "ratios": report.ratios.tolist(),
               "ratio_stderr": report.ratio_stderr.tolist(), "functional": report.functional}
    return props, summary


def run_dalang(cfg: ExperimentConfig, out: Path, threads: int, args):
    if cfg.model == "riesz" and cfg.beta >= min(2, cfg.d):
        # |x|^-beta with beta >= d is not even a tempered covariance; beta >= 2 fails Dalang
        res = DalangResult(False, float("inf"), f"Riesz exponent beta = {cfg.beta} >= 2")
        label = f"riesz(d={cfg.d}, beta={cfg.beta})"
    else:
        res, label = dalang_check(cfg.cov), cfg.cov.label
    summary = {"model": label, "d": cfg.d, "classification": "finite" if res.finite else "infinite",
               "value": res.value, "reason": res.reason}
    return [], summary


def run_spectral(cfg: ExperimentConfig, out: Path, threads: int, args):
    cov, T = cfg.cov, cfg.grid.T
    props = []
    r = np.linspace(0.05, 40.0, 20)
    for d in (1, 3):
        err = float(np.max(np.abs(ball_indicator_ft_sq(d, T, r) / ball_ft_closed_form(d, T, r) - 1)))
        props.append(Property(f"ball_ft_closed_form_d{d}", 0.0, err, 1e-9, err <= 1e-9))
    summary = {"model": cov.label}
    if dalang_check(cov).finite:
        summary["U_T"] = u_constant(cov, T)
    radii = tuple(cfg.radii) or PROFILE_RADII
    prof = riemann_lebesgue_profile(cov, T, radii)
    ratios = np.concatenate([[np.nan], prof.ratios])
    write_csv(out / "spectral.csv", ["R", "D", "ratio"], zip(prof.radii, prof.values, ratios))
    final = float(prof.values[-1] / prof.values[0])
    if cov.atom_mass > 0:
        props.append(Property("profile_constant", True, prof.constant, "rtol 1e-12", prof.constant))
    else:
        props.append(Property("profile_strictly_decreasing", True, prof.strictly_decreasing, None,
                              prof.strictly_decreasing))
        props.append(Property("profile_decay_ratio", "< 0.1", final, 0.1, final < 0.1))
    summary["profile_final_over_first"] = final
    return props, summary


def run_picard(cfg: ExperimentConfig, out: Path, threads: int, args):
    grid, n, k = cfg.grid, cfg.picard_n, cfg.picard_k
    ladder = picard_iterate(grid, cfg.cov, cfg.sigma_spec, n, k, cfg.seed, cfg.replicas)
    inc = picard_increments(ladder)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.concatenate([[np.nan], inc[1:] / inc[:-1]])
    write_csv(out / "picard.csv", ["k", "sup_l2_increment", "ratio"],
              [(j, a, q) for j, a, q in zip(range(len(inc)), inc, ratios)])
    positive = inc[inc > 0]
    geometric = bool(np.all(positive[1:] < positive[:-1])) if len(positive) > 1 else True
    props = [Property("increments_decrease", True, geometric, None, geometric)]
    levels = list(range(1, k + 1))
    summary = {"increments": inc.tolist()}
    if len(levels) >= 2:
        probe = ProbeProblem(grid, cfg.cov, cfg.sigma_spec, cfg.seed, cfg.probe_replicas)
        growth, reports = support_growth(probe, n, levels, probe=(0, (0,) * grid.d))
        write_csv(out / "picard_support.csv", ["k", "measured_radius", "bound", "outside_max"],
                  [(r.k, r.measured_radius, r.bound, r.outside_max) for r in reports])
        props.append(Property("support_slope", growth.predicted_slope, growth.slope, "25%",
                              growth.relative_error <= 0.25))
        outside = max(r.outside_max for r in reports)
        props.append(Property("support_outside_ball", 0.0, outside, 1e-8, outside < 1e-8))
        summary["support_slope"] = growth.slope
    return props, summary


def run_malliavin(cfg: ExperimentConfig, out: Path, threads: int, args):
    grid = cfg.grid
    problem = ProbeProblem(grid, cfg.cov, cfg.sigma_spec, cfg.seed, cfg.probe_replicas)
    s, y = cfg.probe
    est = fd_derivative(problem, (s, y), eps=cfg.eps, check_stability=True)
    dist = distance_to(grid, est.y)
    cone = (grid.n_steps - s) * grid.dt
    inside = dist <= cone + 2 * grid.dx
    mean = est.derivative.mean(axis=0)
    coords = np.indices(grid.shape).reshape(grid.d, -1).T
    rows = [(s, "|".join(map(str, est.y)), est.t, "|".join(map(str, c)), m, n2, n4, int(i))
            for c, m, n2, n4, i in zip(coords, mean.ravel(), est.norm2.ravel(), est.norm4.ravel(), inside.ravel())]
    write_csv(out / "malliavin.csv", ["s", "y", "t", "x", "estimate", "norm2", "norm4", "inside"], rows)
    outside = float(np.abs(est.derivative[:, ~inside]).max()) if (~inside).any() else 0.0
    props = [
        Property("outside_cone", 0.0, outside, 1e-10, outside < 1e-10),
        Property("eps_stability", "< 5%", est.stability, 0.05, est.stability < 0.05),
    ]
    return props, {"eps": est.eps, "stability": est.stability, "max_norm2": float(est.norm2.max())}


RUNNERS = {
    "simulate": run_simulate,
    "ergodicity": run_ergodicity,
    "dalang-check": run_dalang,
    "spectral-check": run_spectral,
    "picard-check": run_picard,
    "malliavin-check": run_malliavin,
}


# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="INI configuration file")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count)")
    p.add_argument("--out", type=Path, help="artifact directory")
    p.add_argument("--dump-kernels", action="store_true", help="write discrete kernels G(k dt) as binary")
    p.add_argument("--dump-fields", action="store_true", help="simulate: write replica 0 at T as binary")
    g = p.add_argument_group("overrides (mirror config keys)")
    g.add_argument("-d", "--dim", dest="d", type=int)
    g.add_argument("--L", type=float)
    g.add_argument("--N", type=int)
    g.add_argument("--T", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--cov", dest="model")
    g.add_argument("--beta", type=float)
    g.add_argument("--s", type=float)
    g.add_argument("--c", type=float)
    g.add_argument("--H", type=float)
    g.add_argument("--sigma")
    g.add_argument("--scheme", choices=("trig", "duhamel"))
    g.add_argument("-M", "--replicas", type=int)
    g.add_argument("--radii", type=lambda t: tuple(float(v) for v in t.split(",")))
    g.add_argument("--functional", type=lambda t: tuple(v.strip() for v in t.split(",")))
    g.add_argument("--picard-n", dest="picard_n", type=int)
    g.add_argument("--picard-k", dest="picard_k", type=int)
    g.add_argument("--probe-s", dest="probe_s", type=int)
    g.add_argument("--probe-y", dest="probe_y", type=lambda t: tuple(int(v) for v in t.split(",")))
    g.add_argument("--eps", type=float)
    g.add_argument("--probe-replicas", dest="probe_replicas", type=int)


OVERRIDE_KEYS = ("d", "L", "N", "T", "dt", "model", "beta", "s", "c", "H", "sigma", "scheme", "replicas",
                 "radii", "functional", "picard_n", "picard_k", "probe_s", "probe_y", "eps", "probe_replicas")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swe-ergodic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name))
    return parser


def load_config(args) -> ExperimentConfig:
    text = args.config.read_text() if args.config else ""
    overrides = {k: getattr(args, k) for k in OVERRIDE_KEYS}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = str(args.out)
    if not args.config:
        for k, v in DEFAULT_GRID.items():
            overrides.setdefault(k, None)
            if overrides[k] is None:
                overrides[k] = v
    return parse_config(text, args.command, overrides)


def dump_kernels(cfg: ExperimentConfig, out: Path) -> list[str]:
    grid, written = cfg.grid, []
    for m in range(1, grid.n_steps + 1):
        try:
            kern = discretize_kernel(grid, m * grid.dt)
        except ValueError:
            continue  # d = 3 shells not resolved at small t
        path = out / f"kernel_{m:04d}.bin"
        path.write_bytes(kern.to_bytes())
        written.append(path.name)
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        failure = [{"property": "config", "expected": "valid configuration", "observed": p, "tolerance": None}
                   for p in exc.problems]
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            write_json(args.out / "failure.json", failure)
        return 3
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = args.threads or os.cpu_count() or 1
    start = time.time()
    props, summary = RUNNERS[args.command](cfg, out, threads, args)
    kernels = dump_kernels(cfg, out) if args.dump_kernels else []
    passed = all(p.passed for p in props)
    summary = {"subcommand": args.command, "passed": passed, **summary}
    write_json(out / f"{args.command}.json", summary)
    write_json(out / "properties.json", [asdict(p) for p in props])
    failures = [{k: v for k, v in asdict(p).items() if k != "passed"} for p in props if not p.passed]
    if failures:
        write_json(out / "failure.json", failures)
    write_json(out / "manifest.json", {
        "subcommand": args.command,
        "config": emit_config(replace(cfg, out=str(out))),
        "seed": cfg.seed,
        "threads": threads,
        "version": __version__,
        "wall_time_s": time.time() - start,
        "kernels": kernels,
    })
    for p in props:
        print(f"{'PASS' if p.passed else 'FAIL'} {p.property}: observed {_num(p.observed)}, expected {p.expected}")
    if args.command == "dalang-check":
        print(f"{summary['model']}: {summary['classification']}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
