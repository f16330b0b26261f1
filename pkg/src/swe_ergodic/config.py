"""Sectioned key-value experiment configuration (INI syntax).

Schema (every key optional unless noted)::

    [grid]       d (required), L (required), N (required), T (required), dt
    [noise]      model = white | riesz | bump | atom | fractional; beta; s; c; H
    [model]      sigma = constant | zero | affine | linear | sin; scheme = trig | duhamel
    [run]        replicas, seed, radii (comma list), functional (comma list), out
    [picard]     n, k
    [malliavin]  s, y (comma list of cell indices), eps, replicas

``dt`` defaults to the largest step <= dx dividing T; ``replicas`` to 1000.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace

from .ergodicity import LIPSCHITZ_FUNCTIONS
from .grid import GridSpec
from .noise import CovarianceSpec, dalang_check
from .solver import SigmaSpec

SUBCOMMANDS = ("simulate", "ergodicity", "dalang-check", "spectral-check", "picard-check", "malliavin-check")


class ConfigError(ValueError):
    """Every violation found while validating a configuration."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _names(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


# (section, key) -> (field name, parser)
SCHEMA = {
    ("grid", "d"): ("d", int),
    ("grid", "L"): ("L", float),
    ("grid", "N"): ("N", int),
    ("grid", "T"): ("T", float),
    ("grid", "dt"): ("dt", _opt_float),
    ("noise", "model"): ("model", str),
    ("noise", "beta"): ("beta", _opt_float),
    ("noise", "s"): ("s", _opt_float),
    ("noise", "c"): ("c", _opt_float),
    ("noise", "H"): ("H", _opt_float),
    ("model", "sigma"): ("sigma", str),
    ("model", "scheme"): ("scheme", str),
    ("run", "replicas"): ("replicas", int),
    ("run", "seed"): ("seed", int),
    ("run", "radii"): ("radii", _floats),
    ("run", "functional"): ("functional", _names),
    ("run", "out"): ("out", str),
    ("picard", "n"): ("picard_n", int),
    ("picard", "k"): ("picard_k", int),
    ("malliavin", "s"): ("probe_s", int),
    ("malliavin", "y"): ("probe_y", _ints),
    ("malliavin", "eps"): ("eps", _opt_float),
    ("malliavin", "replicas"): ("probe_replicas", int),
}
REQUIRED = ("d", "L", "N", "T")


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    L: float
    N: int
    T: float
    dt: float | None = None
    model: str = "white"
    beta: float | None = None
    s: float | None = None
    c: float | None = None
    H: float | None = None
    sigma: str = "linear"
    scheme: str = "trig"
    replicas: int = 1000
    seed: int = 0
    radii: tuple[float, ...] = ()
    functional: tuple[str, ...] = ("identity",)
    out: str = "out"
    picard_n: int = 2
    picard_k: int = 3
    probe_s: int = 0
    probe_y: tuple[int, ...] = ()
    eps: float | None = None
    probe_replicas: int = 200

    @property
    def grid(self) -> GridSpec:
        if self.dt is None:
            return GridSpec.with_default_dt(self.d, self.L, self.N, self.T)
        return GridSpec(self.d, self.L, self.N, self.dt, self.T)

    @property
    def cov(self) -> CovarianceSpec:
        return build_covariance(self.model, self.d, beta=self.beta, s=self.s, c=self.c, H=self.H)

    @property
    def sigma_spec(self) -> SigmaSpec:
        return SigmaSpec(self.sigma)

    @property
    def probe(self):
        return self.probe_s, self.probe_y or (0,) * self.d


def build_covariance(model, d, beta=None, s=None, c=None, H=None) -> CovarianceSpec:
    model = model.lower()
    need = {"riesz": ("beta", beta), "bump": ("s", s), "atom": ("c", c), "fractional": ("H", H)}
    if model in need and need[model][1] is None:
        raise ValueError(f"model {model} needs parameter {need[model][0]}")
    if model == "white":
        return CovarianceSpec.white(d)
    if model == "riesz":
        return CovarianceSpec.riesz(d, beta)
    if model == "bump":
        return CovarianceSpec.bump(d, s)
    if model == "atom":
        return CovarianceSpec.atom(d, c)
    if model == "fractional":
        if d != 1:
            raise ValueError("the fractional model is one-dimensional")
        return CovarianceSpec.fractional(H)
    raise ValueError(f"unknown covariance model {model!r}")


def validate(cfg: ExperimentConfig, subcommand: str | None = None) -> list[str]:
    """Every violated constraint, each naming the constraint."""
    problems = []
    grid = cov = None
    try:
        grid = cfg.grid
    except ValueError as exc:
        problems.append(f"grid: {exc}")
    riesz_beyond = cfg.model == "riesz" and cfg.beta is not None and cfg.beta >= 2
    if riesz_beyond and subcommand != "dalang-check":
        problems.append(f"noise: Dalang's condition fails for Riesz kernels with beta = {cfg.beta} >= 2 "
                        "(the spectral tail |xi|^(beta-d) is not integrable against (1+|xi|^2)^-1)")
    try:
        cov = cfg.cov
    except ValueError as exc:
        if not (riesz_beyond and subcommand == "dalang-check"):
            problems.append(f"noise: {exc}")
    try:
        cfg.sigma_spec
    except ValueError as exc:
        problems.append(f"model: {exc}")
    if cfg.scheme not in ("trig", "duhamel"):
        problems.append(f"model: scheme must be trig or duhamel, got {cfg.scheme!r}")
    if cfg.replicas < 2:
        problems.append(f"run: replicas must be >= 2, got {cfg.replicas}")
    if any(r <= 0 for r in cfg.radii):
        problems.append("run: radii must be positive")
    bad = [f for f in cfg.functional if f not in LIPSCHITZ_FUNCTIONS]
    if bad:
        problems.append(f"run: unknown functional(s) {bad}; choose from {sorted(LIPSCHITZ_FUNCTIONS)}")
    if cfg.picard_n < 1 or cfg.picard_k < 0:
        problems.append("picard: need n >= 1 and k >= 0")
    if cfg.eps is not None and not cfg.eps > 0:
        problems.append("malliavin: eps must be positive")
    if cfg.probe_y and len(cfg.probe_y) != cfg.d:
        problems.append(f"malliavin: probe cell y needs {cfg.d} indices")
    if grid is not None:
        problems += [f"grid: {p}" for p in grid.check(r_max=max(cfg.radii, default=0.0))]
        if not 0 <= cfg.probe_s < grid.n_steps:
            problems.append(f"malliavin: probe step s = {cfg.probe_s} outside [0, {grid.n_steps})")
    if cov is not None and subcommand != "dalang-check" and not riesz_beyond:
        check = dalang_check(cov)
        if not check.finite:
            problems.append(f"noise: Dalang's condition fails for {cov.label} ({check.reason})")
    if subcommand == "ergodicity" and not cfg.radii:
        problems.append("run: ergodicity needs a radius ladder (radii)")
    if subcommand in ("malliavin-check", "picard-check") and cfg.d == 3:
        problems.append("malliavin: derivative probes and Picard ladders are not offered in d = 3 "
                        "(the pointwise derivative is an open problem there)")
    if subcommand == "picard-check" and grid is not None:
        width = 1.0 / cfg.picard_n
        if width < 2 * grid.dx:
            problems.append(f"picard: mollifier width a/n = {width} below 2 dx = {2 * grid.dx}")
        if grid.T + width * (cfg.picard_k + 1) > grid.L / 2:
            problems.append("picard: support a(k+1)/n + T exceeds L/2 (finite propagation)")
    return problems


def from_mapping(values: dict, subcommand: str | None = None) -> ExperimentConfig:
    missing = [k for k in REQUIRED if values.get(k) is None]
    if missing:
        raise ConfigError([f"grid: missing required key {k}" for k in missing])
    cfg = ExperimentConfig(**values)
    problems = validate(cfg, subcommand)
    if problems:
        raise ConfigError(problems)
    if cfg.dt is None:
        cfg = replace(cfg, dt=cfg.grid.dt)
    return cfg


def read_mapping(text: str) -> tuple[dict, list[str]]:
    """Parse INI text into field values; unknown sections/keys are reported."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    problems, values = [], {}
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        return values, [f"syntax: {exc}"]
    sections = {sec for sec, _ in SCHEMA}
    for sec in parser.sections():
        if sec not in sections:
            problems.append(f"unknown section [{sec}]")
            continue
        for key, raw in parser.items(sec):
            if (sec, key) not in SCHEMA:
                problems.append(f"unknown key {key!r} in [{sec}]")
                continue
            name, conv = SCHEMA[(sec, key)]
            try:
                values[name] = conv(raw)
            except ValueError:
                problems.append(f"[{sec}] {key} = {raw!r} is not a valid {getattr(conv, '__name__', 'value')}")
    return values, problems


def parse_config(text: str, subcommand: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    values, problems = read_mapping(text)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    missing = [k for k in REQUIRED if values.get(k) is None]
    problems += [f"grid: missing required key {k}" for k in missing]
    if problems:
        raise ConfigError(problems)
    return from_mapping(values, subcommand)


def _fmt(value):
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: ExperimentConfig) -> str:
    """INI text such that parse_config(emit_config(cfg)) == cfg."""
    by_field = {name: (sec, key) for (sec, key), (name, _) in SCHEMA.items()}
    sections: dict[str, list[str]] = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None or value == ():
            continue
        sec, key = by_field[f.name]
        sections.setdefault(sec, []).append(f"{key} = {_fmt(value)}")
    order = ("grid", "noise", "model", "run", "picard", "malliavin")
    return "\n".join(f"[{sec}]\n" + "\n".join(sections[sec]) + "\n" for sec in order if sec in sections)
