"""Spatial averages of the solution and the decay test for their variance.

For a test functional ℛ(x) = ∏_j g_j(u(t, x + ζ_j) - 1) the ball average
A_ℛ(R) is the mean of ℛ over the cells whose centre lies in the closed ball
B_R.  V(R) = Var A_ℛ(R) is estimated on one replica set shared by all radii,
and the ratios V(2R)/V(R) decide between decay (ergodic) and a plateau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec
from .noise import CovarianceSpec, gamma_ball_average
from .solver import SigmaSpec, solve

# 1-Lipschitz functions vanishing at zero
LIPSCHITZ_FUNCTIONS = {
    "identity": lambda x: x,
    "clip": lambda x: np.clip(x, -1.0, 1.0),
    "tanh": np.tanh,
    "sin": np.sin,
}

DECAY_THRESHOLD = 0.75
N_SIGMA = 3.0


@dataclass(frozen=True)
class TestFunctional:
    """ℛ(x) = ∏ g_j(u(x + ζ_j) - 1) with integer cell shifts ζ_j."""

    __test__ = False  # not a pytest class

    names: tuple[str, ...] = ("identity",)
    shifts: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        unknown = [n for n in self.names if n not in LIPSCHITZ_FUNCTIONS]
        if unknown:
            raise ValueError(f"unknown functions {unknown}; choose from {sorted(LIPSCHITZ_FUNCTIONS)}")
        if self.shifts and len(self.shifts) != len(self.names):
            raise ValueError("need one shift per factor")

    @property
    def m(self) -> int:
        return len(self.names)

    @property
    def diameter_cells(self) -> int:
        if not self.shifts:
            return 0
        return int(max(max(abs(c) for c in z) for z in self.shifts))

    def __call__(self, u: np.ndarray, d: int) -> np.ndarray:
        """Evaluate on fields whose last d axes are the periodic grid."""
        w = u - 1.0
        out = None
        for j, name in enumerate(self.names):
            g = LIPSCHITZ_FUNCTIONS[name]
            shifted = w
            if self.shifts and any(self.shifts[j]):
                # value at x + ζ  ⇔  roll by -ζ
                shifted = np.roll(w, tuple(-c for c in self.shifts[j]), axis=tuple(range(-d, 0)))
            val = g(shifted)
            out = val if out is None else out * val
        return out


def ball_mask(grid: GridSpec, R: float) -> np.ndarray:
    return grid.radius <= R * (1 + 1e-12)


def spatial_average(field: np.ndarray, grid: GridSpec, R: float, t: float | None = None) -> np.ndarray:
    """Mean of ``field`` over cells centred in B_R (leading axes are kept).

    This is the midpoint rule for (ω_d R^d)^{-1} ∫_{B_R} with the counted cell
    volume in place of ω_d R^d, so constants are reproduced exactly.
    """
    t = grid.T if t is None else t
    if R <= 0:
        raise ValueError("radius must be positive")
    if R + t > grid.L / 2 + 1e-12:
        raise ValueError(f"R + t = {R + t} exceeds L/2 = {grid.L / 2}: averages would see wrapped light cones")
    mask = ball_mask(grid, R)
    return field[..., mask].mean(axis=-1)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ErgodicProblem:
    """Model and sampling settings shared by the ergodicity estimators."""

    grid: GridSpec
    cov: CovarianceSpec
    sigma: SigmaSpec = SigmaSpec("linear")
    seed: int = 0
    threads: int = 1
    scheme: str = "trig"


def _influence(x: np.ndarray) -> np.ndarray:
    """Per-replica influence of the sample variance (columns = statistics)."""
    c = x - x.mean(axis=0)
    return c**2 - (c**2).mean(axis=0)


@dataclass
class ErgodicReport:
    radii: np.ndarray
    mean_A: np.ndarray
    V: np.ndarray
    stderr: np.ndarray
    ratios: np.ndarray
    ratio_stderr: np.ndarray
    M: int
    functional: str = "identity"
    threshold: float = DECAY_THRESHOLD
    n_sigma: float = N_SIGMA
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def verdict(self) -> str:
        return classify(self.V, self.ratios, self.ratio_stderr, self.threshold, self.n_sigma)

    def rows(self):
        ratios = np.concatenate([[np.nan], self.ratios])
        for r, a, v, s, q in zip(self.radii, self.mean_A, self.V, self.stderr, ratios):
            yield {"R": float(r), "mean_A": float(a), "V": float(v), "stderr": float(s), "ratio": float(q)}


def classify(V, ratios, ratio_se, threshold=DECAY_THRESHOLD, n_sigma=N_SIGMA) -> str:
    if np.all(V == 0):
        return "decaying"
    if np.any(~np.isfinite(ratios)):
        return "inconclusive"
    if np.all(ratios + n_sigma * ratio_se < threshold):
        return "decaying"
    if np.all(np.abs(ratios - 1) <= np.maximum(n_sigma * ratio_se, 1e-9)):
        return "plateau"
    return "inconclusive"


def variance_stats(samples: np.ndarray):
    """Unbiased variances of the columns, their standard errors and the
    delta-method standard errors of consecutive ratios V[i+1]/V[i]."""
    M = samples.shape[0]
    V = samples.var(axis=0, ddof=1)
    psi = _influence(samples)
    C = (psi.T @ psi) / (M - 1) / M  # covariance of the variance estimators
    se = np.sqrt(np.diag(C))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = V[1:] / V[:-1]
        rel = (np.diag(C)[1:] / V[1:] ** 2 + np.diag(C)[:-1] / V[:-1] ** 2
               - 2 * np.diag(C, 1) / (V[1:] * V[:-1]))
        ratio_se = np.abs(ratios) * np.sqrt(np.maximum(rel, 0.0))
    return V, se, ratios, ratio_se


def _averages_reducer(grid, radii, functional):
    masks = [ball_mask(grid, R) for R in radii]

    def reduce(state):
        vals = functional(state.u, grid.d)
        A = np.stack([vals[..., m].mean(axis=-1) for m in masks], axis=-1)
        first = np.stack([state.u[..., m].mean(axis=-1) for m in masks], axis=-1)
        return np.concatenate([A, first], axis=-1)

    return reduce


def sample_averages(problem: ErgodicProblem, radii, M: int, functional: TestFunctional | None = None):
    """Per-replica ball averages: (functional averages, plain averages of u), each (M, len(radii))."""
    grid = problem.grid
    functional = functional or TestFunctional()
    radii = np.asarray(radii, dtype=float)
    reach = radii.max() + grid.T + functional.diameter_cells * grid.dx
    problems = grid.check(r_max=radii.max())
    if reach > grid.L / 2 + 1e-12 or problems:
        raise ValueError("; ".join(problems) or f"ball reach {reach} exceeds L/2")
    out = solve(grid, problem.cov, problem.sigma, problem.seed, M, scheme=problem.scheme,
                threads=problem.threads, reduce=_averages_reducer(grid, radii, functional))
    k = len(radii)
    return out[:, :k], out[:, k:]


def variance_curve(problem: ErgodicProblem, radii, M: int = 1000,
                   functional: TestFunctional | None = None, min_replicas: int = 200,
                   keep_samples: bool = False) -> ErgodicReport:
    """V(R) on a shared replica set with standard errors and the decay verdict."""
    if M < min_replicas:
        raise ValueError(f"M = {M} replicas is below the minimum {min_replicas} for the ratio test")
    functional = functional or TestFunctional()
    radii = np.asarray(sorted(radii), dtype=float)
    A, first = sample_averages(problem, radii, M, functional)
    V, se, ratios, ratio_se = variance_stats(A)
    return ErgodicReport(radii, first.mean(axis=0), V, se, ratios, ratio_se, M,
                         functional="*".join(functional.names),
                         samples=A if keep_samples else None)


@dataclass
class FirstOrderReport:
    radii: np.ndarray
    mse: np.ndarray
    stderr: np.ndarray
    ratios: np.ndarray

    @property
    def decaying(self) -> bool:
        return bool(np.all(self.mse == 0) or np.all(self.ratios < DECAY_THRESHOLD))


def first_order_check(problem: ErgodicProblem, radii, M: int = 1000) -> FirstOrderReport:
    """E[(A(R) - 1)²] for the plain ball average of u along the radius ladder."""
    radii = np.asarray(sorted(radii), dtype=float)
    _, first = sample_averages(problem, radii, M)
    sq = (first - 1.0) ** 2
    mse = sq.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = mse[1:] / mse[:-1]
    return FirstOrderReport(radii, mse, sq.std(axis=0, ddof=1) / math.sqrt(M), ratios)


@dataclass(frozen=True)
class CovarianceEstimate:
    value: float
    stderr: float
    M: int


def sample_covariance(a: np.ndarray, b: np.ndarray) -> CovarianceEstimate:
    M = len(a)
    prod = (a - a.mean()) * (b - b.mean())
    return CovarianceEstimate(float(prod.sum() / (M - 1)), float(prod.std(ddof=1) / math.sqrt(M)), M)


def functional_covariance(problem: ErgodicProblem, x, y, functional: TestFunctional | None = None,
                          M: int = 2000, max_cells: int = 2**16) -> CovarianceEstimate:
    """Cov(ℛ(x), ℛ(y)) over independent replicas."""
    grid = problem.grid
    if math.prod(grid.shape) > max_cells:
        raise ValueError(f"grid of {math.prod(grid.shape)} cells exceeds the limit {max_cells}")
    functional = functional or TestFunctional()
    ix, iy = grid.index_of(x), grid.index_of(y)

    def reduce(state):
        vals = functional(state.u, grid.d)
        return np.stack([vals[(slice(None),) + ix], vals[(slice(None),) + iy]], axis=-1)

    out = solve(grid, problem.cov, problem.sigma, problem.seed, M, scheme=problem.scheme,
                threads=problem.threads, reduce=reduce)
    return sample_covariance(out[:, 0], out[:, 1])


@dataclass
class FieldMoments:
    mean: np.ndarray  # pointwise over replicas
    var: np.ndarray
    torus_means: np.ndarray  # per-replica spatial mean over the whole grid
    M: int

    @property
    def mean_stderr(self) -> float:
        return float(self.torus_means.std(ddof=1) / math.sqrt(self.M))


def field_moments(problem: ErgodicProblem, M: int) -> FieldMoments:
    """Pointwise mean and variance of u(T, ·) accumulated chunk by chunk."""
    grid = problem.grid
    cells = math.prod(grid.shape)

    def reduce(state):
        flat = state.u.reshape(len(state.u), cells)
        head = np.stack([flat.sum(axis=0), (flat**2).sum(axis=0)]).ravel()
        means = np.zeros(M)
        means[: len(flat)] = flat.mean(axis=1)
        return np.concatenate([[len(flat)], head, means])[None]

    parts = solve(grid, problem.cov, problem.sigma, problem.seed, M, scheme=problem.scheme,
                  threads=problem.threads, reduce=reduce)
    counts = parts[:, 0].astype(int)
    sums = parts[:, 1 : 1 + 2 * cells].sum(axis=0).reshape(2, cells)
    torus = np.concatenate([row[1 + 2 * cells : 1 + 2 * cells + c] for row, c in zip(parts, counts)])
    mean = sums[0] / M
    var = (sums[1] - M * mean**2) / (M - 1)
    return FieldMoments(mean.reshape(grid.shape), var.reshape(grid.shape), torus, M)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaAverageProfile:
    radii: np.ndarray
    values: np.ndarray

    @property
    def vanishes(self) -> bool:
        """Strictly decreasing with the last value below half the first."""
        v = self.values
        return bool(np.all(np.diff(v) < 0) and v[-1] < 0.5 * v[0])


def gamma_average_profile(cov: CovarianceSpec, radii) -> GammaAverageProfile:
    """Ball averages of γ along ``radii``; only defined for function kernels."""
    if not cov.is_function:
        raise ValueError(f"{cov.label} is not a function kernel")
    radii = np.asarray(radii, dtype=float)
    return GammaAverageProfile(radii, np.array([gamma_ball_average(cov, R) for R in radii]))


def atom_plateau(c: float, t: float) -> float:
    """Var of ∫_0^t (t - s) √c dB_s: the V(R) plateau of the Atom model, σ ≡ 1."""
    return c * t**3 / 3
