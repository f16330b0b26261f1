"""Covariance catalog, Dalang's condition and FFT synthesis of noise increments.

Fourier bookkeeping (used everywhere in the package)
----------------------------------------------------
``F f(ξ) = ∫ exp(-i x·ξ) f(x) dx`` and the spectral measure is ``μ = F γ``, so

    γ(x) = (2π)^{-d} ∫ exp(i x·ξ) μ(dξ),
    ∫∫ f(y) γ(y - z) g(z) dy dz = (2π)^{-d} ∫ F f(ξ) conj(F g(ξ)) μ(dξ).

White noise therefore has μ(dξ) = dξ and a constant covariance γ ≡ c has the
atom c (2π)^d δ_0.  ``SPECTRAL_NORM`` is the single (2π)^{-d} factor; every
routine that turns μ back into a covariance multiplies by it.

On the torus of side L the periodized covariance is realised through the cell
masses S_m = μ(cell around ξ_m), ξ_m = 2πm/L:

    γ_per(x) = SPECTRAL_NORM(d) * Σ_m S_m exp(i ξ_m·x),

truncated to the N^d frequencies the grid resolves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import fft, integrate, special, stats

from .grid import GridSpec, ball_volume, sphere_area

KINDS = ("white", "riesz", "bump", "atom", "fractional")


def SPECTRAL_NORM(d: int) -> float:
    return (2 * np.pi) ** (-d)


def riesz_constant(d: int, beta: float) -> float:
    """c such that F|z|^{-β} = c |ξ|^{β-d} in R^d, 0 < β < d."""
    return (
        math.pi ** (d / 2)
        * 2 ** (d - beta)
        * math.gamma((d - beta) / 2)
        / math.gamma(beta / 2)
    )


@dataclass(frozen=True)
class CovarianceSpec:
    """Spatial covariance γ of the noise together with its spectral measure.

    Use the named constructors (``white``, ``riesz``, ``bump``, ``atom``,
    ``fractional``) rather than filling the fields by hand.
    """

    kind: str
    d: int
    beta: float | None = None
    s: float | None = None
    c: float | None = None
    H: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance model {self.kind!r}; expected one of {KINDS}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.kind == "riesz":
            if self.beta is None or not 0 < self.beta < self.d:
                raise ValueError(f"Riesz exponent must satisfy 0 < beta < d = {self.d}, got {self.beta}")
        elif self.kind == "bump":
            if self.s is None or not self.s > 0:
                raise ValueError(f"bump width must be positive, got {self.s}")
        elif self.kind == "atom":
            if self.c is None or not self.c > 0:
                raise ValueError(f"atom constant must be positive, got {self.c}")
        elif self.kind == "fractional":
            if self.d != 1:
                raise ValueError("fractional noise is defined for d = 1 only")
            if self.H is None or not 0.5 <= self.H < 1:
                raise ValueError(f"Hurst index must lie in [1/2, 1), got {self.H}")

    @classmethod
    def white(cls, d: int) -> "CovarianceSpec":
        return cls("white", d)

    @classmethod
    def riesz(cls, d: int, beta: float) -> "CovarianceSpec":
        return cls("riesz", d, beta=beta)

    @classmethod
    def bump(cls, d: int, s: float) -> "CovarianceSpec":
        return cls("bump", d, s=s)

    @classmethod
    def atom(cls, d: int, c: float) -> "CovarianceSpec":
        return cls("atom", d, c=c)

    @classmethod
    def fractional(cls, H: float) -> "CovarianceSpec":
        return cls("fractional", 1, H=H)

    @property
    def label(self) -> str:
        params = {"riesz": f"beta={self.beta}", "bump": f"s={self.s}",
                  "atom": f"c={self.c}", "fractional": f"H={self.H}"}.get(self.kind, "")
        return f"{self.kind}(d={self.d}{', ' + params if params else ''})"

    @property
    def is_white(self) -> bool:
        return self.kind == "white" or (self.kind == "fractional" and self.H == 0.5)

    @property
    def is_function(self) -> bool:
        """True when γ is a function (everything except δ_0)."""
        return not self.is_white

    @property
    def atom_mass(self) -> float:
        """μ({0})."""
        if self.kind == "atom":
            return self.c * (2 * np.pi) ** self.d
        return 0.0

    @property
    def power_law(self) -> tuple[float, float] | None:
        """(prefactor, exponent) when the spectral density is a power of |ξ|."""
        if self.kind == "riesz":
            return riesz_constant(self.d, self.beta), self.beta - self.d
        if self.kind == "fractional":
            return math.gamma(2 * self.H + 1) * math.sin(math.pi * self.H), 1 - 2 * self.H
        if self.kind == "white":
            return 1.0, 0.0
        return None

    def gamma(self, x):
        """γ evaluated at points x (last axis of length d, or |x| for d = 1)."""
        if self.is_white:
            raise ValueError("white noise covariance is the point mass δ_0, not a function")
        r = _norm(x, self.d)
        if self.kind == "atom":
            return np.full_like(r, self.c, dtype=float)
        if self.kind == "riesz":
            with np.errstate(divide="ignore"):
                return r ** (-self.beta)
        if self.kind == "fractional":
            H = self.H
            with np.errstate(divide="ignore"):
                return H * (2 * H - 1) * r ** (2 * H - 2)
        s = self.s
        return (2 * np.pi * s**2) ** (-self.d / 2) * np.exp(-(r**2) / (2 * s**2))

    def density(self, r):
        """Radial spectral density f(|ξ|) (the atom is reported separately)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "atom":
            return np.zeros_like(r)
        if self.kind == "bump":
            return np.exp(-0.5 * (self.s * r) ** 2)
        pref, expo = self.power_law
        if expo == 0:
            return np.full_like(r, pref)
        with np.errstate(divide="ignore"):
            return pref * r**expo


def _norm(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 or x.ndim == 0:
        return np.abs(x)
    return np.linalg.norm(x, axis=-1)


class SpectralValue(NamedTuple):
    density: float
    atom: float


def spectral_density(cov: CovarianceSpec, xi) -> SpectralValue:
    """Density of μ at ξ plus the atom mass carried by ξ (nonzero only at 0)."""
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("frequency must be finite")
    r = float(_norm(xi, cov.d))
    atom = cov.atom_mass if r == 0 else 0.0
    return SpectralValue(float(cov.density(r)), atom)


@dataclass(frozen=True)
class DalangResult:
    finite: bool
    value: float
    reason: str


def dalang_check(cov: CovarianceSpec) -> DalangResult:
    """Classify and evaluate ∫ μ(dξ) / (1 + |ξ|²)."""
    d = cov.d
    area = sphere_area(d)
    pl = cov.power_law
    if pl is not None:
        pref, expo = pl
        # radial integrand ~ r^{expo+d-1} at 0 and r^{expo+d-3} at infinity
        if expo + d <= 0:
            return DalangResult(False, math.inf, "spectral density not integrable at the origin")
        if expo + d >= 2:
            return DalangResult(
                False, math.inf,
                f"tail divergence: radial integrand decays like r^{expo + d - 3:g}",
            )
    f = lambda r: cov.density(r) * r ** (d - 1) / (1 + r * r)
    if cov.kind == "atom":
        return DalangResult(True, cov.atom_mass, "atom at zero, no density")
    inner, _ = integrate.quad(f, 0, 1, limit=200, epsabs=0, epsrel=1e-10)
    outer, _ = integrate.quad(f, 1, np.inf, limit=200, epsabs=0, epsrel=1e-10)
    return DalangResult(True, area * (inner + outer) + cov.atom_mass, "finite")


def gamma_ball_average(cov: CovarianceSpec, R: float) -> float:
    """(1 / |B_R|) ∫_{B_R} γ(x) dx (γ = δ_0 contributes its unit mass)."""
    if R <= 0:
        raise ValueError("radius must be positive")
    d = cov.d
    if cov.is_white:
        return 1.0 / ball_volume(d, R)
    if cov.kind == "atom":
        return float(cov.c)
    if cov.kind == "riesz":
        return d / (d - cov.beta) * R ** (-cov.beta)
    if cov.kind == "fractional":
        return cov.H * R ** (2 * cov.H - 2)
    return float(stats.chi2.cdf((R / cov.s) ** 2, d)) / ball_volume(d, R)


# --------------------------------------------------------------------------
# torus spectrum


@dataclass(frozen=True)
class PeriodizedSpectrum:
    """Spectral masses S_m of the frequency cells of a grid (FFT layout)."""

    grid: GridSpec
    cov: CovarianceSpec
    weights: np.ndarray = field(repr=False)

    @property
    def zero_weight(self) -> float:
        return float(self.weights[(0,) * self.grid.d])

    @property
    def zero_residue(self) -> float:
        """Density mass in the zero cell: the finite-size part of S_0."""
        return self.zero_weight - self.cov.atom_mass

    def eigenvalues(self, dt: float) -> np.ndarray:
        """Eigenvalues (rfft layout) of the circulant covariance of one increment."""
        N, d = self.grid.N, self.grid.d
        S = self.weights[..., : N // 2 + 1]
        return N**d * dt * SPECTRAL_NORM(d) * S

    def covariance(self, dt: float) -> np.ndarray:
        """E[ΔW(x_j) ΔW(0)] on the grid."""
        return fft.irfftn(self.eigenvalues(dt), s=self.grid.shape)

    def amplitudes(self, dt: float) -> np.ndarray:
        return np.sqrt(self.eigenvalues(dt))


def _gauss_nodes(q):
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


def _zero_cell_power(pref, expo, d, h):
    """∫_{[-h,h]^d} pref |ξ|^expo dξ, via the 2d pyramids over the faces."""
    if d == 1:
        return 2 * pref * h ** (expo + 1) / (expo + 1)
    x, w = _gauss_nodes(64)
    y = h * x
    if d == 2:
        face = h * np.sum(w * (h * h + y * y) ** (expo / 2))
    else:
        Y, Z = np.meshgrid(y, y, indexing="ij")
        face = h * h * np.sum(np.outer(w, w) * (h * h + Y**2 + Z**2) ** (expo / 2))
    return 2 * d * pref * h / (expo + d) * face


def periodize_spectrum(cov: CovarianceSpec, grid: GridSpec) -> PeriodizedSpectrum:
    """Cell-integrated spectral masses on the frequency lattice of ``grid``.

    S_0 keeps the density mass of the zero cell on top of any atom; it is
    never zeroed (that residue shrinks only as L grows).
    """
    if cov.d != grid.d:
        raise ValueError(f"covariance dimension {cov.d} != grid dimension {grid.d}")
    d = grid.d
    h = math.pi / grid.L  # half-width of a frequency cell
    centres = grid.frequencies()

    if cov.kind == "atom":
        S = np.zeros(grid.shape)
        S[(0,) * d] = cov.atom_mass
        return PeriodizedSpectrum(grid, cov, S)

    if cov.kind == "bump":
        a = cov.s / math.sqrt(2)
        per_axis = (math.sqrt(math.pi) / (2 * a)) * (
            special.erf(a * (centres + h)) - special.erf(a * (centres - h))
        )
        S = per_axis
        for _ in range(d - 1):
            S = np.multiply.outer(S, per_axis)
        return PeriodizedSpectrum(grid, cov, np.asarray(S, dtype=float))

    pref, expo = cov.power_law
    cell = (2 * h) ** d
    if expo == 0:
        return PeriodizedSpectrum(grid, cov, np.full(grid.shape, pref * cell))
    if expo + d <= 0:
        raise ValueError("spectral density is not integrable over the zero cell")

    m = np.rint(centres / (2 * h)).astype(int)
    grids = np.meshgrid(*([centres] * d), indexing="ij")
    cheb = np.max(np.abs(np.stack(np.meshgrid(*([m] * d), indexing="ij"))), axis=0)
    S = _tensor_gauss(cov, grids, h, 4)
    near = cheb <= 2
    S[near] = _tensor_gauss(cov, [g[near] for g in grids], h, 16)
    S[(0,) * d] = _zero_cell_power(pref, expo, d, h)
    return PeriodizedSpectrum(grid, cov, S)


def _tensor_gauss(cov, centres, h, q):
    x, w = _gauss_nodes(q)
    d = len(centres)
    out = np.zeros(np.shape(centres[0]))
    for idx in np.ndindex(*(q,) * d):
        r2 = sum((c + h * x[i]) ** 2 for c, i in zip(centres, idx))
        weight = np.prod([w[i] for i in idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            val = cov.density(np.sqrt(r2))
        out += weight * np.where(np.isfinite(val), val, 0.0)
    return out * h**d


# --------------------------------------------------------------------------
# random streams and sampling


def replica_keys(seed: int, replicas) -> np.ndarray:
    """Philox keys, one per replica, derived from (seed, replica)."""
    return np.array(
        [np.random.SeedSequence([int(seed), int(r)]).generate_state(2, dtype=np.uint64)
         for r in replicas],
        dtype=np.uint64,
    ).reshape(-1, 2)


def replica_stream(seed: int, replica: int, step: int, key=None) -> np.random.Generator:
    """Counter-based stream for (seed, replica, step).

    The step index occupies the top counter word, so distinct steps of one
    replica never overlap and the result does not depend on scheduling.
    """
    if key is None:
        key = replica_keys(seed, [replica])[0]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(step)]))


def standard_normals(seed: int, replicas, step: int, shape, keys=None) -> np.ndarray:
    if keys is None:
        keys = replica_keys(seed, replicas)
    out = np.empty((len(keys),) + tuple(shape))
    for i, key in enumerate(keys):
        out[i] = replica_stream(seed, 0, step, key=key).standard_normal(shape)
    return out


@dataclass(frozen=True)
class NoiseSlice:
    """Increment ΔW_k on the grid (leading axis: replicas)."""

    k: int
    values: np.ndarray


def synthesize(spec: PeriodizedSpectrum, dt: float, white: np.ndarray) -> np.ndarray:
    """Colour iid N(0,1) fields (last d axes) into increments of covariance dt·γ_per."""
    d = spec.grid.d
    axes = tuple(range(-d, 0))
    z_hat = fft.rfftn(white, axes=axes)
    return fft.irfftn(z_hat * spec.amplitudes(dt), s=spec.grid.shape, axes=axes)


def sample_noise_slice(spec: PeriodizedSpectrum, dt: float, seed: int, k: int,
                       replicas=(0,), keys=None) -> NoiseSlice:
    """Increment ΔW_k for each replica, from the stream (seed, replica, k)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    white = standard_normals(seed, replicas, k, spec.grid.shape, keys=keys)
    return NoiseSlice(k, synthesize(spec, dt, white))


def noise_history(spec: PeriodizedSpectrum, seed: int, replicas) -> np.ndarray:
    """All increments of a run, shape (replicas, n_steps, *grid.shape)."""
    grid = spec.grid
    keys = replica_keys(seed, replicas)
    out = np.empty((len(keys), grid.n_steps) + grid.shape)
    for k in range(grid.n_steps):
        out[:, k] = sample_noise_slice(spec, grid.dt, seed, k, keys=keys).values
    return out
