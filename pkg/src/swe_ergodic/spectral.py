"""Bessel functions, Fourier transforms of ball indicators and spectral integrals.

All integrals against μ use the convention of :mod:`swe_ergodic.noise`; for a
radial integrand F,

    ∫ F(|ξ|) μ(dξ) = μ({0}) F(0) + |S^{d-1}| ∫_0^∞ F(r) f(r) r^{d-1} dr,

evaluated on [0, 1] by adaptive quadrature and on [1, ∞) by Gauss panels that
follow the oscillation of F, plus the averaged asymptotic tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .grid import ball_volume, sphere_area
from .noise import CovarianceSpec, dalang_check

SERIES_CUTOFF = 12.0


def _bessel_series(p, x):
    half = x / 2
    term = half**p / math.gamma(p + 1)
    total = term.copy()
    q = half * half
    for k in range(1, 80):
        term = -term * q / (k * (k + p))
        total += term
    return total


def _bessel_asymptotic(p, x):
    mu = 4 * p * p
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    a = 1.0
    prev = np.full_like(x, np.inf)
    for k in range(1, 60):
        a = a * (mu - (2 * k - 1) ** 2) / (k * 8)
        term = a / x**k
        if a == 0:
            break
        mag = np.abs(term)
        # stop (per point) once the divergent tail starts growing
        live = mag < prev
        term = np.where(live, term, 0.0)
        prev = np.where(live, mag, 0.0)
        sign = -1 if (k // 2) % 2 else 1
        if k % 2 == 0:
            P += sign * term
        else:
            Q += sign * term
    w = x - p * math.pi / 2 - math.pi / 4
    return np.sqrt(2 / (math.pi * x)) * (P * np.cos(w) - Q * np.sin(w))


def bessel_j(p: float, x):
    """J_p(x) for p > 0, x >= 0: power series below 12, Hankel expansion above."""
    if not p > 0:
        raise ValueError("order must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("argument must be nonnegative")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    small = x <= SERIES_CUTOFF
    if small.any():
        out[small] = _bessel_series(p, x[small])
    if (~small).any():
        out[~small] = _bessel_asymptotic(p, x[~small])
    return float(out[0]) if scalar else out


def ball_indicator_ft_sq(d: int, b: float, xi):
    """|F 1_{B_b}(ξ)|² = (2πb)^d |ξ|^{-d} J_{d/2}(b|ξ|)² as a function of |ξ|.

    The removable singularity at ξ = 0 is filled with |B_b|².
    """
    if not b > 0:
        raise ValueError("radius must be positive")
    r = np.abs(np.asarray(xi, dtype=float))
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = np.full_like(r, ball_volume(d, b) ** 2)
    nz = r > 0
    if nz.any():
        rr = r[nz]
        out[nz] = (2 * math.pi * b) ** d * rr ** (-d) * bessel_j(d / 2, b * rr) ** 2
    return float(out[0]) if scalar else out


def ball_ft_closed_form(d: int, b: float, xi):
    """Elementary |F 1_{B_b}|² for d = 1 (sinc) and d = 3 (spherical Bessel j_1)."""
    r = np.abs(np.asarray(xi, dtype=float))
    if np.any(r == 0):
        raise ValueError("closed forms are written for xi != 0")
    x = b * r
    if d == 1:
        return (2 * np.sin(x) / r) ** 2
    if d == 3:
        return (4 * math.pi * (np.sin(x) - x * np.cos(x)) / r**3) ** 2
    raise ValueError("closed forms exist for odd d = 1, 3 only")


def _ball_ft_sq_mean(d, b, r):
    """Oscillation average of ball_indicator_ft_sq for large |ξ|."""
    return (2 * math.pi * b) ** d * r ** (-d) / (math.pi * b * r)


def radial_integral(cov: CovarianceSpec, F, frequency: float, r_max: float = 2000.0,
                    tail=None, nodes: int = 16) -> float:
    """∫ F(|ξ|) μ(dξ) for a radial F oscillating at ``frequency`` in |ξ|.

    ``tail(r)``, if given, is the oscillation-averaged F used beyond r_max.
    """
    d = cov.d
    area = sphere_area(d)
    total = cov.atom_mass * float(np.atleast_1d(F(np.zeros(1)))[0]) if cov.atom_mass else 0.0
    if cov.kind == "atom":
        return total
    radial = lambda r: F(np.atleast_1d(r)) * cov.density(np.atleast_1d(r)) * np.atleast_1d(r) ** (d - 1)
    inner, _ = integrate.quad(lambda r: float(radial(r)[0]), 0, 1, limit=400,
                              epsabs=1e-14, epsrel=1e-11)
    width = math.pi / (2 * max(frequency, 1.0))
    n_panels = int(math.ceil((r_max - 1) / width))
    edges = np.linspace(1.0, r_max, n_panels + 1)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    outer = 0.0
    chunk = 4096
    for s in range(0, n_panels, chunk):
        a = edges[s : min(s + chunk, n_panels)]
        bnd = edges[s + 1 : s + chunk + 1]
        half = 0.5 * (bnd - a)
        pts = (0.5 * (a + bnd))[:, None] + half[:, None] * gx[None, :]
        vals = radial(pts.ravel()).reshape(pts.shape)
        outer += float(np.sum(half * (vals @ gw)))
    rest = 0.0
    if tail is not None:
        rest, _ = integrate.quad(
            lambda r: float(tail(np.atleast_1d(r))[0] * cov.density(r) * r ** (d - 1)),
            r_max, np.inf, limit=200,
        )
    return total + area * (inner + outer + rest)


def u_constant(cov: CovarianceSpec, b: float, r_max: float = 2000.0) -> float:
    """∫ |F 1_{B_b}(ξ)|² μ(dξ); raises when Dalang's condition fails."""
    check = dalang_check(cov)
    if not check.finite:
        raise ValueError(f"Dalang's condition fails for {cov.label}: {check.reason}")
    if b < 0:
        raise ValueError("radius must be nonnegative")
    if b == 0:
        return 0.0
    d = cov.d
    return radial_integral(
        cov,
        lambda r: ball_indicator_ft_sq(d, b, r),
        frequency=b,
        r_max=max(r_max, 200.0 / b),
        tail=lambda r: _ball_ft_sq_mean(d, b, r),
    )


def u_constant_sup(cov: CovarianceSpec, T: float, n_radii: int = 9) -> float:
    """sup over b in [0, T] of :func:`u_constant`, scanned on a uniform b grid."""
    return max(u_constant(cov, b) for b in np.linspace(0.0, T, n_radii))


@dataclass(frozen=True)
class DecayProfile:
    radii: np.ndarray
    values: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return self.values[1:] / self.values[:-1]

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))

    @property
    def constant(self) -> bool:
        return bool(np.allclose(self.values, self.values[0], rtol=1e-12, atol=0))


def riemann_lebesgue_profile(cov: CovarianceSpec, b: float, radii, r_max: float = 400.0) -> DecayProfile:
    """D(R) = ∫ |F 1_{B_1}(Rξ)|² |F 1_{B_b}(ξ)|² μ(dξ) / |B_1|² along ``radii``.

    The oscillatory factor kills every frequency except ξ = 0, so D decays to
    zero exactly when μ has no atom there.
    """
    d = cov.d
    norm = ball_volume(d, 1.0) ** 2
    radii = np.asarray(radii, dtype=float)
    values = []
    for R in radii:
        F = lambda r, R=R: ball_indicator_ft_sq(d, 1.0, R * r) * ball_indicator_ft_sq(d, b, r)
        tail = lambda r, R=R: _ball_ft_sq_mean(d, 1.0, R * r) * _ball_ft_sq_mean(d, b, r)
        values.append(radial_integral(cov, F, frequency=R + b, r_max=r_max, tail=tail) / norm)
    return DecayProfile(radii, np.array(values))
