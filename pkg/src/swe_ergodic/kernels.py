"""Fundamental solution of the wave equation and its mollification on a grid.

Discrete kernels store *densities*: ``sum(weights) * dx**d`` approximates the
total mass G(t, R^d) = t.  In d = 1, 2 mass falling in a cell whose centre lies
outside the closed ball of radius t is moved to a neighbouring cell inside it,
so the discrete kernel never reaches beyond the light cone (chains of kernels
then have exactly additive support radii).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, signal

from .grid import GridSpec, sphere_area

MOLLIFIER_RADIUS = 1.0  # support radius a of the bump ψ


class ShellDensity(NamedTuple):
    """G(t, ·) in d = 3: surface density ``density`` on the sphere of ``radius``."""

    radius: float
    density: float


def _check_dim(d):
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")


def green_value(d: int, t: float, x):
    """Pointwise value of G(t, x); for d = 3 the shell descriptor instead."""
    _check_dim(d)
    if not t > 0:
        raise ValueError("time must be positive")
    if d == 3:
        return ShellDensity(t, 1.0 / (4 * math.pi * t))
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    if r >= t:
        return 0.0
    if d == 1:
        return 0.5
    return 1.0 / (2 * math.pi * math.sqrt(t * t - r * r))


def green_mass(d: int, t: float) -> float:
    """G(t, R^d), which equals t in every dimension."""
    _check_dim(d)
    if t < 0:
        raise ValueError("time must be nonnegative")
    return float(t)


@dataclass(frozen=True)
class WaveKernel:
    """G(t, ·) as cell densities on the box of offsets [-offset, offset]^d."""

    d: int
    t: float
    dx: float
    weights: np.ndarray = field(repr=False)

    @property
    def offset(self) -> int:
        return (self.weights.shape[0] - 1) // 2

    @property
    def mass(self) -> float:
        return float(self.weights.sum() * self.dx**self.d)

    def radii(self) -> np.ndarray:
        return _box_radii(self.d, self.offset, self.dx)

    @property
    def support_radius(self) -> float:
        nz = self.weights != 0
        return float(self.radii()[nz].max()) if nz.any() else 0.0

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        return fold_onto_grid(self.weights, grid)

    def to_bytes(self) -> bytes:
        """Little-endian header (d, t, dx, offset) followed by float64 weights."""
        header = struct.pack("<qddq", self.d, self.t, self.dx, self.offset)
        return header + self.weights.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "WaveKernel":
        d, t, dx, offset = struct.unpack_from("<qddq", blob)
        side = 2 * offset + 1
        w = np.frombuffer(blob, dtype="<f8", offset=struct.calcsize("<qddq"))
        return cls(d, t, dx, w.reshape((side,) * d).astype(float))


@dataclass(frozen=True)
class MollifiedKernel:
    """G_n(t, ·) = G(t, ·) * ψ_n sampled on cell centres."""

    kernel: WaveKernel
    n: int
    a: float
    values: np.ndarray = field(repr=False)

    @property
    def d(self):
        return self.kernel.d

    @property
    def t(self):
        return self.kernel.t

    @property
    def dx(self):
        return self.kernel.dx

    @property
    def offset(self) -> int:
        return (self.values.shape[0] - 1) // 2

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.dx**self.d)

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def psi_sup(self) -> float:
        """‖ψ_n‖_∞ = (n/a)^d ψ(0)."""
        return (self.n / self.a) ** self.d * bump(self.d, np.zeros(1))[0]

    def radii(self) -> np.ndarray:
        return _box_radii(self.d, self.offset, self.dx)

    @property
    def support_radius(self) -> float:
        nz = self.values != 0
        return float(self.radii()[nz].max()) if nz.any() else 0.0

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        return fold_onto_grid(self.values, grid)

    def to_bytes(self) -> bytes:
        header = struct.pack("<qddq", self.d, self.t, self.dx, self.offset)
        return header + self.values.astype("<f8").tobytes()


def _box_radii(d, offset, dx):
    o = np.arange(-offset, offset + 1) * dx
    mesh = np.meshgrid(*([o] * d), indexing="ij")
    return np.sqrt(sum(m**2 for m in mesh))


def fold_onto_grid(box: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Wrap a centred box of cell values onto the periodic grid (index 0 = origin)."""
    d = box.ndim
    offset = (box.shape[0] - 1) // 2
    out = np.zeros(grid.shape)
    idx = np.arange(-offset, offset + 1) % grid.N
    if box.shape[0] <= grid.N:
        out[np.ix_(*([idx] * d))] = box
    else:
        np.add.at(out, np.ix_(*([idx] * d)), box)
    return out


# --------------------------------------------------------------------------


def discretize_kernel(grid: GridSpec, t: float) -> WaveKernel:
    """Cell densities of G(t, ·) on ``grid``."""
    d, dx = grid.d, grid.dx
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t > grid.L / 2 + 1e-12:
        raise ValueError(f"light cone of radius {t} wraps around the torus of side {grid.L}")
    if t == 0:
        return WaveKernel(d, 0.0, dx, np.zeros((1,) * d))
    if d == 3 and dx > t / 4:
        raise ValueError(f"grid too coarse to resolve the shell: dx = {dx} > t/4 = {t / 4}")

    offset = int(math.ceil(t / dx)) + 1
    if d == 1:
        w = _cells_1d(t, dx, offset)
    elif d == 2:
        w = _cells_2d(t, dx, offset)
    else:
        return WaveKernel(3, float(t), dx, _shell_3d(t, dx, offset))
    return WaveKernel(d, float(t), dx, _pull_inside(w, t, dx))


def _cells_1d(t, dx, offset):
    o = np.arange(-offset, offset + 1) * dx
    lo = np.maximum(o - dx / 2, -t)
    hi = np.minimum(o + dx / 2, t)
    return 0.5 * np.clip(hi - lo, 0, None) / dx


def _arcsin_primitive(x, y, t):
    """∫_0^y dy' / sqrt(t² - x² - y'²) for |x| < t (clipped at the disc edge)."""
    a = np.sqrt(np.maximum(t * t - x * x, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(a > 0, y / a, np.sign(y))
    return np.arcsin(np.clip(ratio, -1.0, 1.0))


def _cells_2d(t, dx, offset):
    """Cell masses of 1/(2π sqrt(t² - |x|²)): exact in y, Gauss in x between kinks."""
    edges = (np.arange(-offset, offset + 2) - 0.5) * dx
    gx, gw = np.polynomial.legendre.leggauss(12)
    side = 2 * offset + 1
    mass = np.zeros((side, side))
    kinks = np.sqrt(np.maximum(t * t - edges**2, 0.0))
    kinks = np.concatenate([kinks, -kinks, [t, -t]])
    for i in range(side):
        x0, x1 = max(edges[i], -t), min(edges[i + 1], t)
        if x1 <= x0:
            continue
        cuts = np.unique(np.concatenate([[x0, x1], kinks[(kinks > x0) & (kinks < x1)]]))
        col = np.zeros(side + 1)
        for a, b in zip(cuts[:-1], cuts[1:]):
            xs = 0.5 * (b - a) * gx + 0.5 * (a + b)
            F = _arcsin_primitive(xs[:, None], edges[None, :], t)
            col += 0.5 * (b - a) * (gw @ F)
        mass[i] = np.diff(col)
    return mass / (2 * math.pi) / dx**2


def _shell_3d(t, dx, offset):
    """Fibonacci-lattice area elements of the sphere |x| = t binned to cells."""
    n_pts = max(10_000, int(50 * 4 * math.pi * (t / dx) ** 2))
    k = np.arange(n_pts) + 0.5
    z = 1 - 2 * k / n_pts
    phi = math.pi * (1 + math.sqrt(5)) * k
    rho = np.sqrt(1 - z * z)
    pts = t * np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    idx = np.rint(pts / dx).astype(int) + offset
    side = 2 * offset + 1
    counts = np.zeros((side,) * 3)
    np.add.at(counts, tuple(idx.T), 1.0)
    return counts * (t / n_pts) / dx**3


def _pull_inside(w, t, dx):
    """Move densities of cells centred outside |x| <= t to an inner neighbour."""
    d = w.ndim
    offset = (w.shape[0] - 1) // 2
    r = _box_radii(d, offset, dx)
    outside = (w != 0) & (r > t * (1 + 1e-12))
    if not outside.any():
        return w
    w = w.copy()
    src = np.argwhere(outside)
    vals = w[outside]
    w[outside] = 0.0
    o = src - offset
    norm = np.sqrt((o**2).sum(axis=1)) * dx
    target = np.trunc(o * (t / norm)[:, None]).astype(int) + offset
    np.add.at(w, tuple(target.T), vals)
    return w


# --------------------------------------------------------------------------


def _bump_normalizer(d: int) -> float:
    val, _ = integrate.quad(lambda r: r ** (d - 1) * math.exp(-1 / (1 - r * r)), 0, 1)
    return sphere_area(d) * val


_BUMP_Z = {d: _bump_normalizer(d) for d in (1, 2, 3)}


def bump(d: int, r) -> np.ndarray:
    """ψ at radius r: exp(-1/(1 - r²)) on the unit ball, unit integral."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1
    out[inside] = np.exp(-1 / (1 - r[inside] ** 2))
    return out / _BUMP_Z[d]


def mollify_kernel(kernel: WaveKernel, n: int, a: float = MOLLIFIER_RADIUS) -> MollifiedKernel:
    """Sample G_n(t, x) = ∫ G(t, dy) ψ_n(x - y) on the grid of ``kernel``."""
    if n < 1:
        raise ValueError("mollifier index must be >= 1")
    d, dx = kernel.d, kernel.dx
    width = a / n
    if width < 2 * dx:
        raise ValueError(f"mollifier width a/n = {width} is below 2 dx = {2 * dx}")
    m = int(math.ceil(width / dx))
    psi = (n / a) ** d * bump(d, _box_radii(d, m, dx) * n / a)
    method = "direct" if d < 3 else "fft"
    values = signal.convolve(kernel.weights, psi, mode="full", method=method) * dx**d
    if method == "fft":
        values[np.abs(values) < 1e-13 * np.abs(values).max()] = 0.0
    return MollifiedKernel(kernel, n, a, values)
