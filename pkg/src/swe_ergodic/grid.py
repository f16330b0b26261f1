"""Periodic spatial lattice and uniform time grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Torus [-L/2, L/2)^d with N cells per axis, time grid 0, dt, ..., T.

    Cell centres sit at signed offsets ``j * dx``; array index 0 is the origin
    and negative offsets wrap to the end of each axis (FFT layout).
    """

    d: int
    L: float
    N: int
    dt: float
    T: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 2 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 2, got {self.N}")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T = {self.T} is not a multiple of dt = {self.dt}")

    @classmethod
    def with_default_dt(cls, d: int, L: float, N: int, T: float) -> "GridSpec":
        """Grid with the largest dt <= dx that divides T."""
        dx = L / N
        n_steps = max(1, math.ceil(T / dx - 1e-12)) if T > 0 else 1
        return cls(d=d, L=L, N=N, dt=T / n_steps if T > 0 else dx, T=T)

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def axis_offsets(self) -> np.ndarray:
        """Signed integer offsets of the cells along one axis."""
        j = np.arange(self.N)
        return (j + self.N // 2) % self.N - self.N // 2

    def coords(self) -> list[np.ndarray]:
        """Broadcastable per-axis cell-centre coordinates."""
        x = self.axis_offsets() * self.dx
        out = []
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.N
            out.append(x.reshape(shape))
        return out

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| of every cell centre (periodic distance to the origin)."""
        r2 = sum(c**2 for c in self.coords())
        return np.sqrt(np.broadcast_to(r2, self.shape))

    def frequencies(self) -> np.ndarray:
        """Angular frequencies 2πm/L along one axis, FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.dx)

    def wavenumber(self, real: bool = True) -> np.ndarray:
        """|ξ| on the (r)fft frequency lattice."""
        xi = self.frequencies()
        axes = []
        for axis in range(self.d):
            k = xi
            if real and axis == self.d - 1:
                k = xi[: self.N // 2 + 1].copy()
                k[-1] = abs(k[-1])
            shape = [1] * self.d
            shape[axis] = k.size
            axes.append(k.reshape(shape))
        return np.sqrt(sum(k**2 for k in axes))

    def index_of(self, point) -> tuple[int, ...]:
        """Grid index of the cell whose centre is nearest to ``point``."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.size == 1 and self.d > 1:
            p = np.full(self.d, float(p[0]))
        return tuple(int(round(v / self.dx)) % self.N for v in p)

    def check(self, r_max: float = 0.0) -> list[str]:
        """Violations of the no-wrap and time-step constraints."""
        problems = []
        if self.L < 2 * (r_max + self.T) - 1e-12:
            problems.append(
                f"finite propagation: L = {self.L} < 2 (R_max + T) = {2 * (r_max + self.T)};"
                " the light cone of the averaging ball wraps around the torus"
            )
        if self.dt > self.dx * (1 + 1e-12):
            problems.append(f"time step: dt = {self.dt} exceeds dx = {self.dx}")
        return problems


def ball_volume(d: int, R: float = 1.0) -> float:
    """Volume of the Euclidean ball of radius R in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * R**d


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)
