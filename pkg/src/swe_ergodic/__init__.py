"""Monte-Carlo toolkit for stochastic wave equations in d = 1, 2, 3.

Simulates  u_tt = Δu + σ(u) Ẇ  on a periodic lattice with u(0) = 1, u_t(0) = 0,
where Ẇ is Gaussian, white in time and spatially homogeneous, and provides the
numerical checks around spatial ergodicity of x ↦ u(t, x).
"""

__version__ = "0.1.0"

from .grid import GridSpec
from .noise import CovarianceSpec, dalang_check, periodize_spectrum
from .solver import SigmaSpec, solve

__all__ = [
    "GridSpec",
    "CovarianceSpec",
    "SigmaSpec",
    "dalang_check",
    "periodize_spectrum",
    "solve",
    "__version__",
]
