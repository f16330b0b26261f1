"""Time stepping of the mild equation  u = 1 + ∫∫ G(t-s, x-y) σ(u(s,y)) W(ds,dy).

Three discretizations share one noise array layout ``(replica, step, *grid)``:

* ``trig``    spectral stochastic trigonometric stepper (exact free wave in
              Fourier space, left-point noise); the default, O(n_steps).
* ``duhamel`` history sum with the compact cell kernels of
              :func:`discretize_kernel`; exact discrete light cone, O(n_steps²).
* :func:`solve_oracle_d1`  the same sum written as dense matrix products, d = 1.

Fields are carried as ``1 + w`` so that constant data stay bit-exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .grid import GridSpec
from .kernels import discretize_kernel, mollify_kernel
from .noise import (
    CovarianceSpec,
    PeriodizedSpectrum,
    dalang_check,
    noise_history,
    periodize_spectrum,
    replica_keys,
    sample_noise_slice,
)


class SolverDivergence(RuntimeError):
    """A replica produced a non-finite value."""


@dataclass(frozen=True)
class SigmaSpec:
    """Named Lipschitz nonlinearity σ."""

    name: str

    _TABLE = {
        "constant": (lambda u: np.ones_like(u), lambda u: np.zeros_like(u), 0.0),
        "zero": (lambda u: np.zeros_like(u), lambda u: np.zeros_like(u), 0.0),
        "affine": (lambda u: u - 1.0, lambda u: np.ones_like(u), 1.0),
        "linear": (lambda u: u * 1.0, lambda u: np.ones_like(u), 1.0),
        "sin": (np.sin, np.cos, 1.0),
    }

    def __post_init__(self):
        if self.name not in self._TABLE:
            raise ValueError(f"unknown sigma {self.name!r}; expected one of {sorted(self._TABLE)}")

    def __call__(self, u):
        return self._TABLE[self.name][0](u)

    def derivative(self, u):
        return self._TABLE[self.name][1](u)

    def split(self, m, delta):
        """(σ(m + δ/2) - σ(m - δ/2), σ(m + δ/2) + σ(m - δ/2)) without cancellation."""
        if self.name in ("constant", "zero"):
            c = 2.0 if self.name == "constant" else 0.0
            return np.zeros_like(m), np.full_like(m, c)
        if self.name == "sin":
            return 2 * np.cos(m) * np.sin(delta / 2), 2 * np.sin(m) * np.cos(delta / 2)
        return delta * 1.0, 2 * self(m)

    @property
    def lipschitz(self) -> float:
        return self._TABLE[self.name][2]

    @property
    def fixes_one(self) -> bool:
        """σ(1) = 0, so u ≡ 1 solves the equation."""
        return float(self(np.ones(1))[0]) == 0.0




@dataclass
class SolutionState:
    """Displacement and velocity after ``k`` steps; leading axis = replicas."""

    u: np.ndarray
    v: np.ndarray
    k: int = 0
    replicas: tuple = field(default=(0,))

    @classmethod
    def initial(cls, grid: GridSpec, replicas=(0,)) -> "SolutionState":
        shape = (len(replicas),) + grid.shape
        return cls(np.ones(shape), np.zeros(shape), 0, tuple(replicas))


class TrigPropagator:
    """Fourier multipliers of the free wave group over one step."""

    def __init__(self, grid: GridSpec):
        lam = grid.wavenumber(real=True)
        dt = grid.dt
        self.grid = grid
        self.cos = np.cos(dt * lam)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.sinc = np.where(lam > 0, np.sin(dt * lam) / np.where(lam > 0, lam, 1), dt)
        self.lsin = lam * np.sin(dt * lam)
        self.axes = tuple(range(-grid.d, 0))


def step(state: SolutionState, noise, sigma: SigmaSpec, prop: TrigPropagator) -> SolutionState:
    """One left-point trigonometric step; the noise impulse enters the velocity."""
    dW = noise.values if hasattr(noise, "values") else noise
    if hasattr(noise, "k") and noise.k != state.k:
        raise ValueError(f"noise slice {noise.k} does not match state step {state.k}")
    axes, grid = prop.axes, prop.grid
    w = state.u - 1.0
    forcing = sigma(state.u) * dW
    w_hat = fft.rfftn(w, axes=axes)
    kick = fft.rfftn(state.v, axes=axes) + fft.rfftn(forcing, axes=axes)
    w_new = prop.cos * w_hat + prop.sinc * kick
    v_new = -prop.lsin * w_hat + prop.cos * kick
    u = 1.0 + fft.irfftn(w_new, s=grid.shape, axes=axes)
    v = fft.irfftn(v_new, s=grid.shape, axes=axes)
    _assert_finite(u, state, "displacement")
    return SolutionState(u, v, state.k + 1, state.replicas)


def _assert_finite(u, state, what):
    if not np.all(np.isfinite(u)):
        bad = np.argwhere(~np.all(np.isfinite(u.reshape(u.shape[0], -1)), axis=1)).ravel()
        reps = [state.replicas[i] for i in bad[:5]]
        raise SolverDivergence(f"non-finite {what} at step {state.k + 1} in replicas {reps}")


# --------------------------------------------------------------------------
# Duhamel sums with compact kernels


def _shifts(box):
    """Nonzero (offset, weight) pairs of a centred kernel box."""
    off = (box.shape[0] - 1) // 2
    idx = np.argwhere(box != 0)
    return [(tuple(int(i) - off for i in ix), float(box[tuple(ix)])) for ix in idx]


def convolve_direct(F: np.ndarray, shifts, d: int) -> np.ndarray:
    """Σ_o w_o F(x - o) over the last d (periodic) axes, no FFT round-off leakage."""
    out = np.zeros_like(F)
    axes = tuple(range(-d, 0))
    for o, w in shifts:
        out += w * np.roll(F, o, axis=axes)
    return out


class KernelBank:
    """Discrete kernels K_m ≈ G(m dt) (or G_n) for m = 1..n_steps, ready to convolve."""

    def __init__(self, grid: GridSpec, mollifier: int | None = None, conv: str = "fft"):
        if conv not in ("fft", "direct"):
            raise ValueError("conv must be 'fft' or 'direct'")
        self.grid, self.conv, self.mollifier = grid, conv, mollifier
        self.boxes = {}
        for m in range(1, grid.n_steps + 1):
            kern = discretize_kernel(grid, m * grid.dt)
            box = kern.weights if mollifier is None else mollify_kernel(kern, mollifier).values
            if (box.shape[0] - 1) // 2 > grid.N // 2:
                raise ValueError("kernel support wraps around the torus; enlarge L")
            self.boxes[m] = box
        axes = tuple(range(-grid.d, 0))
        vol = grid.cell_volume
        if conv == "fft":
            from .kernels import fold_onto_grid

            self.hats = {m: fft.rfftn(fold_onto_grid(b, grid), axes=axes) * vol
                         for m, b in self.boxes.items()}
        else:
            self.shifts = {m: [(o, w * vol) for o, w in _shifts(b)] for m, b in self.boxes.items()}

    def history_sum(self, forcing, i):
        """Σ_{j<i} K_{i-j} ⊛ forcing[:, j]  (forcing: replica, step, *grid)."""
        grid = self.grid
        axes = tuple(range(-grid.d, 0))
        if self.conv == "fft":
            acc = 0
            for j in range(i):
                acc = acc + self.hats[i - j] * forcing[:, j]
            return fft.irfftn(acc, s=grid.shape, axes=axes) if i else np.zeros(
                (forcing.shape[0],) + grid.shape)
        out = np.zeros((forcing.shape[0],) + grid.shape)
        for j in range(i):
            out += convolve_direct(forcing[:, j], self.shifts[i - j], grid.d)
        return out


def run_duhamel(grid: GridSpec, sigma: SigmaSpec, noise: np.ndarray, bank: KernelBank,
                keep_history: bool = False):
    """u(t_i) = 1 + Σ_{j<i} K_{i-j} ⊛ σ(u(t_j)) ΔW_j for i = 1..n_steps."""
    M, n = noise.shape[0], grid.n_steps
    axes = tuple(range(-grid.d, 0))
    u = np.ones((M,) + grid.shape)
    history = [u] if keep_history else None
    store = np.empty((M, n) + (grid.shape if bank.conv == "direct" else
                               bank.hats[1].shape), dtype=float if bank.conv == "direct" else complex)
    for i in range(1, n + 1):
        f = sigma(u) * noise[:, i - 1]
        store[:, i - 1] = f if bank.conv == "direct" else fft.rfftn(f, axes=axes)
        u = 1.0 + bank.history_sum(store, i)
        if not np.all(np.isfinite(u)):
            raise SolverDivergence(f"non-finite displacement at step {i}")
        if keep_history:
            history.append(u)
    return np.stack(history, axis=1) if keep_history else u


def solve_oracle_d1(grid: GridSpec, cov: CovarianceSpec, sigma: SigmaSpec, seed: int = 0,
                    replicas=1, noise: np.ndarray | None = None) -> SolutionState:
    """Brute-force Riemann sum of the mild equation in d = 1 (dense matrices)."""
    if grid.d != 1:
        raise ValueError("the brute-force oracle is one-dimensional")
    if grid.N > 512 or grid.n_steps > 512:
        raise ValueError("oracle limited to N <= 512 and n_steps <= 512")
    reps = _replica_tuple(replicas)
    if noise is None:
        noise = noise_history(periodize_spectrum(cov, grid), seed, reps)
    N, n, dx = grid.N, grid.n_steps, grid.dx
    diff = (np.arange(N)[:, None] - np.arange(N)[None, :] + N // 2) % N - N // 2
    mats = {}
    for m in range(1, n + 1):
        kern = discretize_kernel(grid, m * grid.dt)
        G = np.zeros((N, N))
        inside = np.abs(diff) <= kern.offset
        G[inside] = kern.weights[diff[inside] + kern.offset]
        mats[m] = G * dx
    u_hist = [np.ones((len(reps), N))]
    for i in range(1, n + 1):
        u = np.ones((len(reps), N))
        for j in range(i):
            u = u + (sigma(u_hist[j]) * noise[:, j]) @ mats[i - j].T
        u_hist.append(u)
    return SolutionState(u_hist[-1], np.full_like(u_hist[-1], np.nan), n, reps)


def free_wave(grid: GridSpec, u0: np.ndarray, t: float, v0: np.ndarray | None = None) -> np.ndarray:
    """Deterministic wave at time t from (u0, v0): ∂_t G(t) ⊛ u0 + G(t) ⊛ v0.

    ∂_t G is the centred difference of the compact cell kernels with step dx/2,
    so every output cell lies within t + dx of some input cell.
    """
    h = grid.dx / 2
    vol = grid.cell_volume

    def kernel(tau):
        return discretize_kernel(grid, tau).weights if tau > 0 else None

    hi, lo = kernel(t + h), kernel(max(t - h, 0.0))
    box = hi.copy()
    if lo is not None:
        pad = (hi.shape[0] - lo.shape[0]) // 2
        box[(slice(pad, pad + lo.shape[0]),) * grid.d] -= lo
    if t - h < 0:
        # G(0) = 0 and ∂_t G(0) = δ_0 : one-sided difference that keeps δ mass
        box = hi / (t + h)
    else:
        box = box / (2 * h)
    delta = u0 - 1.0
    out = 1.0 + convolve_direct(delta[None], [(o, w * vol) for o, w in _shifts(box)], grid.d)[0]
    if v0 is not None:
        out += convolve_direct(v0[None], [(o, w * vol) for o, w in _shifts(kernel(t))], grid.d)[0]
    return out


# --------------------------------------------------------------------------
# orchestration


def _replica_tuple(replicas):
    if isinstance(replicas, (int, np.integer)):
        return tuple(range(int(replicas)))
    return tuple(int(r) for r in replicas)


def _chunks(reps, size):
    return [reps[i : i + size] for i in range(0, len(reps), size)]


def run_trig(grid, spectrum, sigma, seed, reps, noise=None, prop=None) -> SolutionState:
    prop = prop or TrigPropagator(grid)
    state = SolutionState.initial(grid, reps)
    keys = replica_keys(seed, reps) if noise is None else None
    for k in range(grid.n_steps):
        dW = noise[:, k] if noise is not None else sample_noise_slice(
            spectrum, grid.dt, seed, k, keys=keys).values
        state = step(state, dW, sigma, prop)
    return state


def solve(grid: GridSpec, cov: CovarianceSpec, sigma: SigmaSpec, seed: int = 0, replicas=1, *,
          scheme: str = "trig", noise: np.ndarray | None = None, conv: str = "fft",
          spectrum: PeriodizedSpectrum | None = None, threads: int = 1,
          chunk_size: int | None = None, reduce=None, check_dalang: bool = True):
    """Run independent replicas to time T.

    Replica r always consumes the noise stream (seed, r, ·), so results do not
    depend on ``threads`` or ``chunk_size``.  With ``reduce`` each chunk's
    final :class:`SolutionState` is mapped through it and the per-chunk
    results are concatenated (arrays) instead of keeping every field.
    """
    if isinstance(sigma, str):
        sigma = SigmaSpec(sigma)
    if check_dalang and not dalang_check(cov).finite:
        raise ValueError(f"Dalang's condition fails for {cov.label}")
    if scheme not in ("trig", "duhamel"):
        raise ValueError("scheme must be 'trig' or 'duhamel'")
    reps = _replica_tuple(replicas)
    spectrum = spectrum or periodize_spectrum(cov, grid)
    if chunk_size is None:
        chunk_size = max(1, min(len(reps), 2**21 // max(1, math.prod(grid.shape))))
    if noise is not None and len(noise) != len(reps):
        raise ValueError("noise array must have one row per replica")
    bank = KernelBank(grid, conv=conv) if scheme == "duhamel" else None
    prop = TrigPropagator(grid) if scheme == "trig" else None
    starts = list(range(0, len(reps), chunk_size))

    def work(start):
        chunk = reps[start : start + chunk_size]
        nz = None if noise is None else noise[start : start + chunk_size]
        if scheme == "trig":
            state = run_trig(grid, spectrum, sigma, seed, chunk, noise=nz, prop=prop)
        else:
            if nz is None:
                nz = noise_history(spectrum, seed, chunk)
            u = run_duhamel(grid, sigma, nz, bank)
            state = SolutionState(u, np.full_like(u, np.nan), grid.n_steps, chunk)
        return reduce(state) if reduce is not None else state

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    if reduce is not None:
        return np.concatenate([np.asarray(p) for p in parts], axis=0)
    return SolutionState(
        np.concatenate([p.u for p in parts]),
        np.concatenate([p.v for p in parts]),
        grid.n_steps,
        reps,
    )


# --------------------------------------------------------------------------
# Picard ladder for the mollified equation


@dataclass
class PicardLadder:
    """Iterates u_{n,0..k} on the whole time grid: shape (k+1, replica, step+1, *grid)."""

    n: int
    fields: np.ndarray

    @property
    def depth(self) -> int:
        return self.fields.shape[0] - 1

    def final(self, level: int) -> np.ndarray:
        return self.fields[level, :, -1]


def picard_iterate(grid: GridSpec, cov: CovarianceSpec, sigma: SigmaSpec, n: int, k: int,
                   seed: int = 0, replicas=1, *, noise: np.ndarray | None = None,
                   conv: str = "fft", max_cost: float = 2e9, bank: KernelBank | None = None
                   ) -> PicardLadder:
    """u_{n,0} ≡ 1, u_{n,j+1} = 1 + Σ G_n ⊛ σ(u_{n,j}) ΔW on one frozen noise array."""
    if isinstance(sigma, str):
        sigma = SigmaSpec(sigma)
    reps = _replica_tuple(replicas)
    cells = math.prod(grid.shape)
    cost = k * grid.n_steps**2 * cells * max(1.0, math.log2(cells)) * len(reps)
    if grid.d >= 2 and cost > max_cost:
        raise ValueError(f"Picard ladder too expensive (~{cost:.2e} operations > {max_cost:.2e})")
    if noise is None:
        noise = noise_history(periodize_spectrum(cov, grid), seed, reps)
    bank = bank or KernelBank(grid, mollifier=n, conv=conv)
    axes = tuple(range(-grid.d, 0))
    M, steps = noise.shape[0], grid.n_steps
    current = np.ones((M, steps + 1) + grid.shape)
    ladder = [current]
    for _ in range(k):
        forcing = sigma(current[:, :-1]) * noise
        if bank.conv == "fft":
            forcing = fft.rfftn(forcing, axes=axes)
        nxt = np.empty_like(current)
        nxt[:, 0] = 1.0
        for i in range(1, steps + 1):
            nxt[:, i] = 1.0 + bank.history_sum(forcing, i)
        ladder.append(nxt)
        current = nxt
    return PicardLadder(n, np.stack(ladder))


def picard_increments(ladder: PicardLadder) -> np.ndarray:
    """sup over (t, x) of ‖u_{n,k+1} - u_{n,k}‖₂ (replica mean) for k = 0..depth-1."""
    diffs = np.diff(ladder.fields, axis=0)
    l2 = np.sqrt(np.mean(diffs**2, axis=1))
    return l2.reshape(l2.shape[0], -1).max(axis=1)
