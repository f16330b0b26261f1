import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from swe_ergodic.grid import GridSpec
from swe_ergodic.kernels import discretize_kernel
from swe_ergodic.noise import CovarianceSpec, noise_history, periodize_spectrum
from swe_ergodic.solver import (
    KernelBank,
    SigmaSpec,
    SolverDivergence,
    free_wave,
    picard_increments,
    picard_iterate,
    run_duhamel,
    solve,
    solve_oracle_d1,
)

WHITE1 = CovarianceSpec.white(1)


def _noise(grid, cov, M, seed=0):
    return noise_history(periodize_spectrum(cov, grid), seed, range(M))


# ---------------------------------------------------------------- σ


@given(name=st.sampled_from(["constant", "zero", "affine", "linear", "sin"]),
       a=st.floats(-50, 50), b=st.floats(-50, 50))
def test_sigma_lipschitz(name, a, b):
    s = SigmaSpec(name)
    lhs = abs(float(s(np.array([a]))[0] - s(np.array([b]))[0]))
    assert lhs <= s.lipschitz * abs(a - b) + 1e-12


@given(name=st.sampled_from(["constant", "zero", "affine", "linear", "sin"]),
       m=st.floats(-10, 10), delta=st.floats(-1, 1))
def test_sigma_split_matches_direct_difference(name, m, delta):
    s = SigmaSpec(name)
    plus, minus = s(np.array([m + delta / 2])), s(np.array([m - delta / 2]))
    diff, tot = s.split(np.array([m]), np.array([delta]))
    assert diff[0] == pytest.approx(plus[0] - minus[0], abs=1e-12)
    assert tot[0] == pytest.approx(plus[0] + minus[0], abs=1e-12)


def test_sigma_names():
    assert SigmaSpec("affine").fixes_one and SigmaSpec("zero").fixes_one
    assert not SigmaSpec("linear").fixes_one
    with pytest.raises(ValueError):
        SigmaSpec("cube")


# ---------------------------------------------------------------- trivial solutions


@pytest.mark.parametrize("scheme", ["trig", "duhamel"])
@pytest.mark.parametrize("d, cov", [(1, WHITE1), (2, CovarianceSpec.riesz(2, 1.0))])
@pytest.mark.parametrize("sigma", ["affine", "zero"])
def test_fixed_point_is_exact(scheme, d, cov, sigma):
    g = GridSpec(d, 8.0, 32, 0.25, 1.0)
    u = solve(g, cov, SigmaSpec(sigma), seed=1, replicas=3, scheme=scheme).u
    assert np.array_equal(u, np.ones_like(u))


def test_refuses_without_dalang():
    with pytest.raises(ValueError, match="Dalang"):
        solve(GridSpec(2, 8.0, 16, 0.5, 1.0), CovarianceSpec.white(2), SigmaSpec("linear"))


def test_divergence_reported():
    g = GridSpec(1, 4.0, 16, 0.25, 1.0)
    noise = np.full((1, g.n_steps) + g.shape, np.nan)
    with pytest.raises(SolverDivergence):
        solve(g, WHITE1, SigmaSpec("linear"), noise=noise)
    with pytest.raises(SolverDivergence):
        solve(g, WHITE1, SigmaSpec("linear"), noise=noise, scheme="duhamel")


# ---------------------------------------------------------------- determinism


def test_reproducible_and_thread_invariant():
    g = GridSpec(2, 8.0, 16, 0.5, 1.0)
    cov = CovarianceSpec.bump(2, 0.5)
    a = solve(g, cov, SigmaSpec("sin"), seed=4, replicas=10).u
    b = solve(g, cov, SigmaSpec("sin"), seed=4, replicas=10, threads=4, chunk_size=3).u
    c = solve(g, cov, SigmaSpec("sin"), seed=4, replicas=[7]).u
    assert np.array_equal(a, b)
    assert np.array_equal(a[7], c[0])
    assert not np.array_equal(a, solve(g, cov, SigmaSpec("sin"), seed=5, replicas=10).u)


def test_reduce_concatenates_chunks():
    g = GridSpec(1, 4.0, 16, 0.25, 1.0)
    full = solve(g, WHITE1, SigmaSpec("linear"), replicas=7).u
    red = solve(g, WHITE1, SigmaSpec("linear"), replicas=7, chunk_size=2, threads=2,
                reduce=lambda s: s.u[:, 0])
    assert np.array_equal(red, full[:, 0])


# ---------------------------------------------------------------- scheme agreement


@pytest.mark.parametrize("d, N", [(1, 64), (2, 32)])
def test_fft_and_direct_convolution_agree(d, N):
    g = GridSpec(d, 8.0, N, 0.25, 1.0)
    cov = CovarianceSpec.bump(d, 0.5)
    nz = _noise(g, cov, 3)
    a = run_duhamel(g, SigmaSpec("sin"), nz, KernelBank(g, conv="fft"))
    b = run_duhamel(g, SigmaSpec("sin"), nz, KernelBank(g, conv="direct"))
    assert np.abs(a - b).max() < 1e-12


@pytest.mark.parametrize("sigma", ["linear", "sin", "constant"])
def test_duhamel_matches_dense_oracle(sigma):
    g = GridSpec(1, 8.0, 64, 0.125, 1.0)
    nz = _noise(g, WHITE1, 4, seed=9)
    a = solve(g, WHITE1, SigmaSpec(sigma), replicas=4, noise=nz, scheme="duhamel").u
    b = solve_oracle_d1(g, WHITE1, SigmaSpec(sigma), replicas=4, noise=nz).u
    assert np.abs(a - b).max() < 1e-11


def test_oracle_limits():
    with pytest.raises(ValueError):
        solve_oracle_d1(GridSpec(2, 4.0, 8, 0.5, 1.0), CovarianceSpec.bump(2, 1.0), SigmaSpec("linear"))
    with pytest.raises(ValueError):
        solve_oracle_d1(GridSpec(1, 64.0, 1024, 0.0625, 1.0), WHITE1, SigmaSpec("linear"))


# ---------------------------------------------------------------- statistics


def test_mean_is_preserved():
    g = GridSpec(1, 16.0, 128, 0.125, 1.0)
    u = solve(g, WHITE1, SigmaSpec("linear"), seed=2, replicas=400).u
    per_path = u.mean(axis=1)
    assert abs(per_path.mean() - 1.0) < 4 * per_path.std(ddof=1) / math.sqrt(len(per_path))


def test_trig_additive_variance_discrete_value():
    # left-point trig scheme: Var = T²/4 (1 + 1/n) for white noise in d = 1 (T = 1, n = 8)
    g = GridSpec(1, 8.0, 64, 0.125, 1.0)
    u = solve(g, WHITE1, SigmaSpec("constant"), seed=3, replicas=2000).u
    w2 = ((u - 1.0) ** 2).mean(axis=1)
    se = w2.std(ddof=1) / math.sqrt(len(w2))
    assert abs(w2.mean() - 0.28125) < 4 * se


def test_additive_covariance_lags_triangle_overlap():
    # Cov(u(t,x), u(t,x+h)) = (t - |h|/2)² / 4 for white noise, d = 1
    g = GridSpec(1, 8.0, 512, 1 / 64, 1.0)
    w = solve(g, WHITE1, SigmaSpec("constant"), seed=5, replicas=400).u - 1.0
    for h in (0.0, 0.25, 0.5, 1.0, 1.5):
        lag = int(round(h / g.dx))
        prod = (w * np.roll(w, -lag, axis=1)).mean(axis=1)
        se = prod.std(ddof=1) / math.sqrt(len(prod))
        target = (1.0 - h / 2) ** 2 / 4 * (1 + g.dt)
        assert abs(prod.mean() - target) < 4 * se + 2e-3


def test_stationarity_across_points():
    g = GridSpec(1, 16.0, 128, 0.125, 1.0)
    w = solve(g, CovarianceSpec.bump(1, 0.5), SigmaSpec("sin"), seed=6, replicas=1500).u - 1.0
    pts = np.arange(0, 128, 16)
    var = (w[:, pts] ** 2).mean(axis=0)
    se = (w[:, pts] ** 2).std(axis=0, ddof=1) / math.sqrt(w.shape[0])
    pooled = (w**2).mean()
    assert np.all(np.abs(var - pooled) < 5 * se)


# ---------------------------------------------------------------- free wave


def test_free_wave_dalembert_d1():
    g = GridSpec(1, 16.0, 512, 1 / 32, 1.0)
    x = g.coords()[0]
    f = lambda y: np.exp(-(y**2) / 0.5)
    out = free_wave(g, 1.0 + f(x), 2.0)
    exact = 1.0 + 0.5 * (f(x - 2.0) + f(x + 2.0))
    assert np.abs(out - exact).max() < 0.02


@pytest.mark.parametrize("d", [1, 2, 3])
def test_free_wave_support_and_mass(d):
    N = 64 if d < 3 else 48
    g = GridSpec(d, 8.0 if d < 3 else 6.0, N, 0.125, 1.0)
    u0 = np.ones(g.shape)
    u0[(0,) * d] = 2.0  # cell at the origin
    t = 1.5
    out = free_wave(g, u0, t)
    far = g.radius > t + 2 * g.dx
    assert np.all(out[far] == 1.0)
    assert (out - 1.0).sum() == pytest.approx(1.0, rel=1e-9)


# ---------------------------------------------------------------- Picard ladder


def test_picard_first_level_is_additive():
    g = GridSpec(1, 16.0, 128, 0.125, 1.0)
    nz = _noise(g, WHITE1, 3)
    bank = KernelBank(g, mollifier=2)
    lad = picard_iterate(g, WHITE1, SigmaSpec("linear"), 2, 1, noise=nz, bank=bank)
    add = run_duhamel(g, SigmaSpec("constant"), nz, bank)
    assert np.abs(lad.final(1) - add).max() < 1e-12


def test_picard_terminates_on_the_scheme():
    # the discrete mild equation is a Volterra system: n_steps iterations solve it exactly
    g = GridSpec(1, 16.0, 64, 0.25, 1.0)
    nz = _noise(g, WHITE1, 2, seed=3)
    bank = KernelBank(g, mollifier=2)
    lad = picard_iterate(g, WHITE1, SigmaSpec("sin"), 2, g.n_steps + 1, noise=nz, bank=bank)
    exact = run_duhamel(g, SigmaSpec("sin"), nz, bank)
    assert np.abs(lad.final(g.n_steps) - exact).max() < 1e-12
    inc = picard_increments(lad)
    assert inc[-1] < 1e-12 and np.all(np.diff(inc[:3]) < 0)


def test_picard_cost_guard():
    g = GridSpec(2, 16.0, 128, 1 / 16, 1.0)
    with pytest.raises(ValueError, match="expensive"):
        picard_iterate(g, CovarianceSpec.bump(2, 0.5), SigmaSpec("linear"), 2, 6, replicas=200)


def test_cell_kernel_mass_in_bank():
    g = GridSpec(1, 8.0, 64, 0.125, 1.0)
    k = discretize_kernel(g, 0.5)
    assert k.weights.sum() * g.dx == pytest.approx(0.5)
