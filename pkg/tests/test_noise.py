import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from swe_ergodic.grid import GridSpec, ball_volume, sphere_area
from swe_ergodic.noise import (
    CovarianceSpec,
    dalang_check,
    gamma_ball_average,
    noise_history,
    periodize_spectrum,
    replica_keys,
    riesz_constant,
    sample_noise_slice,
    spectral_density,
    standard_normals,
)


def _fourier_riesz_d1(beta, xi=1.0):
    # ∫ e^{-ixξ}|x|^{-β} dx = 2 ∫_0^∞ cos(xξ) x^{-β} dx, QAWF on the tail
    head, _ = integrate.quad(lambda x: math.cos(x * xi), 0, 1, weight="alg", wvar=(-beta, 0))
    tail, _ = integrate.quad(lambda x: x ** (-beta), 1, np.inf, weight="cos", wvar=xi)
    return 2 * (head + tail)


def _fourier_riesz_d3(beta, xi=1.0):
    # radial transform 4π/ξ ∫_0^∞ r^{1-β} sin(rξ) dr
    head, _ = integrate.quad(lambda r: r ** (1 - beta) * math.sin(r * xi), 0, 1)
    tail, _ = integrate.quad(lambda r: r ** (1 - beta), 1, np.inf, weight="sin", wvar=xi)
    return 4 * math.pi / xi * (head + tail)


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
def test_riesz_constant_d1_by_fourier_quadrature(beta):
    assert riesz_constant(1, beta) == pytest.approx(_fourier_riesz_d1(beta), rel=1e-7)


@pytest.mark.parametrize("beta", [1.2, 1.5])
def test_riesz_constant_d3_by_fourier_quadrature(beta):
    assert riesz_constant(3, beta) == pytest.approx(_fourier_riesz_d3(beta), rel=1e-7)


def test_riesz_spectral_density_scaling():
    cov = CovarianceSpec.riesz(2, 1.0)
    f1, f2 = spectral_density(cov, [1.0, 0.0]).density, spectral_density(cov, [2.0, 0.0]).density
    assert f2 / f1 == pytest.approx(2 ** (1.0 - 2))


def test_fractional_matches_riesz():
    H = 0.7
    frac = CovarianceSpec.fractional(H)
    riesz = CovarianceSpec.riesz(1, 2 - 2 * H)
    for r in (0.3, 1.0, 4.0):
        assert frac.density(r) == pytest.approx(H * (2 * H - 1) * riesz.density(r), rel=1e-12)


def test_white_and_atom_spectral_values():
    assert spectral_density(CovarianceSpec.white(2), [0.5, 1.0]).density == 1.0
    atom = spectral_density(CovarianceSpec.atom(1, 2.0), 0.0)
    assert atom.atom == pytest.approx(2.0 * 2 * math.pi)
    assert CovarianceSpec.fractional(0.5).is_white


def test_bump_gamma_is_normalised():
    cov = CovarianceSpec.bump(2, 0.7)
    val, _ = integrate.quad(lambda r: 2 * math.pi * r * float(np.squeeze(cov.gamma([r, 0.0]))), 0, np.inf)
    assert val == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("kw", [dict(kind="riesz", d=1, beta=1.0), dict(kind="bump", d=2, s=0.0),
                                dict(kind="atom", d=1, c=-1.0), dict(kind="fractional", d=1, H=1.0),
                                dict(kind="fractional", d=2, H=0.7), dict(kind="nope", d=1)])
def test_invalid_parameters(kw):
    with pytest.raises(ValueError):
        CovarianceSpec(**kw)


# ---------------------------------------------------------------- Dalang


def test_dalang_white():
    d1 = dalang_check(CovarianceSpec.white(1))
    assert d1.finite and d1.value == pytest.approx(math.pi, rel=1e-8)
    assert not dalang_check(CovarianceSpec.white(2)).finite
    assert not dalang_check(CovarianceSpec.white(3)).finite


@given(beta=st.floats(0.05, 2.95))
def test_dalang_riesz_d3(beta):
    assert dalang_check(CovarianceSpec.riesz(3, beta)).finite == (beta < 2)


def test_dalang_riesz_value_d2():
    # |S^1| c_{2,β} ∫ r^{β-1} / (1 + r²) dr = 2π c π / (2 sin(πβ/2))
    beta = 1.5
    expected = 2 * math.pi * riesz_constant(2, beta) * math.pi / (2 * math.sin(math.pi * beta / 2))
    assert dalang_check(CovarianceSpec.riesz(2, beta)).value == pytest.approx(expected, rel=1e-7)


# ---------------------------------------------------------------- ball averages


def _radial_average(cov, R):
    d = cov.d
    val, _ = integrate.quad(lambda r: sphere_area(d) * r ** (d - 1) * float(np.squeeze(cov.gamma(np.r_[r, np.zeros(d - 1)]))),
                            0, R, limit=200)
    return val / ball_volume(d, R)


@pytest.mark.parametrize("cov", [CovarianceSpec.riesz(1, 0.5), CovarianceSpec.riesz(3, 1.5),
                                 CovarianceSpec.bump(2, 0.5), CovarianceSpec.fractional(0.8)])
@pytest.mark.parametrize("R", [0.5, 3.0])
def test_gamma_ball_average_by_quadrature(cov, R):
    assert gamma_ball_average(cov, R) == pytest.approx(_radial_average(cov, R), rel=1e-6)


def test_gamma_ball_average_atom_and_white():
    assert gamma_ball_average(CovarianceSpec.atom(2, 1.5), 10.0) == 1.5
    assert gamma_ball_average(CovarianceSpec.white(1), 2.0) == pytest.approx(0.25)


# ---------------------------------------------------------------- torus spectrum


def test_white_covariance_row():
    g = GridSpec(1, 8.0, 64, 0.125, 1.0)
    row = periodize_spectrum(CovarianceSpec.white(1), g).covariance(g.dt)
    assert row[0] == pytest.approx(g.dt / g.dx, rel=1e-12)
    assert np.abs(row[1:]).max() < 1e-12


def test_riesz_zero_cell_closed_form():
    beta, L = 0.5, 32.0
    g = GridSpec(1, L, 256, 0.125, 1.0)
    spec = periodize_spectrum(CovarianceSpec.riesz(1, beta), g)
    h = math.pi / L
    assert spec.zero_weight == pytest.approx(2 * riesz_constant(1, beta) * h**beta / beta, rel=1e-10)


def test_atom_spectrum_only_zero_cell():
    g = GridSpec(2, 8.0, 16, 0.5, 1.0)
    spec = periodize_spectrum(CovarianceSpec.atom(2, 0.5), g)
    assert spec.zero_weight == pytest.approx(0.5 * (2 * math.pi) ** 2)
    assert np.count_nonzero(spec.weights) == 1
    # the increments are spatially constant with variance c dt
    row = spec.covariance(g.dt)
    assert np.allclose(row, 0.5 * g.dt, rtol=1e-12)


def test_bump_covariance_row_matches_gamma():
    s = 0.6
    # frequency-cell masses window the row by ~ sinc(pi x / L); a long torus keeps that below 1e-4
    g = GridSpec(1, 96.0, 1536, 1 / 16, 1.0)
    row = periodize_spectrum(CovarianceSpec.bump(1, s), g).covariance(g.dt) / g.dt
    x = g.axis_offsets() * g.dx
    gamma = np.exp(-x**2 / (2 * s * s)) / math.sqrt(2 * math.pi * s * s)
    near = np.abs(x) <= 3.0
    assert np.abs(row - gamma)[near].max() < 1e-4


def test_sampled_covariance_matches_spectrum():
    g = GridSpec(1, 8.0, 32, 0.25, 2.0)
    cov = CovarianceSpec.bump(1, 0.5)
    spec = periodize_spectrum(cov, g)
    nz = noise_history(spec, 3, range(2000))
    flat = nz.reshape(-1, g.N)
    emp = np.mean(flat * flat[:, :1], axis=0)
    target = spec.covariance(g.dt)
    se = np.sqrt(np.mean((flat * flat[:, :1]) ** 2, axis=0) / flat.shape[0])
    assert np.all(np.abs(emp - target) < 5 * se)


# ---------------------------------------------------------------- streams


def test_streams_do_not_depend_on_grouping():
    a = standard_normals(11, [0, 1, 2, 3], 5, (16,))
    b = standard_normals(11, [3], 5, (16,))
    assert np.array_equal(a[3], b[0])
    assert not np.array_equal(a[0], a[1])
    c = standard_normals(11, [3], 6, (16,))
    assert not np.array_equal(b, c)


def test_noise_slice_reproducible():
    g = GridSpec(2, 4.0, 8, 0.5, 1.0)
    spec = periodize_spectrum(CovarianceSpec.white(2), g)
    keys = replica_keys(5, [0, 1])
    x = sample_noise_slice(spec, g.dt, 5, 1, keys=keys).values
    y = sample_noise_slice(spec, g.dt, 5, 1, replicas=(0, 1)).values
    assert np.array_equal(x, y)
    with pytest.raises(ValueError):
        sample_noise_slice(spec, 0.0, 5, 1)
