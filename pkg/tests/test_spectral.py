import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from swe_ergodic.grid import ball_volume
from swe_ergodic.noise import CovarianceSpec
from swe_ergodic.spectral import (
    ball_ft_closed_form,
    ball_indicator_ft_sq,
    bessel_j,
    riemann_lebesgue_profile,
    u_constant,
)


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5])
def test_bessel_against_scipy(p):
    x = np.concatenate([np.linspace(0, 30, 601), np.geomspace(30, 5000, 200)])
    assert np.abs(bessel_j(p, x) - special.jv(p, x)).max() < 1e-10


@given(p=st.sampled_from([0.5, 1.0, 1.5]), x=st.floats(0.0, 1e4))
def test_bessel_pointwise(p, x):
    assert bessel_j(p, x) == pytest.approx(special.jv(p, x), abs=1e-10)


def test_bessel_rejects():
    with pytest.raises(ValueError):
        bessel_j(0.0, 1.0)
    with pytest.raises(ValueError):
        bessel_j(1.0, -1.0)


@pytest.mark.parametrize("d", [1, 3])
def test_ball_transform_closed_forms(d):
    xi = np.geomspace(1e-2, 300, 400)
    for b in (0.5, 1.0, 2.5):
        a = ball_indicator_ft_sq(d, b, xi)
        c = ball_ft_closed_form(d, b, xi)
        assert np.abs(a - c).max() <= 1e-9 * ball_volume(d, b) ** 2


def test_ball_transform_at_origin_and_d2_quadrature():
    assert ball_indicator_ft_sq(2, 1.5, 0.0) == pytest.approx(ball_volume(2, 1.5) ** 2)
    # direct 2-d transform of the disc indicator along ξ = (k, 0)
    b, k = 1.0, 2.3
    val, _ = integrate.quad(lambda x: 2 * math.sqrt(b * b - x * x) * math.cos(k * x), -b, b)
    assert ball_indicator_ft_sq(2, b, k) == pytest.approx(val**2, rel=1e-9)
    with pytest.raises(ValueError):
        ball_ft_closed_form(2, 1.0, 1.0)


# real-space oracle: ∫ |F 1_B|² dμ = (2π)^d |B|² E[γ(X - Y)] with X, Y uniform on B


def _pair_density(d, b, r):
    if d == 1:
        return (2 * b - r) / (2 * b * b)
    if d == 2:
        q = r / (2 * b)
        return 4 * r / (math.pi * b * b) * (math.acos(q) - q * math.sqrt(1 - q * q))
    return 3 * r**2 / b**3 - 9 * r**3 / (4 * b**4) + 3 * r**5 / (16 * b**6)


def _real_space_u(cov, b):
    d = cov.d
    gam = lambda r: float(np.squeeze(cov.gamma(np.r_[r, np.zeros(d - 1)])))
    mean, _ = integrate.quad(lambda r: _pair_density(d, b, r) * gam(r), 0, 2 * b, limit=200)
    return (2 * math.pi) ** d * ball_volume(d, b) ** 2 * mean


@pytest.mark.parametrize("cov", [CovarianceSpec.riesz(1, 0.5), CovarianceSpec.bump(1, 0.4),
                                 CovarianceSpec.riesz(2, 1.0), CovarianceSpec.bump(2, 0.5),
                                 CovarianceSpec.riesz(3, 1.5), CovarianceSpec.bump(3, 0.7)])
def test_u_constant_matches_real_space(cov):
    assert u_constant(cov, 1.0) == pytest.approx(_real_space_u(cov, 1.0), rel=2e-4)


def test_u_constant_white_plancherel():
    assert u_constant(CovarianceSpec.white(1), 1.0) == pytest.approx(4 * math.pi, rel=1e-4)
    assert u_constant(CovarianceSpec.white(1), 0.0) == 0.0


def test_u_constant_riesz_closed_form():
    beta, b = 0.5, 1.0
    pair = 2 * (2 * b) ** (2 - beta) / ((1 - beta) * (2 - beta))
    assert u_constant(CovarianceSpec.riesz(1, beta), b) == pytest.approx(2 * math.pi * pair, rel=2e-4)


def test_u_constant_refuses_without_dalang():
    with pytest.raises(ValueError):
        u_constant(CovarianceSpec.white(2), 1.0)


# ---------------------------------------------------------------- decay profile


def _white_profile(R, b):
    # Parseval: D(R) = 2π ∫ (1_{B_R} * 1_{B_b})² dx / (R² |B_1|²), trapezoid convolution
    conv_sq = 8 * b * b * (R - b) + 16 * b**3 / 3
    return 2 * math.pi * conv_sq / (4 * R * R)


def test_white_profile_closed_form():
    radii = [1, 2, 4, 8]
    prof = riemann_lebesgue_profile(CovarianceSpec.white(1), 1.0, radii, r_max=2000.0)
    assert np.allclose(prof.values, [_white_profile(R, 1.0) for R in radii], rtol=2e-3)
    assert prof.strictly_decreasing


def test_atom_profile_is_constant():
    cov = CovarianceSpec.atom(2, 1.5)
    prof = riemann_lebesgue_profile(cov, 1.0, [1, 4, 16])
    assert prof.constant
    assert prof.values[0] == pytest.approx(1.5 * (2 * math.pi) ** 2 * ball_volume(2, 1.0) ** 2)


@pytest.mark.parametrize("cov", [CovarianceSpec.riesz(3, 1.0), CovarianceSpec.bump(2, 0.5),
                                 CovarianceSpec.bump(3, 0.5)])
def test_profiles_vanish_without_atom(cov):
    prof = riemann_lebesgue_profile(cov, 1.0, [1, 2, 4, 8, 16])
    assert prof.strictly_decreasing
    assert prof.values[-1] / prof.values[0] < 0.1


@pytest.mark.parametrize("cov, beta", [(CovarianceSpec.riesz(1, 0.5), 0.5),
                                       (CovarianceSpec.fractional(0.7), 0.6),
                                       (CovarianceSpec.riesz(2, 1.5), 1.5)])
def test_riesz_profiles_decay_like_power(cov, beta):
    # a |x|^{-β} tail makes D(R) ~ R^{-β}: slow, but still to zero
    prof = riemann_lebesgue_profile(cov, 1.0, [16, 32, 64])
    assert prof.strictly_decreasing
    assert np.allclose(prof.ratios, 2.0**-beta, rtol=0.02)
