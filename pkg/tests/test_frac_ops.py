import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate
from hypothesis import given, strategies as st

from fwdwick.errors import DomainError
from fwdwick.frac_ops import (
    beta_fn,
    cell_power_integral,
    check_hurst,
    constants,
    frac_int_minus,
    frac_int_plus,
    gamma_fn,
    power_product_integral,
    shifted_power_overlap,
)
from fwdwick.noise_grid import make_grid


@pytest.mark.parametrize("x", [0.05, 0.35, 0.5, 1.7, 4.2])
def test_gamma_against_mpmath(x):
    assert gamma_fn(x) == pytest.approx(float(mp.gamma(x)), rel=1e-14)


def test_beta_against_mpmath():
    assert beta_fn(0.2, 0.35) == pytest.approx(float(mp.beta(0.2, 0.35)), rel=1e-14)


@pytest.mark.parametrize("bad", [0.5, 1.0, 0.3, float("nan")])
def test_hurst_domain(bad):
    with pytest.raises(DomainError):
        check_hurst(bad)


@given(st.floats(-0.95, -0.05), st.floats(-3, 2), st.floats(0.01, 1.0), st.floats(-3, 3))
def test_cell_power_integral_mpmath(p, lo, width, t):
    hi = lo + width
    got = cell_power_integral(p, (lo, hi), t)
    if t <= lo:
        assert got == 0.0
        return
    top = min(hi, t)
    if top == t:
        ref, _ = integrate.quad(lambda x: 1.0, lo, t, weight="alg", wvar=(0.0, p), epsabs=0.0, epsrel=1e-13)
    else:
        ref = float(mp.quad(lambda x: (t - x) ** p, [lo, top]))
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_power_product_integral_against_beta():
    # int_0^1 u^(a) (1-u)^(b) du = B(a+1, b+1)
    val = power_product_integral(0.0, 1.0, [0.0, 1.0], [-0.3, -0.45])
    assert val == pytest.approx(beta_fn(0.7, 0.55), rel=1e-12)


def test_power_product_integral_interior_singularities():
    e = -0.3
    val = power_product_integral(0.0, 1.0, [0.3, 0.6], [e, e])
    ref = mp.quad(lambda u: abs(u - 0.3) ** e * abs(u - 0.6) ** e, [0, 0.3, 0.6, 1])
    assert val == pytest.approx(float(ref), rel=1e-9)


def test_power_product_integral_near_outside_centre():
    e = -0.3
    val = power_product_integral(0.0, 1.0, [1.0 + 1e-7], [e])
    ref = ((1 + 1e-7) ** (e + 1) - 1e-7 ** (e + 1)) / (e + 1)
    assert val == pytest.approx(ref, rel=1e-10)


def test_frac_int_plus_indicator():
    # I_+^alpha 1_[0,1] at s = 2 equals (2^alpha - 1) / Gamma(alpha + 1)
    g = make_grid(-1.0, 3.0, 40)
    alpha = 0.3
    f = g.indicator(0.0, 1.0)
    got = frac_int_plus(alpha, g, f, 2.0)
    assert got == pytest.approx((2**alpha - 1) / gamma_fn(alpha + 1), rel=1e-12)


def test_frac_int_plus_reports_truncation():
    g = make_grid(-1.0, 1.0, 10)
    f = np.ones(10)
    _, info = frac_int_plus(0.2, g, f, 2.0, return_info=True)
    assert info["right_truncated"] and info["left_truncated"]


def test_frac_int_minus_pointwise():
    # I_-^alpha of 1_[0,1) at x < 0: ((1-x)^alpha - (-x)^alpha) / Gamma(alpha+1)
    alpha = 0.2
    x = np.array([-0.5, -2.0, 0.5])
    got = frac_int_minus(alpha, [0.0, 1.0], np.array([1.0]), x=x)
    ref = (np.clip(1 - x, 0, None) ** alpha - np.clip(-x, 0, None) ** alpha) / gamma_fn(alpha + 1)
    assert np.allclose(got, ref, rtol=1e-13)


def test_shifted_overlap_scaling():
    # int (s1-u)_+^g (s2-u)_+^g du = D^(2g+1) B(g+1, -2g-1)
    g, D = -0.65, 0.7
    ref = D ** (2 * g + 1) * beta_fn(g + 1, -2 * g - 1)
    assert shifted_power_overlap(g, 0.0, D) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("H", [0.55, 0.7, 0.9])
def test_constants_positive_and_consistent(H):
    c = constants(H)
    assert c.A > 0 and c.d > 0 and c.B > 0 and c.C > 0
    g2 = gamma_fn(H / 2) ** 2
    assert c.B == pytest.approx(4 * c.d**2 * beta_fn(H / 2, 1 - H) / g2**2, rel=1e-12)
    assert c.C == pytest.approx(4 * c.d**3 * beta_fn(1 - H, H / 2) ** 2 / g2**3, rel=1e-12)


def test_constant_A_mpmath():
    H = 0.7
    A = constants(H).A
    ref = mp.sqrt(mp.gamma(H - 0.5) * H * (2 * H - 1) * mp.gamma(1.5 - H) / mp.gamma(2 - 2 * H))
    assert A == pytest.approx(float(ref), rel=1e-13)
    assert math.isfinite(constants(0.99).A)
