import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fwdwick.errors import DomainError
from fwdwick.frac_ops import constants
from fwdwick.functions import expsq, polynomial
from fwdwick.hermite import (
    HermiteBasis,
    derivative_shift_check,
    grad_fbm_closed_form,
    grad_fbm_discrete,
    hermite_coeffs,
    hermite_eval,
    parseval_gap,
)
from fwdwick.kernels import fbm_kernel_table
from fwdwick.noise_grid import make_graded_grid


def test_low_orders():
    x = np.array([-1.0, 0.5, 2.0])
    assert np.allclose(hermite_eval(2, 0.5, x), x**2 - 0.5)
    assert np.allclose(hermite_eval(3, 2.0, x), x**3 - 6.0 * x)


@given(st.floats(0.1, 3.0))
def test_orthogonality(s2):
    x, w = np.polynomial.hermite_e.hermegauss(40)
    y = math.sqrt(s2) * x
    T = HermiteBasis(s2, 6).table(y)
    G = (T * w) @ T.T / math.sqrt(2 * math.pi)
    norms = np.array([HermiteBasis(s2, 6).norm2(n) for n in range(7)])
    assert np.allclose(G, np.diag(norms), rtol=1e-10, atol=1e-10 * norms.max())


def test_coeffs_of_square():
    c = hermite_coeffs(lambda y: y**2, 1.0, 6).values
    assert c[0] == pytest.approx(1.0, abs=1e-13)
    assert c[2] == pytest.approx(math.sqrt(2.0), abs=1e-13)
    assert np.allclose(np.delete(c, [0, 2]), 0.0, atol=1e-13)


def test_odd_function_has_no_even_coefficients():
    c = hermite_coeffs(lambda y: y**3 - np.sin(y), 0.7, 8).values
    assert np.allclose(c[::2], 0.0, atol=1e-13)


def test_parseval():
    assert parseval_gap(lambda y: np.exp(0.3 * y), 0.8, 40) < 1e-10


def test_shift_relation_cubic_and_constant():
    F = polynomial([0, 0, 0, 1])
    assert derivative_shift_check(F, F.d(1), 1.3, 6) < 1e-8
    c = polynomial([2.0])
    assert derivative_shift_check(c, c.d(1), 1.3, 6) < 1e-8
    assert np.all(hermite_coeffs(c.d(1), 1.3, 6).values == 0.0)


def test_shift_relation_exponential():
    lam = 0.2
    assert derivative_shift_check(lambda y: np.exp(lam * y), lambda y: lam * np.exp(lam * y), 0.9, 6) < 1e-6


def test_growth_domain():
    with pytest.raises(DomainError):
        hermite_coeffs(expsq(0.5), 1.0, 4)


def test_grad_factor_on_diagonal():
    H, t = 0.7, 0.8
    c = constants(H)
    assert c.A * grad_fbm_closed_form(H, t, t) == pytest.approx(H * t ** (2 * H - 1), rel=1e-12)


def test_grad_factor_matches_grid_route():
    H, t = 0.7, 0.6
    g = make_graded_grid(1 / 320, 1.0, -1.0e6)
    c_t = fbm_kernel_table(H, g, np.array([t])).C[0]
    s = np.array([0.7, 0.9])
    disc = grad_fbm_discrete(g, c_t, H, s)
    ref = np.array([grad_fbm_closed_form(H, t, x) for x in s])
    assert np.allclose(disc, ref, rtol=2e-2)
