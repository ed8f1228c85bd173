import numpy as np
import pytest

from fwdwick.errors import ConfigError
from fwdwick.functions import check_growth, constant, expsq, parse_function, polynomial


def test_catalog_names():
    assert parse_function("x2")(3.0) == 9.0
    assert parse_function("x3").d(1)(2.0) == 12.0
    p = parse_function("poly:1,0,-2")
    assert p(2.0) == -7.0 and p.d(2)(0.3) == -4.0


@pytest.mark.parametrize("bad", ["x4", "poly:", "poly:a,b", "expsq:z"])
def test_bad_names(bad):
    with pytest.raises(ConfigError):
        parse_function(bad)


def test_expsq_derivatives_by_finite_differences():
    F = expsq(0.2)
    x, h = 0.7, 1e-5
    for k in range(4):
        fd = (F.d(k)(x + h) - F.d(k)(x - h)) / (2 * h)
        assert fd == pytest.approx(F.d(k + 1)(x), rel=1e-7)


def test_derivative_shifts():
    F = polynomial([0, 0, 0, 1])
    g = F.derivative()
    assert g(2.0) == 12.0 and g.d(1)(2.0) == 12.0


def test_constant_has_zero_derivatives():
    c = constant(3.5)
    assert c(np.array([1.0, 2.0])).tolist() == [3.5, 3.5]
    assert c.d(1)(1.0) == 0.0 and c.d(2)(1.0) == 0.0


def test_growth_conditions():
    check_growth(expsq(0.1), 1.0, 0.7, "fbm")
    with pytest.raises(ConfigError):
        check_growth(expsq(0.3), 1.0, 0.7, "fbm")
    with pytest.raises(ConfigError):
        check_growth(expsq(0.01), 1.0, 0.7, "rosenblatt")
    check_growth(parse_function("x3"), 1.0, 0.7, "rosenblatt")
