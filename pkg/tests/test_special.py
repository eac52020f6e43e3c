import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pscdss.analytics.special import DomainError, QuadratureError, derivative, gauss_kronrod, hyp2f1


@pytest.mark.parametrize("a,b,c,z", [
    (1, 2, 3, -0.3), (1, 2, 3, -5.0), (2, 3, 4, -120.0), (3, 4, 5, -1e4),
    (0.5, 1.5, 2.5, 0.45), (1, 1, 2, -0.999), (4, 5, 6, -0.5),
])
def test_hyp2f1_matches_mpmath(a, b, c, z):
    ref = float(mpmath.hyp2f1(a, b, c, z))
    assert hyp2f1(a, b, c, z) == pytest.approx(ref, rel=1e-12)


@given(alpha=st.integers(1, 4), z=st.floats(-1e9, 0.49))
def test_hyp2f1_interference_family(alpha, z):
    ref = float(mpmath.hyp2f1(alpha, alpha + 1, alpha + 2, z))
    assert hyp2f1(alpha, alpha + 1, alpha + 2, z) == pytest.approx(ref, rel=1e-11)


def test_hyp2f1_elementary_identity():
    # 2F1(1,1;2;z) = -log(1-z)/z
    for z in (-0.2, -3.0, -40.0):
        assert hyp2f1(1, 1, 2, z) == pytest.approx(-math.log1p(-z) / z, rel=1e-13)


def test_hyp2f1_domain():
    assert hyp2f1(2, 3, 4, 0.0) == 1.0
    with pytest.raises(DomainError):
        hyp2f1(1, 1, -2, 0.1)
    with pytest.raises(DomainError):
        hyp2f1(1, 1, 2, 1.5)


def test_gauss_kronrod_polynomial_exact():
    # 15-point Kronrod rule integrates degree-22 polynomials exactly
    val, err = gauss_kronrod(lambda x: x**10 - 3 * x**3, -1.0, 2.0)
    assert val == pytest.approx((2**11 + 1) / 11 - 3 * (16 - 1) / 4, rel=1e-14)


def test_gauss_kronrod_peaked_and_reversed():
    f = lambda x: np.exp(-((x - 0.3) ** 2) / 1e-4)
    val, err = gauss_kronrod(f, 0.0, 1.0, atol=1e-12)
    assert val == pytest.approx(math.sqrt(math.pi) * 1e-2, rel=1e-10)
    back, _ = gauss_kronrod(f, 1.0, 0.0, atol=1e-12)
    assert back == pytest.approx(-val)
    assert gauss_kronrod(f, 0.5, 0.5) == (0.0, 0.0)


def test_gauss_kronrod_budget_exhausted():
    with pytest.raises(QuadratureError) as info:
        gauss_kronrod(lambda x: np.sin(1.0 / np.maximum(x, 1e-12)), 0.0, 1.0,
                      atol=1e-14, max_intervals=20)
    assert math.isfinite(info.value.value)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_derivative_of_exp(k):
    assert derivative(math.exp, 0.7, k) == pytest.approx(math.exp(0.7), rel=1e-9)


def test_derivative_order_limits():
    assert derivative(math.sin, 1.0, 0) == math.sin(1.0)
    with pytest.raises(ValueError):
        derivative(math.sin, 1.0, 4)
