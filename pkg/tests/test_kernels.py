import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from censadd.errors import QuadratureError
from censadd.kernels import (
    KERNELS,
    Kernel,
    QuadratureRule,
    convolve_with_density,
    get_kernel,
    kernel_moment,
    l2_norm_sq,
    tensor_quadrature,
    verify_order,
    verify_product_order,
)
from censadd.marginal import IntegrationDensity


@pytest.mark.parametrize("j, expected", [(0, 1.0), (1, 0.0), (2, 0.2), (3, 0.0)])
def test_epanechnikov_moments(j, expected):
    assert kernel_moment(get_kernel("epanechnikov"), j) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize(
    "name, expected",
    [("epanechnikov", 0.6), ("uniform", 0.5), ("biweight", 5 / 7)],
)
def test_l2_norm_closed_forms(name, expected):
    assert l2_norm_sq(get_kernel(name)) == pytest.approx(expected, abs=1e-9)


def test_order_checks():
    epa = get_kernel("epanechnikov")
    assert verify_order(epa, 2)
    report = verify_order(epa, 4)
    assert not report
    assert report.moments[2] == pytest.approx(0.2, abs=1e-12)
    assert verify_order(get_kernel("uniform"), 2)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_shipped_kernels_pass_declared_order(name):
    k = get_kernel(name)
    assert verify_order(k, k.order, tol=1e-10)


def test_product_kernel_order():
    ok, moments = verify_product_order([get_kernel("epanechnikov")] * 2, 2, tol=1e-10)
    assert ok
    assert set(moments) == {(1, 0), (0, 1)}
    ok4, _ = verify_product_order([get_kernel("poly4")] * 2, 4, tol=1e-10)
    assert ok4


@pytest.mark.parametrize("h", [0.05, 0.3, 2.0])
def test_scaled_kernel_l2(h):
    k = get_kernel("epanechnikov")
    rule = QuadratureRule.gauss_legendre(64)
    val = rule.integrate(lambda u: k.scaled(u, h) ** 2, -h, h)
    assert val == pytest.approx(l2_norm_sq(k) / h, rel=1e-12)


def test_kernel_must_integrate_to_one():
    with pytest.raises(ValueError):
        Kernel("bad", lambda u: np.ones_like(u), 2)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        get_kernel("gaussian-ish")


@pytest.mark.parametrize(
    "f, box, expected",
    [
        (lambda u: np.ones(len(u)), [(-1, 1), (-1, 1)], 4.0),
        (lambda u: u[:, 0] * u[:, 1], [(-1, 1), (-1, 1)], 0.0),
        (lambda u: np.cos(u[:, 0]) ** 2, [(-1, 1)], 1 + math.sin(2) / 2),
    ],
)
def test_tensor_quadrature(f, box, expected):
    assert tensor_quadrature(f, box) == pytest.approx(expected, abs=1e-12)


def test_tensor_quadrature_dimension_guard():
    with pytest.raises(QuadratureError):
        tensor_quadrature(lambda u: np.ones(len(u)), [(0, 1)] * 5)


@settings(max_examples=40, deadline=None)
@given(
    c=st.floats(-1.5, 1.5),
    h=st.floats(0.02, 0.6),
)
def test_convolution_matches_adaptive_quadrature(c, h):
    from scipy import integrate

    k = get_kernel("epanechnikov")
    q = IntegrationDensity.uniform(-1, 1)
    got = convolve_with_density(k, h, np.array([c]), q, q.support)[0]
    lo, hi = max(-1, c - h), min(1, c + h)
    ref = 0.0
    if lo < hi:
        ref, _ = integrate.quad(lambda u: k.scaled(u - c, h) * 0.5, lo, hi, epsabs=1e-13)
    assert got == pytest.approx(ref, abs=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3))
def test_kernels_vanish_outside_support(u):
    for k in KERNELS.values():
        val = float(k(np.array([u]))[0])
        if abs(u) > 1:
            assert val == 0.0
