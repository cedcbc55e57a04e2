import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import simpson

from nsquant.errors import QuadratureError
from nsquant.kernels import (SQRT2, constants, conv_table, epanechnikov, integrate_kernel,
                             phi_of, second_order_kernel, self_convolution)

K = epanechnikov()
KS = second_order_kernel(K)


def fine_integral(f, lo, hi, size=400_001):
    x = np.linspace(lo, hi, size)
    return simpson(f(x), x=x)


def test_epanechnikov_closed_form_constants():
    c = constants(K)
    assert c.phi == pytest.approx(0.6, abs=1e-10)
    assert c.mu2 == pytest.approx(0.2, abs=1e-10)
    assert c.frakC == pytest.approx(2.5, abs=1e-10)


def test_kernel_integrates_to_one_and_is_even():
    assert integrate_kernel(K) == pytest.approx(1.0, abs=1e-12)
    x = np.linspace(-1.5, 1.5, 301)
    np.testing.assert_array_equal(K(x), K(-x))


def test_jackknife_kernel_is_second_order():
    assert KS.support == pytest.approx(SQRT2)
    assert integrate_kernel(KS) == pytest.approx(1.0, abs=1e-11)
    assert integrate_kernel(KS, lambda x, kx: x * x * kx) == pytest.approx(0.0, abs=1e-11)
    # K* takes negative values on its outer ring
    assert KS(1.2) < 0


def test_jackknife_kernel_matches_definition_pointwise():
    x = np.linspace(-2, 2, 81)
    expected = 2 * 0.75 * np.clip(1 - x**2, 0, None) - 0.75 * np.clip(1 - x**2 / 2, 0, None) / math.sqrt(2)
    np.testing.assert_allclose(KS(x), expected, atol=1e-15)


def test_kstar_functionals_against_fine_grid():
    c = constants(K)
    direct = fine_integral(lambda x: KS.evaluate(x) ** 2, -SQRT2, SQRT2)
    assert c.kstar_at_zero == pytest.approx(direct, abs=1e-9)
    assert phi_of(KS) == pytest.approx(direct, abs=1e-9)
    # nested oracle: convolution by a fine Simpson rule, then outer Simpson on its own grid
    t = np.linspace(0, 2 * SQRT2, 401)
    u = np.linspace(-SQRT2, SQRT2, 20_001)
    conv = np.array([simpson(KS.evaluate(u) * KS.evaluate(ti - u), x=u) for ti in t])
    outer = 2 * simpson(conv**2, x=t)
    assert c.kstar_conv_sq_integral == pytest.approx(outer, abs=5e-7)


def test_conv_table_is_symmetric_and_peaks_at_zero():
    grid, vals = conv_table(K)
    np.testing.assert_array_equal(vals, vals[::-1])
    assert grid[np.argmax(vals)] == 0.0
    assert vals[0] == 0.0 and vals[-1] == 0.0


@given(st.floats(-3, 3))
def test_self_convolution_symmetric(t):
    assert self_convolution(KS, t) == pytest.approx(self_convolution(KS, -t), abs=1e-10)


@given(st.floats(-5, 5, allow_nan=False))
def test_epanechnikov_derivative_matches_difference_quotient(x):
    if abs(abs(x) - 1) < 1e-4:
        return
    h = 1e-6
    fd = (K.evaluate(np.array(x + h)) - K.evaluate(np.array(x - h))) / (2 * h)
    assert float(K.derivative(np.array(x))) == pytest.approx(float(fd), abs=1e-6)


def test_quadrature_failure_raises():
    with pytest.raises(QuadratureError) as info:
        integrate_kernel(K, lambda x, kx: np.sin(1e7 * x) ** 2 * kx)
    assert info.value.residual > 0
