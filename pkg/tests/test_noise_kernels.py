import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from saddle_mle.errors import DomainError, InvalidOrder
from saddle_mle.noise_kernels import (
    SERIES_CUTOFF,
    AdditiveNoise,
    ElementKernel,
    KernelGrid,
    additive_eval,
    kernel_domain,
    kernel_eval,
)

mpmath.mp.dps = 40


def mp_uniform(H, delta, u, order):
    """High-precision oracle for H u + ln(sinh(delta u) / (delta u))."""
    f = lambda s: H * s + mpmath.log(mpmath.sinh(delta * s) / (delta * s))
    return float(mpmath.diff(f, mpmath.mpf(u), order))


def quad_mgf_uniform(H, delta, u):
    val, _ = integrate.quad(lambda g: math.exp(u * g) / (2 * delta), H - delta, H + delta, epsabs=0, epsrel=1e-13)
    return math.log(val)


def quad_mgf_clipped(H, rate, sign, u):
    # clipped entry: G = H + S E, E ~ Exp(rate) by memorylessness
    val, _ = integrate.quad(lambda e: rate * math.exp(u * (H + sign * e) - rate * e), 0, math.inf, epsrel=1e-13)
    return math.log(val)


# -- reference values ----------------------------------------------------------


def test_gaussian_example():
    assert kernel_eval(ElementKernel.gaussian_element(0.0, 1.0), 2.0, 0) == pytest.approx(2.0, rel=1e-15)


def test_uniform_limit_variance():
    k = ElementKernel.uniform_rounding(0.0, 1.0)
    assert kernel_eval(k, 0.0, 2) == pytest.approx(1 / 3, rel=1e-14)
    assert kernel_eval(k, 1e-9, 2) == pytest.approx(1 / 3, rel=1e-14)


def test_uniform_value_at_one_matches_high_precision():
    k = ElementKernel.uniform_rounding(0.0, 1.0)
    # ln(sinh(1)) evaluated with 40-digit arithmetic
    assert kernel_eval(k, 1.0, 0) == pytest.approx(0.16143936157119557, rel=1e-14)


def test_clipped_example():
    k = ElementKernel.clipped_exponential(2.0, 2.0, 1, 1)
    assert kernel_eval(k, 1.0, 1) == 3.0


@pytest.mark.parametrize(
    "kernel, expected",
    [
        (ElementKernel.gaussian_element(1.0, 3.0), (-math.inf, math.inf)),
        (ElementKernel.clipped_exponential(2.0, 2.0, 1, 1), (-math.inf, 2.0)),
        (ElementKernel.clipped_exponential(-2.0, 2.0, 1, -1), (-2.0, math.inf)),
        (ElementKernel.clipped_exponential(-1.0, 2.0, 0, -1), (-math.inf, math.inf)),
        (ElementKernel.uniform_rounding(3.0, 0.5), (-math.inf, math.inf)),
        (ElementKernel.floating_point(3.0, 0.0), (-math.inf, math.inf)),
    ],
)
def test_kernel_domain(kernel, expected):
    assert kernel_domain(kernel) == expected


@pytest.mark.parametrize("sigma, t, order, expected", [(0.1, 0.0, 0, 0.0), (0.1, 3.0, 1, 0.03), (2.0, 5.0, 2, 4.0), (2.0, 5.0, 3, 0.0)])
def test_additive_eval(sigma, t, order, expected):
    assert additive_eval(AdditiveNoise(sigma), t, order) == pytest.approx(expected, rel=1e-15, abs=1e-300)


# -- errors -----------------------------------------------------------------


def test_domain_error_at_barrier():
    k = ElementKernel.clipped_exponential(2.0, 2.0, 1, 1)
    with pytest.raises(DomainError):
        kernel_eval(k, 2.0, 0)
    with pytest.raises(DomainError):
        kernel_eval(k, 3.0, 2)


@pytest.mark.parametrize("order", [-1, 4, 1.5, "2"])
def test_invalid_order(order):
    with pytest.raises(InvalidOrder):
        kernel_eval(ElementKernel.gaussian_element(0.0, 1.0), 0.5, order)
    with pytest.raises(InvalidOrder):
        additive_eval(AdditiveNoise(1.0), 0.5, order)


@pytest.mark.parametrize(
    "build",
    [
        lambda: ElementKernel.uniform_rounding(0.0, 0.0),
        lambda: ElementKernel.floating_point(0.0, -1.0),
        lambda: ElementKernel.clipped_exponential(0.0, 0.0, 0, 1),
        lambda: ElementKernel.clipped_exponential(1.0, 2.0, 1, 1, threshold=2.0),
        lambda: ElementKernel.clipped_exponential(2.0, 2.0, 1, -1, threshold=2.0),
        lambda: ElementKernel.gaussian_element(0.0, -1.0),
        lambda: AdditiveNoise(0.0),
    ],
)
def test_invalid_parameters(build):
    with pytest.raises(ValueError):
        build()


# -- independent oracles ------------------------------------------------------


@pytest.mark.parametrize("u", [-7.3, -1.0, -0.3, -0.01, 1e-5, 0.2, 0.26, 2.0, 15.0])
@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_uniform_matches_mpmath(u, order):
    H, delta = 1.5, 0.8
    got = kernel_eval(ElementKernel.uniform_rounding(H, delta), u, order)
    want = mp_uniform(H, delta, u, order)
    assert got == pytest.approx(want, rel=1e-11, abs=1e-14)


@pytest.mark.parametrize("u", [-3.0, -0.5, 0.05, 1.0, 4.0])
def test_uniform_matches_mgf_quadrature(u):
    H, delta = -2.0, 0.5
    assert kernel_eval(ElementKernel.uniform_rounding(H, delta), u, 0) == pytest.approx(
        quad_mgf_uniform(H, delta, u), rel=1e-10
    )


@pytest.mark.parametrize("sign, u", [(1, -3.0), (1, 0.5), (1, 1.9), (-1, -1.9), (-1, 2.0)])
def test_clipped_matches_mgf_quadrature(sign, u):
    H, rate = 2.0 * sign, 2.0
    k = ElementKernel.clipped_exponential(H, rate, 1, sign)
    assert kernel_eval(k, u, 0) == pytest.approx(quad_mgf_clipped(H, rate, sign, u), rel=1e-9, abs=1e-12)


# -- properties ---------------------------------------------------------------


@pytest.mark.parametrize("delta", [0.5, 1.0, 3.7, 1e-3])
@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_series_switch_continuity(delta, order):
    k = ElementKernel.uniform_rounding(0.3, delta)
    u = SERIES_CUTOFF / delta
    lo = kernel_eval(k, u * (1 - 1e-12), order)
    hi = kernel_eval(k, u * (1 + 1e-12), order)
    assert lo == pytest.approx(hi, rel=1e-10, abs=1e-15)


@pytest.mark.parametrize(
    "kernel, mean",
    [
        (ElementKernel.uniform_rounding(2.5, 0.5), 2.5),
        (ElementKernel.floating_point(-310.0, 5.0), -310.0),
        (ElementKernel.clipped_exponential(2.0, 2.0, 1, 1), 2.5),
        (ElementKernel.clipped_exponential(-2.0, 2.0, 1, -1), -2.5),
        (ElementKernel.clipped_exponential(0.7, 2.0, 0, 1), 0.7),
        (ElementKernel.gaussian_element(-4.0, 2.0), -4.0),
    ],
)
def test_mean_at_origin(kernel, mean):
    for u in (-1e-8, 1e-8):
        assert kernel_eval(kernel, u, 1) == pytest.approx(mean, rel=1e-7, abs=1e-7)


def test_zero_variance_cases():
    assert kernel_eval(ElementKernel.clipped_exponential(1.0, 2.0, 0, 1), 0.4, 2) == 0.0
    assert kernel_eval(ElementKernel.gaussian_element(1.0, 0.0), 0.4, 2) == 0.0
    assert kernel_eval(ElementKernel.floating_point(1.0, 0.0), 0.4, 2) == 0.0
    assert kernel_eval(ElementKernel.floating_point(1.0, 0.0), 0.4, 1) == 1.0


def _random_kernel(draw):
    variant = draw(st.sampled_from(["u", "f", "c", "g"]))
    H = draw(st.floats(-5, 5))
    if variant == "u":
        return ElementKernel.uniform_rounding(H, draw(st.floats(0.05, 3)))
    if variant == "f":
        return ElementKernel.floating_point(H, draw(st.floats(0.0, 3)))
    if variant == "c":
        sign = draw(st.sampled_from([-1, 1]))
        return ElementKernel.clipped_exponential(2.0 * sign, draw(st.floats(0.5, 4)), draw(st.sampled_from([0, 1])), sign)
    return ElementKernel.gaussian_element(H, draw(st.floats(0, 3)))


@st.composite
def kernel_and_point(draw):
    k = _random_kernel(draw)
    lo, hi = kernel_domain(k)
    lo, hi = max(lo, -6.0), min(hi, 6.0)
    frac = draw(st.floats(0.02, 0.98))
    return k, lo + frac * (hi - lo)


@settings(max_examples=300, deadline=None)
@given(kernel_and_point(), st.sampled_from([1, 2, 3]))
def test_derivatives_match_finite_differences(kp, order):
    k, u = kp
    lo, hi = kernel_domain(k)
    h = 1e-5 * max(1.0, abs(u))
    h = min(h, 0.25 * (hi - u), 0.25 * (u - lo))
    fd = (kernel_eval(k, u + h, order - 1) - kernel_eval(k, u - h, order - 1)) / (2 * h)
    got = kernel_eval(k, u, order)
    scale = max(abs(got), abs(kernel_eval(k, u, order - 1)), 1.0)
    assert abs(fd - got) <= 1e-6 * scale


@settings(max_examples=300, deadline=None)
@given(kernel_and_point())
def test_second_derivative_nonnegative(kp):
    k, u = kp
    assert kernel_eval(k, u, 2) >= 0.0


def test_grid_matches_elements():
    rng = np.random.default_rng(0)
    elems = [
        [ElementKernel.uniform_rounding(1.0, 0.5), ElementKernel.clipped_exponential(-2.0, 2.0, 1, -1)],
        [ElementKernel.gaussian_element(0.5, 1.5), ElementKernel.floating_point(3.1, 0.05)],
    ]
    grid = KernelGrid.from_elements(elems)
    u = rng.uniform(-1.5, 1.5, size=(2, 2))
    for order in range(4):
        vals = grid.eval(u, order)
        for i in range(2):
            for j in range(2):
                assert vals[i, j] == pytest.approx(kernel_eval(elems[i][j], u[i, j], order), rel=1e-14, abs=1e-300)


def test_grid_is_read_only():
    grid = KernelGrid(np.ones((3, 2)), 0.5, 1.0, 0.0, 1.0, 0.0, variant="UniformRounding")
    with pytest.raises(ValueError):
        grid.mean[0, 0] = 2.0
