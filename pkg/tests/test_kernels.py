import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad

from npme.kernels import (
    FractionalConductivity,
    FractionalLaplacian,
    OffGridError,
    SeparableAnalytic,
    TabulatedKernel,
    beta_function,
    gamma_function,
    kernel_eval,
    normalization_constant,
)


def _c_ns_mp(n, s):
    mpmath.mp.dps = 40
    return float(mpmath.power(4, s) * mpmath.gamma(mpmath.mpf(n) / 2 + s) / (mpmath.pi ** (mpmath.mpf(n) / 2) * abs(mpmath.gamma(-mpmath.mpf(s)))))


def test_normalization_half_is_one_over_pi():
    assert abs(normalization_constant(1, 0.5) - 1 / math.pi) <= 1e-10


@pytest.mark.parametrize("s", [0.1, 0.25, 0.5, 0.75, 0.9])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_normalization_against_high_precision(n, s):
    assert normalization_constant(n, s) == pytest.approx(_c_ns_mp(n, s), rel=1e-12)


def test_normalization_quarter_regression():
    # frozen from the high-precision oracle
    assert normalization_constant(1, 0.25) == pytest.approx(0.19947114020071635, rel=1e-13)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, 1.3])
def test_normalization_rejects_order(s):
    with pytest.raises(ValueError):
        normalization_constant(1, s)


def test_gamma_recurrence():
    a = np.linspace(0.5, 10.0, 200)
    assert np.allclose(gamma_function(a + 1), a * gamma_function(a), rtol=1e-12, atol=0)


def test_gamma_negative_argument():
    assert gamma_function(-0.5) == pytest.approx(-2 * math.sqrt(math.pi), rel=1e-14)


def test_beta_values():
    assert beta_function(1, 1) == pytest.approx(1.0, rel=1e-15)
    assert abs(beta_function(3, 3) - 1 / 30) <= 1e-10
    ref = quad(lambda t: (1 - t) ** 2 * t**2, 0, 1, epsabs=1e-15)[0]
    assert beta_function(3, 3) == pytest.approx(ref, rel=1e-12)


def test_beta_time_integral_identity():
    beta, m, T0 = 2.0, 2.0, 0.5
    ref = quad(lambda t: (T0 - t) ** beta * t**m, 0, T0, epsabs=1e-16, epsrel=1e-14)[0]
    assert abs(beta_function(beta + 1, m + 1) * T0 ** (beta + m + 1) - ref) <= 1e-10


def test_beta_gamma_consistency_and_symmetry():
    g = np.linspace(0.5, 6.0, 12)
    for a in g:
        for b in g:
            B = beta_function(a, b)
            assert abs(B - math.gamma(a) * math.gamma(b) / math.gamma(a + b)) / B <= 1e-10
            assert B == pytest.approx(beta_function(b, a), rel=1e-14)


def test_beta_rejects_nonpositive():
    with pytest.raises(ValueError):
        beta_function(0.0, 1.0)


def test_fractional_laplacian_is_constant():
    k = FractionalLaplacian(0.3)
    x = np.array([-3.0, 0.0, 2.5])
    assert np.all(kernel_eval(k, x, x[::-1]) == normalization_constant(1, 0.3))


def test_conductivity_with_unit_gamma_equals_laplacian():
    s = 0.4
    k = FractionalConductivity(s, lambda x: np.ones_like(np.asarray(x, dtype=float)))
    assert kernel_eval(k, 0.3, -1.7) == pytest.approx(normalization_constant(1, s), rel=1e-15)


def test_conductivity_direct_substitution():
    s = 0.5
    k = FractionalConductivity(s, lambda x: 1 + np.asarray(x) ** 2)
    assert kernel_eval(k, 0.0, 1.0) == pytest.approx(normalization_constant(1, s) * math.sqrt(2), rel=1e-14)


def test_symmetry_and_ellipticity_sampling(rng):
    kernels = [
        FractionalLaplacian(0.5),
        FractionalConductivity(0.5, lambda x: 1 + 0.5 * np.exp(-4 * np.asarray(x) ** 2)),
        SeparableAnalytic(0.7, lambda x: 2 + np.sin(x), lambda g: np.sqrt(g)),
    ]
    x, y = rng.uniform(-4, 4, 1000), rng.uniform(-4, 4, 1000)
    for k in kernels:
        a, b = kernel_eval(k, x, y), kernel_eval(k, y, x)
        assert np.all(a == b)
        assert np.all(a >= k.lambda_lo - 1e-12)
        assert np.all(a <= k.lambda_hi + 1e-12)
        assert 0 < k.lambda_lo <= k.lambda_hi


def test_tabulated_kernel_symmetry_and_off_grid():
    nodes = np.linspace(-2, 2, 5)
    vals = 1.0 + np.add.outer(nodes, nodes) ** 2
    vals[0, 4] = 99.0  # upper triangle is ignored
    k = TabulatedKernel(0.5, nodes, vals)
    assert kernel_eval(k, -2.0, 2.0) == kernel_eval(k, 2.0, -2.0) == 1.0
    assert k.lambda_lo == 1.0
    with pytest.raises(OffGridError):
        kernel_eval(k, 0.3, 1.0)


def test_tabulated_rejects_nonpositive():
    with pytest.raises(ValueError):
        TabulatedKernel(0.5, [0.0, 1.0], [[1.0, 0.0], [-1.0, 1.0]])
