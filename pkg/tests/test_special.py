import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polylab import special as sp

mp.mp.dps = 40


@pytest.mark.parametrize("n", [0, 1, 2, 3, 5, 10, 25])
@pytest.mark.parametrize("t", [1e-6, 0.1, 0.5, 1.0, 3.7, 10.0, 25.0, 60.0])
def test_bessel_j_matches_mpmath(n, t):
    ref = complex(mp.besselj(n, t))
    got = complex(sp.bessel_j(n, t))
    assert abs(got - ref) <= 1e-13 * max(1.0, abs(ref)) + 1e-300


@pytest.mark.parametrize("n", [0, 1, 2, 4, 8])
@pytest.mark.parametrize("t", [0.05, 0.7, 2.0, 9.5, 40.0, 200.0])
def test_bessel_y_and_hankel_match_mpmath(n, t):
    y = float(mp.bessely(n, t))
    assert abs(sp.bessel_y(n, t) - y) <= 1e-12 * max(1.0, abs(y))
    h = complex(mp.hankel1(n, t))
    assert abs(sp.hankel1(n, t) - h) <= 1e-12 * max(1.0, abs(h))


@pytest.mark.parametrize("n", [0, 1, 3])
@pytest.mark.parametrize("t", [0.3, 1.0, 6.0])
def test_derivatives_match_mpmath(n, t):
    assert abs(sp.bessel_jp(n, t) - float(mp.besselj(n, t, derivative=1))) < 1e-12
    ref = complex(mp.diff(lambda s: mp.hankel1(n, s), t))
    assert abs(sp.hankel1p(n, t) - ref) <= 1e-11 * max(1.0, abs(ref))


def test_values_at_origin():
    assert sp.bessel_j(0, 0.0) == 1.0
    assert sp.bessel_j(3, 0.0) == 0.0


def test_j1_at_one_against_long_series():
    ref = mp.nsum(lambda m: (-1) ** m / (mp.factorial(m) * mp.factorial(m + 1)) * mp.mpf(0.5) ** (2 * m + 1), [0, 59])
    assert abs(sp.bessel_j(1, 1.0) - float(ref)) < 1e-15


def test_h0_at_one_against_integral_representation():
    # J0 and Y0 from their integral forms, evaluated independently of the series
    j0 = mp.quad(lambda th: mp.cos(mp.sin(th)), [0, mp.pi]) / mp.pi
    y0 = mp.quad(lambda th: mp.sin(mp.sin(th)), [0, mp.pi]) / mp.pi - 2 / mp.pi * mp.quad(
        lambda s: mp.exp(-mp.sinh(s)), [0, 1, 3, 6, 10])
    assert abs(sp.hankel1(0, 1.0) - complex(j0, y0)) < 1e-13


def test_hankel_large_argument_asymptotic():
    t = 200.0
    val = sp.hankel1(0, t) * math.sqrt(math.pi * t / 2) * np.exp(-1j * (t - math.pi / 4))
    assert abs(val - 1) < 1e-3


@given(st.integers(0, 30), st.floats(0.05, 80.0))
@settings(max_examples=60, deadline=None)
def test_wronskian(n, t):
    w = sp.bessel_j(n, t) * sp.bessel_yp(n, t) - sp.bessel_jp(n, t) * sp.bessel_y(n, t)
    assert abs(w - 2 / (math.pi * t)) <= 1e-9 * 2 / (math.pi * t)


def test_wronskian_example():
    n, t = 2, 5.0
    w = sp.bessel_j(n, t) * sp.bessel_yp(n, t) - sp.bessel_jp(n, t) * sp.bessel_y(n, t)
    assert abs(w - 2 / (5 * math.pi)) < 1e-10


def test_error_conditions():
    with pytest.raises(sp.SingularityError):
        sp.hankel1(0, 0.0)
    with pytest.raises(sp.RangeError):
        sp.bessel_j(sp.ORDER_LIMIT + 1, 1.0)
    with pytest.raises(sp.RangeError):
        sp.bessel_j(1, 10 * sp.ARG_LIMIT)
    with pytest.raises(sp.DomainError):
        sp.laplace_moment(1.0, -1.0 + 0j)


def test_j_table_matches_scalar():
    tab = sp.bessel_j_table(20, 3.3)
    ref = np.array([float(mp.besselj(n, 3.3)) for n in range(21)])
    assert np.allclose(tab, ref, rtol=1e-13, atol=1e-300)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.5, 7.0, 33.3])
def test_gamma(x):
    assert abs(sp.gamma(x) - float(mp.gamma(x))) <= 1e-14 * float(mp.gamma(x))


def test_laplace_moment_full_ray():
    for b, mu in [(1.0, 2.0), (3.0, 1 + 2j), (5.5, 4 - 1j)]:
        assert abs(sp.laplace_moment(b, mu) - math.gamma(b) / complex(mu) ** b) < 1e-14 * abs(math.gamma(b) / complex(mu) ** b)


def test_truncated_elementary():
    val, bound = sp.truncated_laplace_moment(1.0, 1.0, 1.0)
    assert abs(val - (1 - math.exp(-1))) < 1e-15
    assert bound >= abs(val)


def test_truncated_against_quadrature():
    mu = 10 + 5j
    val, _ = sp.truncated_laplace_moment(3.0, mu, 0.5)
    ref = complex(mp.quad(lambda r: r**2 * mp.exp(-mp.mpc(mu) * r), [0, 0.25, 0.5]))
    assert abs(val - ref) <= 1e-11 * abs(ref)


def test_truncated_precondition():
    with pytest.raises(sp.DomainError):
        sp.truncated_laplace_moment(5.0, 1.0, 0.5)


@given(st.integers(0, 6), st.floats(0.5, 60), st.floats(-40, 40), st.floats(0.05, 2.0))
@settings(max_examples=80, deadline=None)
def test_integer_moment_matches_general(n, a, b, h):
    mu = complex(a, b)
    got = sp.incomplete_moment_int(n, mu, h)
    ref = complex(mp.quad(lambda r: r**n * mp.exp(-mp.mpc(mu) * r), mp.linspace(0, h, 9)))
    assert abs(got - ref) <= 1e-10 * max(abs(ref), 1e-300) + 1e-14 * h ** (n + 1)
