"""Cylinder functions of integer order and a truncated Laplace moment.

Bessel functions are evaluated in three regimes:

* power series for small arguments,
* Miller's backward recurrence (normalised by ``J0 + 2*sum(J_2k) = 1``),
  with Neumann series for ``Y0`` and ``Y1``, for moderate arguments,
* Hankel's asymptotic expansion for large arguments (orders 0 and 1).

``Y_n`` for ``n >= 2`` comes from upward recurrence, which is stable for the
second kind.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

EULER_GAMMA = 0.57721566490153286061

SERIES_MAX = 6.0
ASYMPTOTIC_MIN = 30.0
ARG_LIMIT = 1.0e4
ORDER_LIMIT = 2000


class RangeError(ValueError):
    """Requested order or argument lies outside the supported range."""


class SingularityError(ValueError):
    """Function evaluated at its singular point."""


class DomainError(ValueError):
    """Precondition of a quadrature bound is violated."""


def _series_coefficients(nterms: int = 24):
    p = np.arange(nterms)
    fact = np.array([math.factorial(int(i)) for i in p], dtype=float)
    sign = (-1.0) ** p
    harm = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, nterms))])
    psi1 = -EULER_GAMMA + harm  # digamma(p + 1)
    psi2 = -EULER_GAMMA + np.concatenate([harm[1:], [harm[-1] + 1.0 / nterms]])
    j0 = sign / fact**2
    j1 = sign / (fact * fact * (p + 1))
    y0 = -sign * harm / fact**2
    y1 = sign * (psi1 + psi2) / (fact * fact * (p + 1))
    return j0, j1, y0, y1


_C_J0, _C_J1, _C_Y0, _C_Y1 = _series_coefficients()


def _horner(coef, z):
    acc = np.full_like(z, coef[-1])
    for c in coef[-2::-1]:
        acc = acc * z + c
    return acc


def _jy01_series(t):
    half = 0.5 * t
    z = half * half
    j0 = _horner(_C_J0, z)
    j1 = half * _horner(_C_J1, z)
    lg = np.log(half)
    y0 = (2.0 / np.pi) * ((lg + EULER_GAMMA) * j0 + _horner(_C_Y0, z))
    y1 = -2.0 / (np.pi * t) + (2.0 / np.pi) * lg * j1 - (half / np.pi) * _horner(_C_Y1, z)
    return j0, j1, y0, y1


def _miller_start(order: float, t: float) -> int:
    top = max(order, t)
    m = int(top + 30 + math.sqrt(40.0 * top))
    return m + (m % 2)


def _miller(t, nmax: int, want_y: bool):
    """Backward recurrence table of J_0..J_nmax; optional Neumann Y0, Y1."""
    t = np.asarray(t, dtype=float)
    m_start = _miller_start(nmax, float(t.max()))
    table = np.zeros((nmax + 1, t.size))
    j_next = np.zeros_like(t)
    j_cur = np.full_like(t, 1.0e-30)
    norm = np.zeros_like(t)
    s0 = np.zeros_like(t)
    s1 = np.zeros_like(t)
    for m in range(m_start, 0, -1):
        if m <= nmax:
            table[m] = j_cur
        if m % 2 == 0:
            norm += 2.0 * j_cur
            k = m // 2
            s0 += (-1.0) ** k * j_cur / k
        elif m >= 3:
            k = (m - 1) // 2
            s1 += (-1.0) ** k * (2 * k + 1) * j_cur / (k * (k + 1))
        j_prev = (2.0 * m / t) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        big = np.abs(j_cur) > 1.0e200
        if big.any():
            scale = np.where(big, 1.0e-200, 1.0)
            j_cur *= scale
            j_next *= scale
            table *= scale
            norm *= scale
            s0 *= scale
            s1 *= scale
    table[0] = j_cur
    norm += j_cur
    table /= norm
    if not want_y:
        return table, None, None
    j0 = table[0]
    j1 = j_next / norm
    lg = np.log(0.5 * t)
    y0 = (2.0 / np.pi) * (lg + EULER_GAMMA) * j0 - (4.0 / np.pi) * s0 / norm
    y1 = (
        -2.0 / (np.pi * t) * j0
        + (2.0 / np.pi) * (lg + EULER_GAMMA - 1.0) * j1
        - (2.0 / np.pi) * s1 / norm
    )
    return table, y0, y1


def _hankel_asymptotic(nu: int, t):
    """H_nu^(1)(t) from Hankel's expansion; accurate for t >= ASYMPTOTIC_MIN."""
    mu = 4.0 * nu * nu
    total = np.ones_like(t, dtype=complex)
    term = np.ones_like(t, dtype=complex)
    for k in range(1, 60):
        term = term * (1j * (mu - (2 * k - 1) ** 2) / (k * 8.0)) / t
        total += term
        if np.max(np.abs(term)) < 1e-17:
            break
    omega = t - 0.5 * nu * np.pi - 0.25 * np.pi
    return np.sqrt(2.0 / (np.pi * t)) * np.exp(1j * omega) * total


def jy01(t):
    """Return ``(J0, J1, Y0, Y1)`` for an array of positive arguments."""
    t = np.asarray(t, dtype=float)
    shape = t.shape
    t = t.ravel()
    if t.size and (t.min() <= 0.0):
        raise SingularityError("Y0 and Y1 are singular at t <= 0")
    if t.size and t.max() > ARG_LIMIT:
        raise RangeError(f"argument above {ARG_LIMIT}")
    out = [np.empty_like(t) for _ in range(4)]
    small = t <= SERIES_MAX
    large = t >= ASYMPTOTIC_MIN
    mid = ~(small | large)
    if small.any():
        for o, v in zip(out, _jy01_series(t[small])):
            o[small] = v
    if mid.any():
        table, y0, y1 = _miller(t[mid], 1, True)
        out[0][mid], out[1][mid], out[2][mid], out[3][mid] = table[0], table[1], y0, y1
    if large.any():
        h0 = _hankel_asymptotic(0, t[large])
        h1 = _hankel_asymptotic(1, t[large])
        out[0][large], out[2][large] = h0.real, h0.imag
        out[1][large], out[3][large] = h1.real, h1.imag
    return tuple(o.reshape(shape) for o in out)


def hankel01(t):
    """Return ``(H0^(1)(t), H1^(1)(t))``; the fast path used by layer kernels."""
    j0, j1, y0, y1 = jy01(t)
    return j0 + 1j * y0, j1 + 1j * y1


def _check_order(n: int) -> int:
    n = int(n)
    if n < 0:
        raise RangeError("order must be nonnegative")
    if n > ORDER_LIMIT:
        raise RangeError(f"order above {ORDER_LIMIT}")
    return n


def _j_series(n: int, t):
    half = 0.5 * t
    z = half * half
    with np.errstate(divide="ignore"):
        lead = np.where(
            t > 0,
            np.exp(n * np.log(np.where(t > 0, half, 1.0)) - math.lgamma(n + 1)),
            1.0 if n == 0 else 0.0,
        )
    acc = np.ones_like(t)
    term = np.ones_like(t)
    for p in range(1, 60):
        term = -term * z / (p * (n + p))
        acc += term
    return lead * acc


def bessel_j(n: int, t):
    """Bessel function of the first kind J_n(t) for integer n >= 0, t >= 0."""
    n = _check_order(n)
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if (t < 0).any():
        raise RangeError("argument must be nonnegative")
    if t.max() > ARG_LIMIT:
        raise RangeError(f"argument above {ARG_LIMIT}")
    out = np.empty_like(t)
    series = t <= SERIES_MAX + 0.5 * n
    if series.any():
        out[series] = _j_series(n, t[series])
    rest = ~series
    if rest.any():
        tr = t[rest]
        if n <= 1:
            out[rest] = jy01(tr)[n]
        else:
            out[rest] = _miller(tr, n, False)[0][n]
    return out[0] if scalar else out


def bessel_y(n: int, t):
    """Bessel function of the second kind Y_n(t), t > 0."""
    n = _check_order(n)
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    _, _, y0, y1 = jy01(t)
    if n == 0:
        y = y0
    else:
        prev, y = y0, y1
        for m in range(1, n):
            prev, y = y, (2.0 * m / t) * y - prev
    return y[0] if scalar else y


def hankel1(n: int, t):
    """Hankel function of the first kind H_n^(1)(t) = J_n(t) + i Y_n(t)."""
    t = np.asarray(t, dtype=float)
    if (t <= 0).any():
        raise SingularityError("H_n^(1) is singular at t = 0")
    return bessel_j(n, t) + 1j * bessel_y(n, t)


def bessel_jp(n: int, t):
    """Derivative J_n'(t)."""
    n = _check_order(n)
    if n == 0:
        return -bessel_j(1, t)
    return 0.5 * (bessel_j(n - 1, t) - bessel_j(n + 1, t))


def bessel_yp(n: int, t):
    """Derivative Y_n'(t)."""
    n = _check_order(n)
    if n == 0:
        return -bessel_y(1, t)
    return 0.5 * (bessel_y(n - 1, t) - bessel_y(n + 1, t))


def hankel1p(n: int, t):
    """Derivative of H_n^(1)(t)."""
    return bessel_jp(n, t) + 1j * bessel_yp(n, t)


def bessel_j_table(nmax: int, t):
    """Array of shape ``(nmax + 1,) + t.shape`` holding J_0..J_nmax."""
    t = np.asarray(t, dtype=float)
    return np.stack([bessel_j(n, t) for n in range(nmax + 1)])


def gamma(x: float) -> float:
    return math.gamma(x)


def laplace_moment(b: float, mu: complex) -> complex:
    """Full-ray moment int_0^inf r^(b-1) exp(-mu r) dr = Gamma(b) / mu^b."""
    mu = complex(mu)
    if mu.real <= 0:
        raise DomainError("Re mu must be positive")
    return math.gamma(b) * np.exp(-b * np.log(mu))


def laplace_tail(b: float, mu: complex, h: float, tol: float = 1e-13) -> complex:
    """int_h^inf r^(b-1) exp(-mu r) dr.

    Integer ``b`` uses the finite sum ``exp(-mu h) sum_j n!/j! h^j / mu^(n+1-j)``
    with ``n = b - 1``; other orders use oscillatory quadrature on a finite
    interval past which the integrand is below ``exp(-50)`` of its scale.
    """
    mu = complex(mu)
    a, w = mu.real, mu.imag
    if a <= 0:
        raise DomainError("Re mu must be positive")
    scale = np.exp(-mu * h)
    if float(b).is_integer() and b >= 1:
        n = int(b) - 1
        terms = [math.factorial(n) / math.factorial(j) * h**j / mu ** (n + 1 - j) for j in range(n + 1)]
        return complex(scale * sum(terms))

    # shift to s = r - h so the weight starts at the origin
    def f(s):
        return (h + s) ** (b - 1.0) * math.exp(-a * s)

    peak = max((b - 1.0) / a - h, 0.0)
    upper = peak + (50.0 + abs(b - 1.0) * math.log1p(peak + h + 50.0 / a)) / a
    if abs(w) < 1e-14:
        re, _ = integrate.quad(f, 0.0, upper, epsabs=tol, epsrel=1e-13, limit=400)
        return complex(scale * re)
    c, _ = integrate.quad(f, 0.0, upper, weight="cos", wvar=abs(w), epsabs=tol, epsrel=1e-13, limit=400)
    s, _ = integrate.quad(f, 0.0, upper, weight="sin", wvar=abs(w), epsabs=tol, epsrel=1e-13, limit=400)
    return complex(scale * (c - 1j * np.sign(w) * s))


def truncated_laplace_moment(b: float, mu: complex, h: float):
    """Truncated moment int_0^h r^(b-1) exp(-mu r) dr and a certified bound.

    Returns ``(value, bound)`` where ``bound = |Gamma(b)/mu^b| +
    2 exp(-Re(mu) h / 2) / Re(mu)``.  Requires ``Re mu >= 2 (b - 1) / h``.
    """
    mu = complex(mu)
    if b <= 0 or h <= 0:
        raise DomainError("b and h must be positive")
    if mu.real <= 0 or mu.real < 2.0 * (b - 1.0) / h:
        raise DomainError(
            f"Re mu = {mu.real:.6g} below threshold 2(b-1)/h = {2.0 * (b - 1.0) / h:.6g}"
        )
    full = laplace_moment(b, mu)
    value = full - laplace_tail(b, mu, h)
    bound = abs(full) + 2.0 * math.exp(-0.5 * mu.real * h) / mu.real
    return complex(value), float(bound)


def incomplete_moment_int(n: int, mu: complex, h: float) -> complex:
    """Closed form of int_0^h r^n exp(-mu r) dr for integer n >= 0."""
    mu = complex(mu)
    x = mu * h
    if n == 0:
        return -np.expm1(-x) / mu
    pref = math.factorial(n) / mu ** (n + 1)
    if abs(x) <= n + 2:
        # e^{-x} sum_{j>n} x^j / j!, free of cancellation for small |x|
        term = x ** (n + 1) / math.factorial(n + 1)
        acc = term
        j = n + 1
        while abs(term) > 1e-18 * abs(acc):
            j += 1
            term = term * x / j
            acc += term
        return complex(pref * np.exp(-x) * acc)
    partial = sum(x**j / math.factorial(j) for j in range(n + 1))
    return complex(pref * (1.0 - np.exp(-x) * partial))
