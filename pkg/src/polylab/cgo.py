"""Exponential probes ``u0(x) = exp(rho . x)`` with ``rho . rho = -k^2``.

All coordinates here are the local coordinates of a :class:`CornerFrame`:
the vertex sits at the origin, one edge runs along the positive first axis
(``"-"``) and the other along the ray at angle ``theta0`` (``"+"``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as ssp

from .geometry import CornerFrame
from .special import DomainError, incomplete_moment_int, laplace_moment, truncated_laplace_moment


class GeometryError(ValueError):
    """Requested decay rate cannot be certified on the sector."""


class DegenerateDirectionError(RuntimeError):
    """Every tried direction makes the corner functional vanish."""


RETRY_OFFSETS = (0.1, -0.1, 0.2, -0.2, 0.3, -0.3, 0.4, -0.4)


@dataclass(frozen=True)
class CgoProbe:
    tau: float
    k: float
    d: tuple
    d_perp: tuple

    @classmethod
    def from_angle(cls, tau: float, k: float, phi: float) -> "CgoProbe":
        return cls(tau, k, (math.cos(phi), math.sin(phi)), (-math.sin(phi), math.cos(phi)))

    @property
    def phi(self) -> float:
        return math.atan2(self.d[1], self.d[0])

    @property
    def rho(self) -> np.ndarray:
        s = math.sqrt(self.k**2 + self.tau**2)
        return self.tau * np.asarray(self.d) + 1j * s * np.asarray(self.d_perp)

    @property
    def rho_norm(self) -> float:
        """``|rho| = sqrt(k^2 + 2 tau^2)``."""
        return math.sqrt(self.k**2 + 2 * self.tau**2)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        rho = self.rho
        return np.exp(pts[..., 0] * rho[0] + pts[..., 1] * rho[1])

    def gradient(self, pts) -> np.ndarray:
        return self(pts)[..., None] * self.rho

    def mu(self, direction) -> complex:
        """Decay rate ``-rho . xhat`` along a unit direction."""
        return complex(-(self.rho @ np.asarray(direction, dtype=float)))


@dataclass(frozen=True)
class DirectionCertificate:
    frame: CornerFrame
    d: tuple
    alpha_prime: float
    phi: float
    margin: float  # min over the sector of -d . xhat


def _sector_margin(phi: float, theta0: float) -> float:
    # -d . xhat is a cosine in the ray angle; its minimum over [0, theta0] is at an end
    return min(-math.cos(phi), -math.cos(phi - theta0))


def default_phi(theta0: float) -> float:
    """Midpoint of the admissible interval (theta0 + pi/2, 3 pi/2)."""
    return 0.5 * (theta0 + 0.5 * math.pi + 1.5 * math.pi)


def make_probe(tau: float, k: float, frame: CornerFrame, alpha_prime: float | None = None, phi: float | None = None):
    """Build a probe decaying into the corner sector and certify its decay rate."""
    if tau <= 0 or k <= 0:
        raise ValueError("tau and k must be positive")
    th = frame.theta0
    if phi is None:
        phi = default_phi(th)
    if not (th + 0.5 * math.pi < phi < 1.5 * math.pi):
        raise GeometryError("phi outside (theta0 + pi/2, 3 pi/2)")
    margin = _sector_margin(phi, th)
    if alpha_prime is None:
        alpha_prime = 0.9 * margin
    if not (0 < alpha_prime < margin):
        raise GeometryError(f"alpha' = {alpha_prime:.6g} not certifiable (sector margin {margin:.6g})")
    probe = CgoProbe.from_angle(tau, k, phi)
    cert = DirectionCertificate(frame, probe.d, float(alpha_prime), float(phi), float(margin))
    return probe, cert


def edge_normal_derivative(probe: CgoProbe, frame: CornerFrame, which: str) -> complex:
    """Multiplier ``m`` with ``du0/dnu = m u0`` on an edge of the corner."""
    tau, k, phi, th = probe.tau, probe.k, probe.phi, frame.theta0
    s = math.sqrt(1.0 + k**2 / tau**2)
    if which == "+":
        return complex(tau * (math.sin(phi - th) + 1j * s * math.cos(phi - th)))
    if which == "-":
        return complex(tau * (-math.sin(phi) - 1j * s * math.cos(phi)))
    raise ValueError("which must be '+' or '-'")


def edge_rate(probe: CgoProbe, frame: CornerFrame, which: str) -> complex:
    """``mu = -rho . xhat`` on an edge ray; ``u0 = exp(-mu r)`` there."""
    return probe.mu(frame.ray(which))


@dataclass(frozen=True)
class EdgeMoment:
    truncated: complex
    infinite: complex
    tail: complex
    tail_bound: float
    bound: float | None
    mu: complex


def edge_moment(probe: CgoProbe, frame: CornerFrame, N: int, h: float, which: str) -> EdgeMoment:
    """Moments of ``r^N u0`` along one edge, truncated at ``h`` and over the full ray."""
    mu = edge_rate(probe, frame, which)
    if mu.real <= 0:
        raise GeometryError("probe does not decay along this edge")
    full = laplace_moment(N + 1, mu)
    closed = incomplete_moment_int(N, mu, h)
    bound = None
    try:
        value, bound = truncated_laplace_moment(N + 1, mu, h)
    except DomainError:
        value = closed
    tail_bound = 2.0 * math.exp(-0.5 * mu.real * h) / mu.real
    return EdgeMoment(complex(value), complex(full), complex(full - value), tail_bound, bound, mu)


def real_laplace_bound(b: float, a: float, h: float) -> float:
    """Upper bound for ``int_0^h r^(b-1) exp(-a r) dr`` with real ``a > 0``."""
    full = math.gamma(b) / a**b
    return full + 2.0 * math.exp(-0.5 * a * h) / a


def real_tail(b: float, a: float, h: float) -> float:
    """``int_h^inf r^(b-1) exp(-a r) dr`` for real ``a > 0``."""
    return float(math.gamma(b) * ssp.gammaincc(b, a * h) / a**b)


def leading_scale(N: int, k: float) -> float:
    return k**N / (2**N * math.factorial(N))


@dataclass(frozen=True)
class LowerBoundResult:
    z: complex
    w: complex
    value: float
    phi: float
    probe: CgoProbe
    rates: tuple  # (mu_plus, mu_minus)


def corner_functional(a_N, b_N, N: int, k: float, frame: CornerFrame, probe: CgoProbe):
    """Full-ray integral of ``du0/dnu * u'_N`` over both edges, as ``(z, w, value)``.

    With ``z1 = -rho . xhat_+`` and ``z3 = -rho . xhat_-`` the integral equals
    ``Gamma(N+1) k^N/(2^N N!) z / w`` where ``w = (z1 z3)^(N+1)`` and
    ``z = C' z2 z3^(N+1) + C'' z4 z1^(N+1)``.
    """
    th = frame.theta0
    cp = a_N * np.exp(1j * N * th) + b_N * np.exp(-1j * N * th)
    cm = a_N + b_N
    z1 = edge_rate(probe, frame, "+")
    z3 = edge_rate(probe, frame, "-")
    z2 = edge_normal_derivative(probe, frame, "+")
    z4 = edge_normal_derivative(probe, frame, "-")
    z = cp * z2 * z3 ** (N + 1) + cm * z4 * z1 ** (N + 1)
    w = (z1 * z3) ** (N + 1)
    integral = math.gamma(N + 1) * leading_scale(N, k) * z / w
    return complex(z), complex(w), complex(integral), (z1, z3)


def lower_bound_functional(a_N, b_N, N: int, k: float, theta0_or_frame, probe: CgoProbe, rel_floor: float = 1e-12):
    """Evaluate the corner functional, retrying the probe angle if it degenerates."""
    if a_N == 0 and b_N == 0:
        raise ValueError("(a_N, b_N) must not both vanish")
    frame = theta0_or_frame
    if not isinstance(frame, CornerFrame):
        th = float(theta0_or_frame)
        frame = CornerFrame(np.zeros(2), th, np.eye(2), 1.0, 0, 0, 0)
    base = probe.phi % (2 * math.pi)
    for off in (0.0,) + RETRY_OFFSETS:
        phi = base + off
        if not (frame.theta0 + 0.5 * math.pi < phi < 1.5 * math.pi):
            continue
        pr = CgoProbe.from_angle(probe.tau, probe.k, phi)
        z, w, integral, rates = corner_functional(a_N, b_N, N, k, frame, pr)
        scale = (abs(a_N) + abs(b_N)) * pr.tau ** (N + 2)
        if abs(z) > rel_floor * scale:
            return LowerBoundResult(z, w, abs(integral), phi, pr, rates)
    raise DegenerateDirectionError("functional vanishes for all tried directions")
