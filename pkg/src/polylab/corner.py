"""Local analysis of a field near a polygon corner.

A Helmholtz solution that is analytic in a disk ``B_h`` around a vertex is
expanded as ``sum_n (a_n e^{in theta} + b_n e^{-in theta}) J_n(k r)`` with
``b_0 = 0``.  The index of the first non-negligible mode is its vanishing
order ``N``.  The ledger below evaluates, term by term, the Green identity
between an exponential probe and that field on the truncated sector
``Q_h = B_h ∩ K`` and compares each term with an a-priori bound built from
measured constants.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .cgo import (
    CgoProbe,
    DirectionCertificate,
    _sector_margin,
    corner_functional,
    edge_normal_derivative,
    edge_rate,
    leading_scale,
    real_laplace_bound,
    real_tail,
)
from .geometry import CornerFrame, ImpedanceParam
from .solver import ScatterSolution, _gauss, evaluate_total
from .special import bessel_j_table, incomplete_moment_int, laplace_moment


class ConfigurationError(ValueError):
    """Geometric precondition of the corner analysis violated."""


class InfiniteVanishingOrder(ValueError):
    """Every expansion coefficient is below the threshold."""


J_FLOOR = 1e-280
NOISE_FLOOR = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class FourierBesselExpansion:
    center: np.ndarray
    radius: float
    k: float
    a: np.ndarray
    b: np.ndarray
    residual: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(2))
    requested_n_max: int = 0
    sup_norm: float = 0.0  # max |samples| on the sampling circle

    @property
    def n_max(self) -> int:
        return self.a.size - 1

    def local_polar(self, pts):
        loc = (np.asarray(pts, dtype=float) - self.center) @ self.rotation.T
        return np.hypot(loc[..., 0], loc[..., 1]), np.arctan2(loc[..., 1], loc[..., 0])

    def _modes(self, theta, n):
        return self.a[n] * np.exp(1j * n * theta) + self.b[n] * np.exp(-1j * n * theta)

    def evaluate_polar(self, r, theta, drop_leading: int | None = None):
        """Field at local polar coordinates; optionally minus the leading term of order ``drop_leading``."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        J = bessel_j_table(self.n_max, self.k * r)
        out = np.zeros(np.broadcast(r, theta).shape, dtype=complex)
        for n in range(self.n_max + 1):
            if self.a[n] == 0 and self.b[n] == 0:
                continue
            radial = J[n]
            if n == drop_leading:
                radial = radial - leading_scale(n, self.k) * r**n
            out += self._modes(theta, n) * radial
        return out

    def evaluate(self, pts):
        r, th = self.local_polar(pts)
        return self.evaluate_polar(r, th)

    def gradient_polar(self, r, theta):
        """Local Cartesian gradient at polar coordinates."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        k = self.k
        J = bessel_j_table(self.n_max + 1, k * r)
        dr = np.zeros(np.broadcast(r, theta).shape, dtype=complex)
        dt = np.zeros_like(dr)
        for n in range(self.n_max + 1):
            if self.a[n] == 0 and self.b[n] == 0:
                continue
            jm = -J[1] if n == 0 else J[n - 1]
            dr += self._modes(theta, n) * 0.5 * k * (jm - J[n + 1])
            if n > 0:
                # J_n(kr)/r written without the division so r = 0 is harmless
                j_over_r = (0.5 * k / n) * (J[n - 1] + J[n + 1])
                tang = 1j * n * (self.a[n] * np.exp(1j * n * theta) - self.b[n] * np.exp(-1j * n * theta))
                dt += tang * j_over_r
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([c * dr - s * dt, s * dr + c * dt], -1)

    def gradient(self, pts):
        """Gradient in global coordinates."""
        r, th = self.local_polar(pts)
        return self.gradient_polar(r, th) @ self.rotation


def expand_on_circle(samples, k: float, h: float, n_max: int = 32, center=(0.0, 0.0), rotation=None):
    """Fourier-Bessel coefficients from samples at ``m`` uniform angles on ``|x - center| = h``.

    Sample ``j`` sits at local angle ``2 pi j / m``; ``rotation`` maps global
    offsets to the local frame (identity by default).  Modes whose Fourier
    coefficient is at rounding level, or whose ``J_n(kh)`` underflows, are
    dropped.
    """
    samples = np.asarray(samples, dtype=complex)
    m = samples.size
    if m < 4 * n_max:
        raise ValueError("need at least 4 n_max samples")
    if not (0 < k * h < 1):
        raise ValueError("expansion requires 0 < kh < 1")
    c = np.fft.fft(samples) / m
    Jh = bessel_j_table(n_max, k * h)
    eff = n_max
    small = np.nonzero(np.abs(Jh) < J_FLOOR)[0]
    if small.size:
        eff = int(small[0]) - 1
    cp = c[: eff + 1].copy()
    cm = np.concatenate([[0.0], c[::-1][: eff]])  # c_{-n} for n = 0..eff
    floor = NOISE_FLOOR * max(np.abs(c).max(), np.finfo(float).tiny)
    cp[np.abs(cp) <= floor] = 0.0
    cm[np.abs(cm) <= floor] = 0.0
    a = cp / Jh[: eff + 1]
    b = cm / Jh[: eff + 1]
    b[0] = 0.0
    rot = np.eye(2) if rotation is None else np.asarray(rotation, dtype=float)
    exp = FourierBesselExpansion(np.asarray(center, dtype=float), float(h), float(k), a, b, 0.0, rot, n_max)
    th = 2 * np.pi * np.arange(m) / m
    resid = float(np.abs(exp.evaluate_polar(np.full(m, h), th) - samples).max())
    sup = float(np.abs(samples).max())
    return FourierBesselExpansion(exp.center, exp.radius, exp.k, a, b, resid, rot, n_max, sup)


def sample_circle(field_fn, center, h: float, m: int = 128, rotation=None):
    """Evaluate ``field_fn`` (global points -> values) at ``m`` uniform local angles."""
    rot = np.eye(2) if rotation is None else np.asarray(rotation, dtype=float)
    th = 2 * np.pi * np.arange(m) / m
    loc = h * np.stack([np.cos(th), np.sin(th)], 1)
    return field_fn(loc @ rot + np.asarray(center, dtype=float))


def expand_solution_at_vertex(sol: ScatterSolution, frame: CornerFrame, h: float, n_max: int = 32, m: int = 128):
    """Expansion of a computed total field about a corner vertex of another obstacle."""
    if sol.poly.distance(frame.vertex[None])[0] <= h:
        raise ConfigurationError("the disk around the vertex meets the obstacle")
    vals = sample_circle(lambda p: evaluate_total(sol, p), frame.vertex, h, m, frame.rotation)
    return expand_on_circle(vals, sol.k, h, n_max, frame.vertex, frame.rotation)


@dataclass(frozen=True)
class VanishingOrderResult:
    N: int
    a_N: complex
    b_N: complex
    C_N: float
    R: float
    scale: float


def _tail_constant(exp: FourierBesselExpansion, N: int) -> float:
    k, h = exp.k, exp.radius
    mag = np.abs(exp.a) + np.abs(exp.b)
    out = mag[N] * (k / 2) ** (N + 2) * h / math.factorial(N + 1)
    for n in range(N + 1, exp.n_max + 1):
        if mag[n]:
            out += mag[n] * (k / 2) ** n * h ** (n - N - 1) / math.factorial(n)
    return float(out)


def vanishing_order(exp: FourierBesselExpansion, rel_tol: float = 1e-8) -> VanishingOrderResult:
    """First mode whose coefficient exceeds ``rel_tol`` times the field scale.

    The scale is the sup norm of the sampled field on the circle.  It is
    comparable to the largest coefficient for well-resolved fields but,
    unlike the raw coefficients, is not inflated by rounding noise in
    high modes, whose ``J_n(kh)`` divisor is tiny.
    """
    if not (1e-10 < rel_tol < 1e-2):
        raise ValueError("rel_tol must lie in (1e-10, 1e-2)")
    mag = np.maximum(np.abs(exp.a), np.abs(exp.b))
    scale = exp.sup_norm if exp.sup_norm > 0 else float(mag.max())
    if scale == 0:
        raise InfiniteVanishingOrder("all coefficients vanish: the field is numerically zero near the vertex")
    N = int(np.nonzero(mag > rel_tol * scale)[0][0])
    C_N, R = decompose_constants(exp, N)
    return VanishingOrderResult(N, complex(exp.a[N]), complex(exp.b[N]), C_N, R, scale)


def decompose_constants(exp: FourierBesselExpansion, N: int):
    """``(C_N, R)`` with ``|u_N| <= C_N r^N`` and ``|u - u_N| <= R r^(N+1)`` for ``r <= h``.

    Uses ``|J_n(t)| <= (t/2)^n/n!`` and the alternating-series estimate
    ``|J_N(t) - (t/2)^N/N!| <= (t/2)^(N+2)/(N+1)!`` for ``t < 1``.
    Modes below ``N`` are assumed negligible.
    """
    C_N = (abs(exp.a[N]) + abs(exp.b[N])) * leading_scale(N, exp.k)
    return float(C_N), _tail_constant(exp, N)


def decompose(exp: FourierBesselExpansion, N: int):
    """Leading homogeneous term, remainder (callables of local ``(r, theta)``) and their constants."""
    c = leading_scale(N, exp.k)
    aN, bN = exp.a[N], exp.b[N]

    def leading(r, theta):
        r = np.asarray(r, dtype=float)
        return (aN * np.exp(1j * N * theta) + bN * np.exp(-1j * N * theta)) * c * r**N

    def remainder(r, theta):
        return exp.evaluate_polar(r, theta, drop_leading=N)

    C_N, R = decompose_constants(exp, N)
    return leading, remainder, C_N, R


def ball_moment(exp: FourierBesselExpansion, m: int, rho: float, nr: int = 32, nt: int = 128) -> float:
    """``rho^(-m) * integral over B_rho of |u|`` by polar product quadrature."""
    x, w = _gauss(nr)
    r = 0.5 * rho * (x + 1)
    wr = 0.5 * rho * w
    th = 2 * np.pi * np.arange(nt) / nt
    R, T = np.meshgrid(r, th, indexing="ij")
    vals = np.abs(exp.evaluate_polar(R, T))
    return float(np.sum(wr[:, None] * R * vals) * (2 * np.pi / nt) / rho**m)


def moment_vanishing_order(exp: FourierBesselExpansion, rhos=None, m_max: int = 8, ratio: float = 0.75):
    """Vanishing order read off from ball moments at shrinking radii.

    The moment of exponent ``m`` tends to zero when ``m <= N + 1``; it
    is detected by a decrease by at least ``ratio`` at each halving of
    ``rho``.
    """
    h = exp.radius
    rhos = [h / 4, h / 8, h / 16] if rhos is None else list(rhos)
    decays = []
    for m in range(m_max + 1):
        vals = [ball_moment(exp, m, rho) for rho in rhos]
        decays.append(all(v1 <= ratio * v0 for v0, v1 in zip(vals, vals[1:])))
    n_decay = 0
    while n_decay < len(decays) and decays[n_decay]:
        n_decay += 1
    return n_decay - 2, decays


def tau_schedule(N: int, h: float, T_eps: float, k: float = 1.0, tau0: float | None = None):
    """Probe parameter balancing the corner estimates; returns ``(tau, admissible)``."""
    if not (0 < T_eps < 1 and 0 < h < 1):
        raise ValueError("need T_eps and h in (0, 1)")
    if N == 0:
        tau = T_eps ** (-0.5) * h ** (-9 / 4)
    else:
        tau = T_eps ** (-1 / (N + 1)) * h ** (-(N + 3) / (N + 1))
    if tau0 is None:
        tau0 = default_tau0(k, h)
    return float(tau), bool(tau > max(2 * (N + 1) / h, k, tau0))


def default_tau0(k: float, h: float) -> float:
    return 10.0 * max(k, 1.0 / h)


# ---------------------------------------------------------------------------
# identity ledger

LEDGER_TERMS = (
    "w_flux",
    "w_eta0",
    "w_deta",
    "lead_eta0",
    "lead_deta",
    "rem_eta0",
    "rem_deta",
    "rem_flux",
    "ray_tail",
    "arc",
)


@dataclass(frozen=True)
class LedgerTerm:
    name: str
    value: complex
    bound: float
    shape: float
    constant: float

    @property
    def bound_ok(self) -> bool:
        return abs(self.value) <= self.bound * (1 + 1e-9) + 1e-300


@dataclass
class IdentityLedger:
    lhs: complex
    terms: list
    residual: float
    precursor: complex
    tau: float
    h: float
    N: int
    alpha_prime: float
    notes: list = field(default_factory=list)

    @property
    def rhs(self) -> complex:
        return complex(sum(t.value for t in self.terms))

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.lhs), max(abs(t.value) for t in self.terms))
        return self.residual / scale if scale else self.residual

    @property
    def all_bounds_ok(self) -> bool:
        return all(t.bound_ok for t in self.terms)

    def term(self, name: str) -> LedgerTerm:
        return next(t for t in self.terms if t.name == name)

    def constants(self) -> dict:
        return {f"C{i + 1}": t.constant for i, t in enumerate(self.terms)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["term_name", "re", "im", "abs", "bound", "bound_ok"])
            wr.writerow(["lhs", repr(self.lhs.real), repr(self.lhs.imag), repr(abs(self.lhs)), "nan", "true"])
            for t in self.terms:
                v = complex(t.value)
                wr.writerow([t.name, repr(v.real), repr(v.imag), repr(abs(v)), repr(t.bound), str(t.bound_ok).lower()])


def _edge_rule(h: float, order: int, extra=(), levels: int = 40):
    """Composite Gauss rule on [0, h] graded geometrically towards 0."""
    br = {0.0, h}
    br.update(h * 0.5**j for j in range(1, levels))
    br.update(float(b) for b in extra if 0 < b < h)
    br = np.array(sorted(br))
    x, w = _gauss(order)
    a, b = br[:-1, None], br[1:, None]
    nodes = 0.5 * (b - a) * (x + 1) + a
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def _solution_trace(sol: ScatterSolution, frame: CornerFrame):
    L = sol.poly.edge_lengths

    def trace(which, r):
        if which == "-":
            return sol.trace_on_edge(frame.minus_edge, r / L[frame.minus_edge])
        return sol.trace_on_edge(frame.plus_edge, 1.0 - r / L[frame.plus_edge])

    def breaks(which, h):
        mesh = sol.mesh
        e = frame.minus_edge if which == "-" else frame.plus_edge
        fr = mesh.panel_frac[mesh.panel_edge == e].ravel()
        r = fr * L[e] if which == "-" else (1.0 - fr) * L[e]
        return r[(r > 0) & (r < h)]

    return trace, breaks


def _edge_eta(eta: ImpedanceParam, frame: CornerFrame, which: str, r, lengths=None):
    if eta.is_constant:
        return np.full(np.shape(r), complex(eta.constant))
    if which == "-":
        return eta.on_edge(frame.minus_edge, r / lengths[frame.minus_edge])
    return eta.on_edge(frame.plus_edge, 1.0 - r / lengths[frame.plus_edge])


def integral_identity_ledger(
    solK,
    solK2,
    frame: CornerFrame,
    h: float,
    probe: CgoProbe,
    eta: ImpedanceParam,
    cert: DirectionCertificate | None = None,
    N: int | None = None,
    T_eps: float | None = None,
    order: int = 16,
    arc_panels: int = 32,
    rel_tol: float = 1e-8,
    n_max: int = 32,
    edge_lengths=None,
) -> IdentityLedger:
    """Evaluate both sides of the probe/field corner identity term by term.

    ``solK`` supplies the trace of ``u`` on the two corner edges: either a
    :class:`ScatterSolution` or a callable ``trace(which, r)``.  ``solK2``
    is either a :class:`ScatterSolution` (expanded about the vertex) or a
    ready :class:`FourierBesselExpansion` centred there.  The boundary flux
    of ``u`` is taken from the impedance condition.
    """
    k = probe.k
    tau = probe.tau
    if not (0 < h <= frame.h):
        raise ConfigurationError("h must lie in (0, frame.h]")
    if not k * h < 1:
        raise ConfigurationError("corner radius must satisfy kh < 1")
    if isinstance(solK2, FourierBesselExpansion):
        exp2 = solK2
        if not np.allclose(exp2.center, frame.vertex) or exp2.radius < h:
            raise ConfigurationError("expansion must be centred at the vertex with radius >= h")
    else:
        exp2 = expand_solution_at_vertex(solK2, frame, h, n_max)
    if isinstance(solK, ScatterSolution):
        trace, breaks = _solution_trace(solK, frame)
        lengths = solK.poly.edge_lengths
    else:
        trace, breaks = solK, (lambda which, hh: ())
        lengths = edge_lengths
    if not eta.is_constant and lengths is None:
        raise ConfigurationError("edge lengths needed for a variable impedance")

    if N is None:
        vo = vanishing_order(exp2, rel_tol)
        N = vo.N
    C_N, R = decompose_constants(exp2, N)
    aN, bN = complex(exp2.a[N]), complex(exp2.b[N])
    cN = leading_scale(N, k)
    th0 = frame.theta0
    margin = _sector_margin(probe.phi, th0)
    alpha = cert.alpha_prime if cert is not None else margin
    rho = probe.rho
    rho_abs = probe.rho_norm
    eta0 = complex(_edge_eta(eta, frame, "-", np.zeros(1), lengths)[0])

    vals = dict.fromkeys(LEDGER_TERMS, 0j)
    sup_dw = sup_w = 0.0
    lip_eta = 0.0
    tails = []
    precursor = 0j
    for which in ("-", "+"):
        theta_e = 0.0 if which == "-" else th0
        r, w = _edge_rule(h, order, breaks(which, h))
        xl = r[:, None] * frame.ray(which)
        xg = frame.to_global(xl)
        u0 = probe(xl)
        mult = edge_normal_derivative(probe, frame, which)
        du0 = mult * u0
        nu = frame.vector_to_global(frame.normal(which))
        u2 = exp2.evaluate(xg)
        du2 = exp2.gradient(xg) @ nu
        u = np.asarray(trace(which, r), dtype=complex)
        eta_r = _edge_eta(eta, frame, which, r, lengths)
        deta = eta_r - eta0
        du = -eta_r * u
        coef = aN * np.exp(1j * N * theta_e) + bN * np.exp(-1j * N * theta_e)
        lead = coef * cN * r**N
        rem = exp2.evaluate_polar(r, np.full_like(r, theta_e), drop_leading=N)
        vals["w_flux"] += np.sum(w * u0 * (du2 - du))
        vals["w_eta0"] += -eta0 * np.sum(w * u0 * (u - u2))
        vals["w_deta"] += -np.sum(w * deta * u0 * (u - u2))
        vals["lead_eta0"] += -eta0 * np.sum(w * u0 * lead)
        vals["lead_deta"] += -np.sum(w * deta * u0 * lead)
        vals["rem_eta0"] += -eta0 * np.sum(w * rem * u0)
        vals["rem_deta"] += -np.sum(w * deta * rem * u0)
        vals["rem_flux"] += -np.sum(w * rem * du0)
        mu = edge_rate(probe, frame, which)
        vals["ray_tail"] += mult * coef * cN * (laplace_moment(N + 1, mu) - incomplete_moment_int(N, mu, h))
        precursor += np.sum(w * (u0 * du2 - u2 * du0))
        sup_dw = max(sup_dw, float(np.abs(du - du2).max()))
        sup_w = max(sup_w, float(np.abs(u - u2).max()))
        lip_eta = max(lip_eta, float(np.max(np.abs(deta) / r)))
        a_re = mu.real
        if a_re * h >= 2 * N and h <= math.e:
            tb = 2 * math.exp(-0.5 * a_re * h) / a_re
        else:
            tb = real_tail(N + 1, a_re, h)
        tails.append(abs(mult) * abs(coef) * cN * tb)

    xa, wa = _gauss(order)
    edges = np.linspace(0.0, th0, arc_panels + 1)
    phi = (0.5 * (edges[1:, None] - edges[:-1, None]) * (xa + 1) + edges[:-1, None]).ravel()
    wphi = (0.5 * (edges[1:, None] - edges[:-1, None]) * wa).ravel()
    xhat = np.stack([np.cos(phi), np.sin(phi)], 1)
    xl = h * xhat
    xg = frame.to_global(xl)
    u0 = probe(xl)
    du0 = u0 * (xhat @ rho)
    u2 = exp2.evaluate(xg)
    g2 = exp2.gradient_polar(np.full_like(phi, h), phi)
    du2 = np.sum(g2 * xhat, 1)
    arc = h * np.sum(wphi * (u0 * du2 - u2 * du0))
    vals["arc"] = arc
    precursor += arc
    sup_g2 = float(np.abs(g2).max())
    sup_u2 = float(np.abs(u2).max())

    lhs = corner_functional(aN, bN, N, k, frame, probe)[2]
    rhs = sum(vals[n] for n in LEDGER_TERMS)

    at = alpha * tau
    B = lambda b: real_laplace_bound(b, at, h)  # noqa: E731
    eh = math.exp(-0.5 * tau * h) / tau
    T = 1.0 if T_eps is None else T_eps
    bounds = {
        "w_flux": (2 * h * sup_dw, T * h),
        "w_eta0": (2 * h * abs(eta0) * sup_w, T * h),
        "w_deta": (2 * h * h * lip_eta * sup_w, T * h),
        "lead_eta0": (2 * abs(eta0) * C_N * B(N + 1), tau ** -(N + 1) + eh),
        "lead_deta": (2 * lip_eta * C_N * B(N + 2), tau ** -(N + 2) + eh),
        "rem_eta0": (2 * abs(eta0) * R * B(N + 2), tau ** -(N + 2) + eh),
        "rem_deta": (2 * lip_eta * R * B(N + 3), tau ** -(N + 3) + eh),
        "rem_flux": (2 * R * rho_abs * B(N + 2), tau ** -(N + 1) + math.exp(-0.5 * tau * h)),
        "ray_tail": (sum(tails), math.exp(-0.5 * tau * h)),
        "arc": (th0 * h * math.exp(-at * h) * (sup_g2 + rho_abs * sup_u2), tau * math.sqrt(h) * math.exp(-at * h)),
    }
    terms = []
    for name in LEDGER_TERMS:
        bnd, shape = bounds[name]
        const = bnd / shape if shape > 0 else math.inf
        terms.append(LedgerTerm(name, complex(vals[name]), float(bnd), float(shape), float(const)))
    notes = []
    if cert is None:
        notes.append("decay rate taken from the exact sector margin")
    return IdentityLedger(
        complex(lhs), terms, float(abs(lhs - rhs)), complex(precursor), float(tau), float(h), int(N), float(alpha), notes
    )


def corner_compatible_field(k: float, eta: float, split: float = 0.6):
    """Helmholtz solution obeying ``du/dnu + eta u = 0`` on both edges of a right-angle corner.

    In local coordinates the field is ``cos(k1 x + p1) cos(k2 y + p2)`` with
    ``k1^2 + k2^2 = k^2``; the phases make the impedance condition hold on
    ``y = 0`` (normal ``-e_y``) and on ``x = 0`` (normal ``-e_x``).  Returns a
    callable of local points.
    """
    k1 = k * math.cos(split)
    k2 = k * math.sin(split)
    p1 = math.atan2(-eta, k1)
    p2 = math.atan2(-eta, k2)

    def field_fn(xl):
        xl = np.asarray(xl, dtype=float)
        return (np.cos(k1 * xl[..., 0] + p1) * np.cos(k2 * xl[..., 1] + p2)).astype(complex)

    return field_fn
