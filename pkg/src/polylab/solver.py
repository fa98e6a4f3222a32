"""Nystrom solver for exterior impedance scattering by convex polygons.

The total field is represented through Green's formula,

    u(x) = u_i(x) + int_{dK} (dPhi(x, y)/dnu_y + eta(y) Phi(x, y)) u(y) ds(y),

with ``Phi = (i/4) H0(k|x - y|)``.  Letting ``x`` tend to the boundary gives a
second-kind equation for the boundary trace ``u``:

    u/2 - D u - S(eta u) = u_i.

The trace is the unknown, so ``du/dnu = -eta u`` holds on the boundary by
construction.  Each edge is cut into Gauss-Legendre panels whose breakpoints
are graded polynomially (exponent 3) toward both corners.  Interactions between
a target and a nearby panel are integrated against the panel's Lagrange basis
with adaptive bisection, which handles the logarithmic self-singularity and the
nearly singular corner interactions alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .geometry import ImpedanceParam, Polygon
from .special import bessel_j, bessel_jp, hankel01, hankel1, hankel1p

NEAR_RATIO = 0.6
MIN_SUBINTERVAL = 1e-13
CHUNK = 400_000
ON_LINE_TOL = 1e-13


class SolverError(RuntimeError):
    """Linear system could not be solved reliably."""


class EvaluationDomainError(ValueError):
    """Evaluation point lies inside or on the obstacle."""


class GridMismatchError(ValueError):
    """Far-field patterns sampled on different direction grids."""


class ResonanceError(RuntimeError):
    """A separable-series denominator vanishes."""


@dataclass(frozen=True)
class IncidentWave:
    k: float
    p: tuple

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if self.k <= 0:
            raise ValueError("wavenumber must be positive")
        if abs(np.hypot(*p) - 1.0) > 1e-12:
            raise ValueError("propagation direction must be a unit vector")
        object.__setattr__(self, "p", (float(p[0]), float(p[1])))

    @classmethod
    def from_angle(cls, k: float, angle: float) -> "IncidentWave":
        return cls(k, (math.cos(angle), math.sin(angle)))

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.exp(1j * self.k * (pts[..., 0] * self.p[0] + pts[..., 1] * self.p[1]))

    def gradient(self, pts):
        u = self(pts)
        return 1j * self.k * u[..., None] * np.asarray(self.p)


@dataclass(frozen=True)
class Resolution:
    """Mesh control: graded panels per edge and Gauss-Legendre order."""

    panels_per_edge: int = 12
    order: int = 16
    grading: float = 3.0

    def refined(self, factor: int = 2) -> "Resolution":
        return Resolution(self.panels_per_edge * factor, self.order, self.grading)


def grading_map(s, q: float = 3.0):
    """Symmetric polynomial grading of [0, 1] clustering toward both ends."""
    s = np.asarray(s, dtype=float)
    return s**q / (s**q + (1.0 - s) ** q)


@lru_cache(maxsize=8)
def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _bary_weights(nodes):
    d = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(d, 1.0)
    return 1.0 / d.prod(axis=1)


def lagrange_matrix(nodes, x):
    """Values of the Lagrange basis on ``nodes`` at points ``x`` (shape (len(x), len(nodes)))."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    bw = _bary_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    tmp = bw / diff
    out = tmp / tmp.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    if rows.any():
        out[rows] = exact[rows].astype(float)
    return out


def lagrange_derivative_matrix(nodes, x):
    """Derivatives of the Lagrange basis at ``x`` (via monomial-free recursion)."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = nodes.size
    # differentiation matrix on the nodes, then interpolate derivatives
    bw = _bary_weights(nodes)
    d = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(d, 1.0)
    Dm = (bw[None, :] / bw[:, None]) / d
    np.fill_diagonal(Dm, 0.0)
    Dm[np.arange(n), np.arange(n)] = -Dm.sum(axis=1)
    return lagrange_matrix(nodes, x) @ Dm


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Panel discretisation of a polygon boundary.

    Nodes are ordered edge by edge and panel by panel; ``node_frac`` is the
    fractional position of each node along its edge.
    """

    poly: Polygon
    resolution: Resolution
    panel_start: np.ndarray
    panel_end: np.ndarray
    panel_edge: np.ndarray
    panel_frac: np.ndarray  # (n_panels, 2) edge fractions of panel ends
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    node_edge: np.ndarray
    node_frac: np.ndarray
    node_panel: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_panels(self) -> int:
        return self.panel_start.shape[0]

    @property
    def order(self) -> int:
        return self.resolution.order

    @property
    def panel_length(self) -> np.ndarray:
        d = self.panel_end - self.panel_start
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def reference_nodes(self) -> np.ndarray:
        """Gauss nodes mapped to [0, 1]."""
        return 0.5 * (_gauss(self.order)[0] + 1.0)

    def panel_nodes(self, j: int) -> slice:
        p = self.order
        return slice(j * p, (j + 1) * p)

    def smallest_corner_panel(self) -> float:
        return float(self.panel_length.min())

    def local_spacing(self, pts) -> np.ndarray:
        """Node spacing of the panel nearest to each point."""
        pts = np.atleast_2d(pts)
        d = _point_segment_distance(pts, self.panel_start, self.panel_end)
        j = np.argmin(d, axis=1)
        return self.panel_length[j] / self.order


def build_mesh(poly: Polygon, resolution: Resolution = Resolution()) -> BoundaryMesh:
    p = resolution.order
    npe = resolution.panels_per_edge
    if npe < 1 or p < 2:
        raise ValueError("resolution must be positive")
    g, w = _gauss(p)
    breaks = grading_map(np.linspace(0.0, 1.0, npe + 1), resolution.grading)
    starts, ends, pedge, pfrac = [], [], [], []
    nodes, normals, weights, nedge, nfrac = [], [], [], [], []
    V, E, L = poly.vertices, poly.edges, poly.edge_lengths
    nrm = poly.outward_normals
    for i in range(poly.n):
        for a, b in zip(breaks[:-1], breaks[1:]):
            starts.append(V[i] + a * E[i])
            ends.append(V[i] + b * E[i])
            pedge.append(i)
            pfrac.append((a, b))
            f = a + (b - a) * 0.5 * (g + 1.0)
            nodes.append(V[i] + f[:, None] * E[i])
            normals.append(np.repeat(nrm[i][None], p, axis=0))
            weights.append(0.5 * (b - a) * L[i] * w)
            nedge.append(np.full(p, i))
            nfrac.append(f)
    n_pan = len(starts)
    return BoundaryMesh(
        poly=poly,
        resolution=resolution,
        panel_start=np.array(starts),
        panel_end=np.array(ends),
        panel_edge=np.array(pedge),
        panel_frac=np.array(pfrac),
        nodes=np.concatenate(nodes),
        normals=np.concatenate(normals),
        weights=np.concatenate(weights),
        node_edge=np.concatenate(nedge),
        node_frac=np.concatenate(nfrac),
        node_panel=np.repeat(np.arange(n_pan), p),
    )


def _point_segment_distance(pts, a, b):
    """Distances (n_pts, n_seg) from points to segments."""
    e = b - a
    rel = pts[:, None, :] - a[None]
    s = np.clip(np.sum(rel * e, -1) / np.sum(e * e, -1), 0.0, 1.0)
    d = rel - s[..., None] * e
    return np.hypot(d[..., 0], d[..., 1])


@lru_cache(maxsize=200_000)
def _pattern(xi: float, eta: float, order: int):
    """Composite rule on [0, 1] adapted to a target at (xi, eta) in panel units.

    Returns quadrature points, weights and the panel's Lagrange basis values
    at those points.
    """
    g, w = _gauss(order)
    stack = [(0.0, 1.0)]
    lo_list, hi_list = [], []
    while stack:
        lo, hi = stack.pop()
        ln = hi - lo
        dx = max(lo - xi, 0.0, xi - hi)
        if math.hypot(dx, eta) >= NEAR_RATIO * ln or ln < MIN_SUBINTERVAL:
            lo_list.append(lo)
            hi_list.append(hi)
        else:
            mid = 0.5 * (lo + hi)
            stack.append((lo, mid))
            stack.append((mid, hi))
    lo = np.array(lo_list)
    hi = np.array(hi_list)
    u = (lo[:, None] + (hi - lo)[:, None] * 0.5 * (g + 1.0)).ravel()
    wt = ((hi - lo)[:, None] * 0.5 * w).ravel()
    basis = lagrange_matrix(0.5 * (g + 1.0), u)
    for arr in (u, wt, basis):
        arr.setflags(write=False)
    return u, wt, basis


def _near_pairs(mesh: BoundaryMesh, pts, exclude_own: bool = False):
    """Target/panel pairs closer than ``NEAR_RATIO`` panel lengths."""
    d = _point_segment_distance(pts, mesh.panel_start, mesh.panel_end)
    ti, pj = np.nonzero(d < NEAR_RATIO * mesh.panel_length[None, :])
    return ti, pj


def _kernels(k, x, y, ny, want_grad=False):
    """Double-layer, single-layer and (optionally) their x-gradients."""
    dx = x[..., 0] - y[..., 0]
    dy = x[..., 1] - y[..., 1]
    dot = dx * ny[..., 0] + dy * ny[..., 1]
    return _kernels_disp(k, dx, dy, dot, ny, want_grad)


def _kernels_disp(k, dx, dy, dot, ny, want_grad=False):
    """Kernels from the displacement ``x - y`` and its normal component ``dot``."""
    r = np.hypot(dx, dy)
    # coincident points only occur on the diagonal, which is overwritten later
    r = np.where(r > 0, r, 1.0)
    h0, h1 = hankel01(k * r)
    dl = (0.25j * k) * h1 * dot / r
    sl = 0.25j * h0
    if not want_grad:
        return dl, sl
    # grad_x of (i/4) H0(kr) = -(ik/4) H1(kr) (x - y)/r
    gs = (-0.25j * k) * h1 / r
    sl_grad = np.stack([gs * dx, gs * dy], -1)
    # grad_x of (ik/4) H1(kr) dot / r
    h1p_over = k * (h0 - h1 / (k * r))  # d/dr H1(kr)
    a = (0.25j * k) * (h1p_over / r - h1 / r**2) * dot / r
    b = (0.25j * k) * h1 / r
    dl_grad = np.stack([a * dx + b * ny[..., 0], a * dy + b * ny[..., 1]], -1)
    return dl, sl, dl_grad, sl_grad


def _near_blocks(mesh, k, pts, ti, pj, want_grad=False):
    """Product-integration weights for near pairs.

    Returns arrays of shape (n_pairs, order) (and gradients with a trailing
    axis of size 2) such that the contribution of panel ``pj`` to target ``ti``
    is ``block @ density[panel nodes]``.
    """
    p = mesh.order
    L = mesh.panel_length
    A = mesh.panel_start
    B = mesh.panel_end
    n_pairs = ti.size
    dl_out = np.zeros((n_pairs, p), dtype=complex)
    sl_out = np.zeros((n_pairs, p), dtype=complex)
    if want_grad:
        dlg_out = np.zeros((n_pairs, p, 2), dtype=complex)
        slg_out = np.zeros((n_pairs, p, 2), dtype=complex)
    pats = []
    # target position in panel units: along the panel and along its normal
    xis = np.empty(n_pairs)
    etas = np.empty(n_pairs)
    for q, (t, j) in enumerate(zip(ti, pj)):
        e = (B[j] - A[j]) / L[j]
        rel = pts[t] - A[j]
        xi = round(float(rel @ e) / L[j], 13)
        off = float(rel @ mesh.normals[j * p])
        # nodes built on an edge sit off its line only by rounding
        if abs(off) <= ON_LINE_TOL * (1.0 + float(np.abs(A[j]).max())):
            off = 0.0
        eta = round(off / L[j], 13)
        xis[q], etas[q] = xi, eta
        pats.append(_pattern(xi, abs(eta), p))
    start = 0
    while start < n_pairs:
        stop, count = start, 0
        while stop < n_pairs and (count == 0 or count + pats[stop][0].size <= CHUNK):
            count += pats[stop][0].size
            stop += 1
        sizes = np.array([pats[q][0].size for q in range(start, stop)])
        u = np.concatenate([pats[q][0] for q in range(start, stop)])
        wt = np.concatenate([pats[q][1] for q in range(start, stop)])
        owner = np.repeat(np.arange(start, stop), sizes)
        jj = pj[owner]
        ny = mesh.normals[jj * p]
        e = (B[jj] - A[jj]) / L[jj][:, None]
        # displacement rebuilt from panel coordinates so that its normal
        # component is exact for targets on the panel's own line
        along = (xis[owner] - u) * L[jj]
        normal = etas[owner] * L[jj]
        dx = along * e[:, 0] + normal * ny[:, 0]
        dy = along * e[:, 1] + normal * ny[:, 1]
        scale = wt * L[jj]
        res = _kernels_disp(k, dx, dy, normal, ny, want_grad)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        for q in range(start, stop):
            a, b = offsets[q - start], offsets[q - start + 1]
            basis = pats[q][2]
            sc = scale[a:b]
            dl_out[q] = (res[0][a:b] * sc) @ basis
            sl_out[q] = (res[1][a:b] * sc) @ basis
            if want_grad:
                dlg_out[q] = np.einsum("m,mc,mj->jc", sc, res[2][a:b], basis)
                slg_out[q] = np.einsum("m,mc,mj->jc", sc, res[3][a:b], basis)
        start = stop
    if want_grad:
        return dl_out, sl_out, dlg_out, slg_out
    return dl_out, sl_out


def impedance_at_nodes(mesh: BoundaryMesh, eta: ImpedanceParam) -> np.ndarray:
    out = np.empty(mesh.n_nodes, dtype=complex)
    for i in range(mesh.poly.n):
        sel = mesh.node_edge == i
        out[sel] = eta.on_edge(i, mesh.node_frac[sel])
    return out


def assemble(mesh: BoundaryMesh, k: float, eta_nodes: np.ndarray) -> np.ndarray:
    """System matrix of ``u/2 - D u - S(eta u)`` on the mesh nodes."""
    x = mesh.nodes
    n = mesh.n_nodes
    Dm = np.empty((n, n), dtype=complex)
    Sm = np.empty((n, n), dtype=complex)
    rows = max(1, CHUNK // n)
    for a in range(0, n, rows):
        b = min(n, a + rows)
        xx = x[a:b, None, :]
        dl, sl = _kernels(k, xx, x[None], mesh.normals[None])
        Dm[a:b] = dl * mesh.weights
        Sm[a:b] = sl * mesh.weights
    ti, pj = _near_pairs(mesh, x)
    dl_n, sl_n = _near_blocks(mesh, k, x, ti, pj)
    p = mesh.order
    cols = pj[:, None] * p + np.arange(p)
    Dm[ti[:, None], cols] = dl_n
    Sm[ti[:, None], cols] = sl_n
    return 0.5 * np.eye(n) - Dm - Sm * eta_nodes[None, :]


@dataclass
class FarFieldPattern:
    angles: np.ndarray
    values: np.ndarray
    k: float
    p: tuple

    @property
    def m(self) -> int:
        return self.angles.size

    def directions(self) -> np.ndarray:
        return np.stack([np.cos(self.angles), np.sin(self.angles)], 1)


@dataclass(eq=False)
class ScatterSolution:
    """Solved boundary trace together with the data needed to evaluate fields."""

    mesh: BoundaryMesh
    density: np.ndarray
    incident: IncidentWave
    impedance: ImpedanceParam
    eta_nodes: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def poly(self) -> Polygon:
        return self.mesh.poly

    @property
    def k(self) -> float:
        return self.incident.k

    def trace_on_edge(self, edge: int, frac, derivative: bool = False):
        """Interpolated trace u (and optionally du/ds) at edge fractions."""
        mesh = self.mesh
        frac = np.atleast_1d(np.asarray(frac, dtype=float))
        pans = np.nonzero(mesh.panel_edge == edge)[0]
        fr = mesh.panel_frac[pans]
        idx = np.clip(np.searchsorted(fr[:, 1], frac, side="left"), 0, len(pans) - 1)
        out = np.empty(frac.shape, dtype=complex)
        dout = np.empty(frac.shape, dtype=complex)
        ref = mesh.reference_nodes
        Lpan = mesh.panel_length
        for q in np.unique(idx):
            j = pans[q]
            sel = idx == q
            loc = (frac[sel] - fr[q, 0]) / (fr[q, 1] - fr[q, 0])
            vals = self.density[mesh.panel_nodes(j)]
            out[sel] = lagrange_matrix(ref, loc) @ vals
            if derivative:
                dout[sel] = (lagrange_derivative_matrix(ref, loc) @ vals) / Lpan[j]
        if derivative:
            return out, dout
        return out


def solve(
    poly: Polygon,
    eta: ImpedanceParam,
    inc: IncidentWave,
    resolution: Resolution = Resolution(),
    check: bool = True,
) -> ScatterSolution:
    """Solve the exterior impedance problem and return the boundary trace."""
    mesh = build_mesh(poly, resolution)
    eta_nodes = impedance_at_nodes(mesh, eta)
    A = assemble(mesh, inc.k, eta_nodes)
    rhs = inc(mesh.nodes)
    anorm = np.linalg.norm(A, 1)
    try:
        lu, piv = sla.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"factorisation failed: {exc}") from exc
    rcond, _ = sla.lapack.zgecon(lu, anorm, norm="1")
    if not np.isfinite(rcond) or rcond < 1e-14:
        raise SolverError(f"system is numerically singular (rcond = {rcond:.3e})")
    u = sla.lu_solve((lu, piv), rhs)
    res = np.linalg.norm(A @ u - rhs) / np.linalg.norm(rhs)
    diag = {"relative_residual": float(res), "rcond": float(rcond), "n_nodes": mesh.n_nodes}
    if res > 1e-10:
        raise SolverError(f"relative residual {res:.3e} above 1e-10")
    sol = ScatterSolution(mesh, u, inc, eta, eta_nodes, diag)
    if check:
        diag["bc_residual"] = boundary_condition_residual(sol)
    return sol


def _layer_apply(sol: ScatterSolution, pts, want_grad=False):
    mesh = sol.mesh
    k = sol.k
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    dens = sol.density
    sdens = sol.eta_nodes * dens
    n = pts.shape[0]
    val = np.zeros(n, dtype=complex)
    grad = np.zeros((n, 2), dtype=complex) if want_grad else None
    rows = max(1, CHUNK // mesh.n_nodes)
    wd = mesh.weights * dens
    ws = mesh.weights * sdens
    ti, pj = _near_pairs(mesh, pts)
    near_mask = np.zeros((n, mesh.n_panels), dtype=bool)
    near_mask[ti, pj] = True
    node_near = near_mask[:, mesh.node_panel]
    for a in range(0, n, rows):
        b = min(n, a + rows)
        res = _kernels(k, pts[a:b, None, :], mesh.nodes[None], mesh.normals[None], want_grad)
        keep = ~node_near[a:b]
        val[a:b] = (res[0] * keep) @ wd + (res[1] * keep) @ ws
        if want_grad:
            grad[a:b] = np.einsum("tnc,n->tc", res[2] * keep[..., None], wd) + np.einsum(
                "tnc,n->tc", res[3] * keep[..., None], ws
            )
    if ti.size:
        blocks = _near_blocks(mesh, k, pts, ti, pj, want_grad)
        p = mesh.order
        cols = pj[:, None] * p + np.arange(p)
        contrib = np.sum(blocks[0] * dens[cols], 1) + np.sum(blocks[1] * sdens[cols], 1)
        np.add.at(val, ti, contrib)
        if want_grad:
            g = np.einsum("qjc,qj->qc", blocks[2], dens[cols]) + np.einsum(
                "qjc,qj->qc", blocks[3], sdens[cols]
            )
            np.add.at(grad, ti, g)
    return val, grad


def _check_exterior(sol, pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if sol.poly.contains(pts, closed=True).any():
        raise EvaluationDomainError("evaluation point inside or on the obstacle")
    return pts


def evaluate_scattered(sol: ScatterSolution, pts) -> np.ndarray:
    pts_arr = np.asarray(pts, dtype=float)
    flat = _check_exterior(sol, pts_arr)
    return _layer_apply(sol, flat)[0].reshape(pts_arr.shape[:-1])


def evaluate_total(sol: ScatterSolution, pts) -> np.ndarray:
    """Total field ``u = u_i + u_s`` at exterior points."""
    pts_arr = np.asarray(pts, dtype=float)
    flat = _check_exterior(sol, pts_arr)
    val = sol.incident(flat) + _layer_apply(sol, flat)[0]
    return val.reshape(pts_arr.shape[:-1])


def evaluate_gradient(sol: ScatterSolution, pts):
    """Total field and its gradient at exterior points."""
    pts_arr = np.asarray(pts, dtype=float)
    flat = _check_exterior(sol, pts_arr)
    val, grad = _layer_apply(sol, flat, want_grad=True)
    val = val + sol.incident(flat)
    grad = grad + sol.incident.gradient(flat)
    return val.reshape(pts_arr.shape[:-1]), grad.reshape(pts_arr.shape[:-1] + (2,))


def boundary_traces(sol: ScatterSolution):
    """Total field ``u`` and ``du/dnu`` at the quadrature nodes."""
    u = sol.density.copy()
    return u, -sol.eta_nodes * u


def boundary_condition_residual(sol: ScatterSolution, fracs=(0.3, 0.5, 0.7)) -> float:
    """Independent check of ``du/dnu + eta u = 0`` at off-node edge points.

    The representation is evaluated along the outward normal at several
    distances and extrapolated to the boundary by a polynomial fit; the
    residual is normalised by the largest trace magnitude.
    """
    poly = sol.poly
    nrm = poly.outward_normals
    out = 0.0
    scale = np.abs(sol.density).max()
    for i in range(poly.n):
        L = poly.edge_lengths[i]
        delta = 0.01 * L * np.arange(1, 8)
        for f in fracs:
            x0 = poly.vertices[i] + f * poly.edges[i]
            pts = x0 + delta[:, None] * nrm[i]
            vals = evaluate_total(sol, pts)
            c = np.polynomial.polynomial.polyfit(delta, vals, 6)
            eta = sol.impedance.on_edge(i, f)
            out = max(out, abs(c[1] + eta * c[0]) / scale)
    return float(out)


def far_field_factor(k: float) -> complex:
    """Constant mapping the Hankel asymptotics of ``Phi`` to the plain expansion."""
    return 0.25j * math.sqrt(2.0 / (math.pi * k)) * np.exp(-0.25j * math.pi)


def far_field(sol: ScatterSolution, m: int = 128) -> FarFieldPattern:
    """Far-field pattern on ``m`` uniform directions.

    Normalisation: ``u_s(x) = exp(ik|x|)/|x|^(1/2) (u_inf(x/|x|) + O(|x|^(-1/2)))``.
    """
    if m < 64:
        raise ValueError("need at least 64 far-field directions")
    ang = 2 * np.pi * np.arange(m) / m
    xh = np.stack([np.cos(ang), np.sin(ang)], 1)
    return FarFieldPattern(ang, far_field_at(sol, xh), sol.k, sol.incident.p)


def far_field_at(sol: ScatterSolution, xhat) -> np.ndarray:
    mesh = sol.mesh
    k = sol.k
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    phase = np.exp(-1j * k * xhat @ mesh.nodes.T)
    kern = (-1j * k * (xhat @ mesh.normals.T) + sol.eta_nodes[None]) * phase
    return far_field_factor(k) * (kern @ (mesh.weights * sol.density))


def trig_upsample(values: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto a ``factor``-times finer grid."""
    m = values.size
    c = np.fft.fft(values)
    M = m * factor
    out = np.zeros(M, dtype=complex)
    half = m // 2
    out[:half] = c[:half]
    out[M - half + (m % 2 == 0) :] = c[half + (m % 2 == 0) :]
    if m % 2 == 0:
        out[half] = 0.5 * c[half]
        out[M - half] = 0.5 * c[half]
    return np.fft.ifft(out) * factor


def far_field_error(F1: FarFieldPattern, F2: FarFieldPattern, upsample: int = 4) -> float:
    """Sup-norm distance after trigonometric upsampling."""
    if F1.m != F2.m or not np.array_equal(F1.angles, F2.angles):
        raise GridMismatchError("far-field patterns use different direction grids")
    diff = F1.values - F2.values
    if not diff.any():
        return 0.0
    return float(np.abs(trig_upsample(diff, upsample)).max())


def write_far_field_csv(F: FarFieldPattern, path) -> None:
    with open(path, "w") as fh:
        fh.write("angle_rad,re,im\n")
        for a, v in zip(F.angles, F.values):
            fh.write(f"{a:.17g},{v.real:.17g},{v.imag:.17g}\n")


def read_far_field_csv(path, k: float = float("nan"), p=(1.0, 0.0)) -> FarFieldPattern:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return FarFieldPattern(data[:, 0], data[:, 1] + 1j * data[:, 2], k, tuple(p))


# ---------------------------------------------------------------- disk oracle


@dataclass
class DiskSeries:
    radius: float
    eta: complex
    incident: IncidentWave
    coefficients: np.ndarray  # c_n for n = -n_max..n_max

    @property
    def n_max(self) -> int:
        return (self.coefficients.size - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def _angle(self, pts):
        p = self.incident.p
        return np.arctan2(pts[..., 1], pts[..., 0]) - math.atan2(p[1], p[0])

    def scattered(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        r = np.hypot(pts[..., 0], pts[..., 1])
        if (r < self.radius).any():
            raise EvaluationDomainError("point inside the disk")
        th = self._angle(pts)
        k = self.incident.k
        out = np.zeros(r.shape, dtype=complex)
        for n, c in zip(self.orders, self.coefficients):
            hn = hankel1(abs(n), k * r) * (-1.0) ** (n if n < 0 else 0)
            out += c * (1j**n) * hn * np.exp(1j * n * th)
        return out

    def total(self, pts) -> np.ndarray:
        return self.incident(pts) + self.scattered(pts)

    def far_field(self, m: int = 128) -> FarFieldPattern:
        ang = 2 * np.pi * np.arange(m) / m
        return FarFieldPattern(ang, self.far_field_at(ang), self.incident.k, self.incident.p)

    def far_field_at(self, ang) -> np.ndarray:
        p = self.incident.p
        th = np.asarray(ang) - math.atan2(p[1], p[0])
        k = self.incident.k
        s = np.exp(1j * np.outer(th, self.orders)) @ self.coefficients
        return math.sqrt(2.0 / (math.pi * k)) * np.exp(-0.25j * math.pi) * s

    def scattering_cross_section(self, m: int = 256) -> float:
        """``k * int |u_inf|^2`` by the trapezoidal rule on ``m`` directions."""
        F = self.far_field(m)
        return float(self.incident.k * 2 * np.pi * np.mean(np.abs(F.values) ** 2))

    def boundary_flux(self, m: int = 256) -> float:
        """Outgoing scattered energy flux ``int Im(conj(u_s) du_s/dr)`` on r = a."""
        k = self.incident.k
        a = self.radius
        th = 2 * np.pi * np.arange(m) / m
        us = np.zeros(m, dtype=complex)
        dus = np.zeros(m, dtype=complex)
        for n, c in zip(self.orders, self.coefficients):
            sign = (-1.0) ** (n if n < 0 else 0)
            e = c * (1j**n) * sign * np.exp(1j * n * th)
            us += e * hankel1(abs(n), k * a)
            dus += e * k * hankel1p(abs(n), k * a)
        return float(a * 2 * np.pi * np.mean(np.imag(np.conj(us) * dus)))


def disk_coefficient(n: int, ka: float, k: float, eta: complex) -> complex:
    n = abs(int(n))
    num = k * bessel_jp(n, ka) + eta * bessel_j(n, ka)
    den = k * hankel1p(n, ka) + eta * hankel1(n, ka)
    if abs(den) < 1e-300:
        raise ResonanceError(f"vanishing denominator at order {n}")
    return complex(-num / den)


def disk_series_oracle(radius: float, eta_const: complex, inc: IncidentWave, n_max: int | None = None):
    """Separable solution for a disk of radius ``radius`` centred at the origin."""
    k = inc.k
    ka = k * radius
    if ka > 20:
        raise ValueError("ka must be at most 20")
    if n_max is None:
        n_max = int(math.ceil(ka)) + 20
    if n_max < ka + 20:
        raise ValueError("n_max must be at least ka + 20")
    orders = np.arange(-n_max, n_max + 1)
    coef = np.array([disk_coefficient(n, ka, k, eta_const) for n in orders])
    series = DiskSeries(radius, complex(eta_const), inc, coef)
    return series, series.far_field()
