"""Propagation of smallness for Helmholtz fields.

Sup norms on disks are estimated from a fixed scrambled Halton point set
(10^4 points plus a ring on the boundary), so every run is reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.stats import qmc

from .geometry import Cone, CornerFrame, ErodedGrid, Polygon
from .solver import ScatterSolution, evaluate_gradient, evaluate_total


class GeometryError(ValueError):
    """A ball or chain leaves the region where the field is defined."""


class DisconnectedRegionError(RuntimeError):
    """No path between the requested points in the eroded region."""


class ScheduleError(ValueError):
    """Chain radius does not fit the geometric ceiling."""


SUP_POINTS = 10_000
RING_POINTS = 256


def _unit_disk_points(n: int = SUP_POINTS, ring: int = RING_POINTS) -> np.ndarray:
    u = qmc.Halton(d=2, scramble=True, seed=12345).random(n)
    rad = np.sqrt(u[:, 0])
    ang = 2 * np.pi * u[:, 1]
    inner = np.stack([rad * np.cos(ang), rad * np.sin(ang)], 1)
    t = 2 * np.pi * np.arange(ring) / ring
    return np.vstack([[0.0, 0.0], inner, np.stack([np.cos(t), np.sin(t)], 1)])


_DISK = _unit_disk_points()


def disk_points(center, radius: float) -> np.ndarray:
    return np.asarray(center, dtype=float) + radius * _DISK


@dataclass
class HelmholtzField:
    """A solution of the Helmholtz equation with a domain predicate.

    ``fn`` maps points of shape ``(..., 2)`` to complex values and
    ``inside`` maps points to a boolean mask of the open domain.
    """

    fn: object
    k: float
    inside: object = None
    label: str = ""

    def __call__(self, pts) -> np.ndarray:
        return self.fn(np.asarray(pts, dtype=float))

    def in_domain(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.inside is None:
            return np.ones(pts.shape[:-1], dtype=bool)
        return self.inside(pts)

    def sup(self, center, radius: float) -> float:
        pts = disk_points(center, radius)
        if not self.in_domain(pts).all():
            raise GeometryError("ball leaves the field's domain")
        return float(np.abs(self(pts)).max())

    def helmholtz_residual(self, pts, step: float = 1e-3) -> np.ndarray:
        """Relative five-point residual of ``Δu + k^2 u`` at each point."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ex, ey = np.array([step, 0.0]), np.array([0.0, step])
        c = self(pts)
        lap = (self(pts + ex) + self(pts - ex) + self(pts + ey) + self(pts - ey) - 4 * c) / step**2
        scale = self.k**2 * np.maximum(np.abs(c), 1e-300)
        return np.abs(lap + self.k**2 * c) / np.maximum(scale, self.k**2 * np.abs(c).max())

    def scaled(self, factor: float) -> "HelmholtzField":
        return HelmholtzField(lambda p: factor * self.fn(p), self.k, self.inside, self.label)


def plane_wave_superposition(k: float, n_waves: int = 20, rng=None, normalize: bool = True) -> HelmholtzField:
    """Random sum of plane waves; amplitudes are normalised to unit l1 norm so ``|u| <= 1``."""
    rng = np.random.default_rng(rng)
    ang = rng.uniform(0, 2 * np.pi, n_waves)
    d = np.stack([np.cos(ang), np.sin(ang)], 1)
    amp = rng.normal(size=n_waves) + 1j * rng.normal(size=n_waves)
    if normalize:
        amp = amp / np.abs(amp).sum()

    def fn(pts):
        ph = np.tensordot(pts, d.T, axes=1) * k
        return np.exp(1j * ph) @ amp

    return HelmholtzField(fn, k, None, f"plane waves x{n_waves}")


def outgoing_source(k: float, source, amplitude: complex = 1.0) -> HelmholtzField:
    """Outgoing point source ``H0(k|x - source|)``; decays away from the source."""
    from .special import hankel01

    src = np.asarray(source, dtype=float)

    def fn(pts):
        r = np.hypot(pts[..., 0] - src[0], pts[..., 1] - src[1])
        return amplitude * hankel01(k * r)[0]

    def inside(pts):
        return np.hypot(pts[..., 0] - src[0], pts[..., 1] - src[1]) > 0

    return HelmholtzField(fn, k, inside, "outgoing source")


def _outside(polys):
    def inside(pts):
        ok = np.ones(pts.shape[:-1], dtype=bool)
        for p in polys:
            ok &= ~p.contains(pts, closed=True)
        return ok

    return inside


def difference_field(solK: ScatterSolution, solK2: ScatterSolution) -> HelmholtzField:
    """``w = u - u'`` outside both obstacles."""
    inside = _outside([solK.poly, solK2.poly])

    def fn(pts):
        shp = pts.shape[:-1]
        flat = pts.reshape(-1, 2)
        return (evaluate_total(solK, flat) - evaluate_total(solK2, flat)).reshape(shp)

    return HelmholtzField(fn, solK.k, inside, "solution difference")


# ---------------------------------------------------------------------------
# three-sphere inequality


@dataclass(frozen=True)
class ThreeSphereResult:
    sups: tuple  # (m1, m2, m3)
    radii: tuple  # (r1, r2, r3, s)
    c1: float
    beta_bracket: tuple
    beta: float
    C: float  # smallest constant at ``beta``

    def rhs_shape(self, beta: float | None = None) -> float:
        b = self.beta if beta is None else beta
        r1, r2, r3, s = self.radii
        m1, _, m3 = self.sups
        return (1 - r2 / s) ** -1.5 * m3 ** (1 - b) * m1**b

    def holds(self, C: float, beta: float | None = None) -> bool:
        return self.sups[1] <= C * self.rhs_shape(beta) * (1 + 1e-12)


def beta_bracket(r1: float, r3: float, s: float, c1: float):
    L = math.log(r3 / r1)
    return c1 * math.log(r3 / s) / L, 1 - c1 * math.log(s / r1) / L


def three_sphere_check(fld: HelmholtzField, center, r1, r2, r3, s, c1: float = 0.5) -> ThreeSphereResult:
    """Sampled sup norms on three concentric disks and the smallest admissible constant.

    The smallest constant is reported at the lower end of the exponent
    bracket, where it is smallest because ``m1 <= m3``.
    """
    if not (0 < r1 < r2 < s < r3):
        raise ValueError("need 0 < r1 < r2 < s < r3")
    m1, m2, m3 = (fld.sup(center, r) for r in (r1, r2, r3))
    lo, hi = beta_bracket(r1, r3, s, c1)
    if not lo < hi:
        raise ValueError("empty exponent bracket; decrease c1")
    res = ThreeSphereResult((m1, m2, m3), (r1, r2, r3, s), c1, (lo, hi), lo, 0.0)
    shape = res.rhs_shape(lo)
    C = m2 / shape if shape > 0 else (0.0 if m2 == 0 else math.inf)
    return ThreeSphereResult((m1, m2, m3), (r1, r2, r3, s), c1, (lo, hi), lo, float(C))


@dataclass(frozen=True)
class ThreeSphereFit:
    k: float
    C: float
    beta: float
    c1: float
    radii: tuple
    n_train: int
    n_valid: int
    n_pass: int
    refit_C: float
    run_id: str

    @property
    def step_constant(self) -> float:
        """``C (1 - r2/s)^(-3/2)``, the per-disk factor in the propagation."""
        r1, r2, r3, s = self.radii
        return self.C * (1 - r2 / s) ** -1.5

    @property
    def chain_constant(self) -> float:
        """``C_s`` bounding the accumulated factor along any chain when ``E = 1``."""
        return max(1.0, self.step_constant) ** (1.0 / (1.0 - self.beta))


def fit_three_sphere(
    k: float,
    seed: int = 0,
    n_train: int = 200,
    n_valid: int = 50,
    radii=(0.1, 0.2, 0.4, 0.3),
    c1: float = 0.5,
    margin: float = 1.25,
    n_waves: int = 20,
) -> ThreeSphereFit:
    """Fit one ``(C, beta)`` on random plane-wave sums and validate on fresh ones."""
    r1, r2, r3, s = radii
    rng = np.random.default_rng(seed)
    train = [three_sphere_check(plane_wave_superposition(k, n_waves, rng), (0.0, 0.0), r1, r2, r3, s, c1) for _ in range(n_train)]
    beta = train[0].beta
    C = margin * max(t.C for t in train)
    valid = [three_sphere_check(plane_wave_superposition(k, n_waves, rng), (0.0, 0.0), r1, r2, r3, s, c1) for _ in range(n_valid)]
    n_pass = sum(v.holds(C, beta) for v in valid)
    refit = max(C, max(v.C for v in valid))
    return ThreeSphereFit(k, float(C), float(beta), c1, tuple(radii), n_train, n_valid, int(n_pass), float(refit), f"three-sphere:k={k}:seed={seed}")


# ---------------------------------------------------------------------------
# chains of disks


@dataclass
class DiskChain:
    centers: np.ndarray
    r: float
    d_gamma: float
    path: np.ndarray = field(default=None, repr=False)
    audit: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.centers)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "cx", "cy"])
            for i, c in enumerate(self.centers):
                wr.writerow([i, repr(float(c[0])), repr(float(c[1]))])


def _polyline_length(p: np.ndarray) -> float:
    return float(np.hypot(*np.diff(p, axis=0).T).sum()) if len(p) > 1 else 0.0


def _resample(p: np.ndarray, spacing: float) -> np.ndarray:
    out = [p[0]]
    for a, b in zip(p[:-1], p[1:]):
        L = float(np.hypot(*(b - a)))
        n = max(1, math.ceil(L / spacing - 1e-12))
        t = np.arange(1, n + 1) / n
        out.extend(a + t[:, None] * (b - a))
    return np.asarray(out)


def _clearance(polys, pts) -> np.ndarray:
    d = np.full(len(pts), np.inf)
    for p in polys:
        d = np.minimum(d, p.distance(pts))
    return d


def _segment_free(grid: ErodedGrid, a, b, clearance_r: float) -> bool:
    L = float(np.hypot(*(b - a)))
    n = max(2, int(math.ceil(2 * L / grid.step)) + 1)
    pts = a + np.linspace(0, 1, n)[:, None] * (b - a)
    if grid.polys:
        return bool((_clearance(grid.polys, pts) > clearance_r).all())
    for q in pts:
        i, j = grid.cell_of(q)
        if not (0 <= i < grid.mask.shape[0] and 0 <= j < grid.mask.shape[1] and grid.mask[i, j]):
            return False
    return True


def build_chain(grid: ErodedGrid, start, end, r: float, r_m: float | None = None, cone: Cone | None = None) -> DiskChain:
    """Chain of radius-``r`` disks from ``start`` to ``end`` through the eroded region.

    ``grid`` must be eroded by ``4 r``.  The route is a shortest
    8-connected path on the grid, shortened by line-of-sight pulls and
    resampled so consecutive centres are at most ``r`` apart.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if grid.r < 4 * r - 1e-12:
        raise ValueError("grid must be eroded by at least 4 r")
    mask = grid.mask
    nx, ny = mask.shape
    si, ei = grid.cell_of(start), grid.cell_of(end)
    for (i, j), name in ((si, "start"), (ei, "end")):
        if not (0 <= i < nx and 0 <= j < ny and mask[i, j]):
            raise DisconnectedRegionError(f"{name} point lies outside the eroded region")
    idx = -np.ones(mask.shape, dtype=np.int64)
    cells = np.argwhere(mask)
    idx[mask] = np.arange(len(cells))
    rows, cols, wts = [], [], []
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        a = cells
        b = a + (di, dj)
        ok = (b[:, 0] >= 0) & (b[:, 0] < nx) & (b[:, 1] >= 0) & (b[:, 1] < ny)
        a, b = a[ok], b[ok]
        ok = mask[b[:, 0], b[:, 1]]
        a, b = a[ok], b[ok]
        rows.append(idx[a[:, 0], a[:, 1]])
        cols.append(idx[b[:, 0], b[:, 1]])
        wts.append(np.full(len(a), math.hypot(di, dj) * grid.step))
    n = len(cells)
    G = coo_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    s_id, e_id = idx[si], idx[ei]
    dist, pred = dijkstra(G, directed=False, indices=s_id, return_predecessors=True)
    if not np.isfinite(dist[e_id]):
        raise DisconnectedRegionError("start and end lie in different components of the eroded region")
    chain_ids = [e_id]
    while chain_ids[-1] != s_id:
        chain_ids.append(pred[chain_ids[-1]])
    cell_path = cells[np.array(chain_ids[::-1])]
    pts = np.vstack([start, np.column_stack([grid.xs[cell_path[:, 0]], grid.ys[cell_path[:, 1]]]), end])
    # line-of-sight shortening
    pulled = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not _segment_free(grid, pts[i], pts[j], grid.r):
            j -= 1
        pulled.append(pts[j])
        i = j
    path = np.asarray(pulled)
    centers = _resample(path, r) if len(path) > 1 else path
    chain = DiskChain(centers, float(r), _polyline_length(path), path)
    chain.audit = audit_chain(chain, grid.polys, r_m, cone)
    if not chain.audit["ok"]:
        raise GeometryError(f"chain audit failed: {chain.audit}")
    return chain


def audit_chain(chain: DiskChain, polys=(), r_m: float | None = None, cone: Cone | None = None) -> dict:
    """Independent geometric audit of a chain."""
    c = chain.centers
    gaps = np.hypot(*np.diff(c, axis=0).T) if len(c) > 1 else np.zeros(0)
    out = {
        "spacing_ok": bool((gaps <= chain.r * (1 + 1e-9)).all()),
        "max_gap": float(gaps.max()) if gaps.size else 0.0,
        "radius_ok": True if r_m is None else bool(chain.r < r_m / 5),
    }
    if polys:
        clear = float(_clearance(polys, c).min())
        out["min_clearance"] = clear
        out["clearance_ok"] = bool(clear > 4 * chain.r)
    if cone is not None and len(c) > 1:
        seg = c[-2] + np.linspace(0, 1, 16)[:, None] * (c[-1] - c[-2])
        out["cone_ok"] = bool(cone.contains(seg[1:]).all())
    out["ok"] = all(v for k, v in out.items() if k.endswith("_ok"))
    return out


@dataclass(frozen=True)
class PropagationResult:
    bound: float
    m0: float
    last_sup: float
    exponent: float


def propagate(fld: HelmholtzField, chain: DiskChain, E: float, C_s: float, beta: float) -> PropagationResult:
    """Bound ``C_s E (m0/E)^(beta^(d/r + 1))`` on the last disk of the chain."""
    if not (0 < beta < 1):
        raise ValueError("beta must lie in (0, 1)")
    m0 = fld.sup(chain.centers[0], chain.r)
    last = fld.sup(chain.centers[-1], chain.r)
    expo = beta ** (chain.d_gamma / chain.r + 1)
    bound = C_s * E * (m0 / E) ** expo
    return PropagationResult(float(bound), m0, last, float(expo))


def radius_schedule(eps1: float | None, d_gamma: float, beta: float, alpha: float = 0.5, r_m=None, h=None, zeta=None, neg_log_eps1: float | None = None):
    """Chain radius ``d |ln beta| / ((1 - alpha) ln|ln eps1|)`` and the ceiling check.

    Very small ``eps1`` may be passed as ``neg_log_eps1 = -ln eps1``.
    Returns ``(r, at_ceiling)``.
    """
    if neg_log_eps1 is None:
        if not (0 < eps1 < 1 / math.e):
            raise ValueError("eps1 must lie in (0, 1/e)")
        neg_log_eps1 = -math.log(eps1)
    if neg_log_eps1 <= 1:
        raise ValueError("need ln|ln eps1| > 0")
    r = d_gamma * abs(math.log(beta)) / ((1 - alpha) * math.log(neg_log_eps1))
    at_ceiling = False
    limits = [x for x in (r_m, None if h is None else h / 4, zeta) if x is not None]
    if limits:
        cap = min(limits)
        if 4 * r > cap * (1 + 1e-12):
            raise ScheduleError(f"4r = {4 * r:.6g} exceeds {cap:.6g}; eps1 must be smaller")
        at_ceiling = abs(4 * r - cap) <= 1e-9 * cap
    return float(r), at_ceiling


def eps1_ceiling_neglog(d_gamma: float, beta: float, alpha: float, cap: float) -> float:
    """``-ln`` of the largest ``eps1`` compatible with ``4 r <= cap``."""
    return math.exp(4 * d_gamma * abs(math.log(beta)) / ((1 - alpha) * cap))


# ---------------------------------------------------------------------------
# near-field error and boundary propagation


def annulus_error(fld: HelmholtzField, R: float, zeta: float, n_centers: int = 5, n_rad: int = 9, n_ang: int = 256):
    """``min`` over ``|x0| in [R + 1 + zeta, 2R]`` of the sup of ``|w|`` on the annulus of half-width ``zeta``."""
    lo, hi = R + 1 + zeta, 2 * R
    if hi < lo:
        raise ValueError("empty range for |x0|; shrink zeta")
    best = (math.inf, None)
    t = 2 * np.pi * np.arange(n_ang) / n_ang
    ring = np.stack([np.cos(t), np.sin(t)], 1)
    for x0 in np.linspace(lo, hi, n_centers):
        rads = np.linspace(x0 - zeta, x0 + zeta, n_rad)
        pts = (rads[:, None, None] * ring[None]).reshape(-1, 2)
        val = float(np.abs(fld(pts)).max())
        if val < best[0]:
            best = (val, float(x0))
    return best


@dataclass(frozen=True)
class BoundaryPropagation:
    sup_w: float
    sup_grad_w: float
    eps1: float
    x0: float
    shape_eps1: float  # (ln|ln eps1|)^(-1/2)
    shape_eps: float  # (ln ln 1/eps)^(-1/2), nan when eps not given
    ratio_eps1: float
    C_b: float


def _edge_data(sol: ScatterSolution, frame: CornerFrame, which: str, r):
    L = sol.poly.edge_lengths
    if which == "-":
        e, frac, sgn = frame.minus_edge, r / L[frame.minus_edge], 1.0
    else:
        e, frac, sgn = frame.plus_edge, 1.0 - r / L[frame.plus_edge], -1.0
    u, dus = sol.trace_on_edge(e, frac, derivative=True)
    tang = sol.poly.edges[e] / L[e]
    nu = sol.poly.outward_normals[e]
    dun = -sol.impedance.on_edge(e, frac) * u
    grad = dus[:, None] * tang + dun[:, None] * nu
    return u, grad, sgn


def lnln_shape(eps: float, power: float = 0.5) -> float:
    """``(ln ln(1/eps))^(-power)`` for ``eps < 1/e``."""
    return math.log(math.log(1 / eps)) ** (-power)


def boundary_propagation_experiment(
    solK: ScatterSolution,
    solK2: ScatterSolution,
    frame: CornerFrame,
    h: float,
    eps: float | None = None,
    R: float = 2.0,
    zeta: float = 0.5,
    n_edge: int = 64,
) -> BoundaryPropagation:
    """Measured near-field and boundary smallness of ``w = u - u'`` near a corner.

    ``sup |w|`` is taken over both corner edges ``0 < r <= h`` and
    ``sup |grad w|`` over ``h/10 <= r <= h`` (the gradient is singular at
    the vertex itself).
    """
    if (
        solK.k == solK2.k
        and np.array_equal(solK.poly.vertices, solK2.poly.vertices)
        and np.array_equal(solK.density, solK2.density)
    ):
        # identical solutions: w vanishes identically
        shape = lnln_shape(eps) if eps is not None and 0 < eps < 1 / math.e else math.nan
        return BoundaryPropagation(0.0, 0.0, 0.0, math.nan, math.nan, shape, math.nan, 0.0 if shape == shape else math.nan)
    fld = difference_field(solK, solK2)
    eps1, x0 = annulus_error(fld, R, zeta)
    r = h * (np.arange(1, n_edge + 1) / n_edge)
    rg = h * (0.1 + 0.9 * np.arange(n_edge) / (n_edge - 1))
    sup_w = sup_g = 0.0
    for which in ("-", "+"):
        pts = frame.edge_points(which, r)
        u, _, _ = _edge_data(solK, frame, which, r)
        if solK2.poly.contains(pts, closed=True).any():
            raise GeometryError("corner edge meets the other obstacle")
        sup_w = max(sup_w, float(np.abs(u - evaluate_total(solK2, pts)).max()))
        pg = frame.edge_points(which, rg)
        _, g, _ = _edge_data(solK, frame, which, rg)
        _, g2 = evaluate_gradient(solK2, pg)
        sup_g = max(sup_g, float(np.abs(g - g2).max()))
    shape1 = lnln_shape(eps1) if 0 < eps1 < 1 / math.e else math.nan
    shape = lnln_shape(eps) if eps is not None and 0 < eps < 1 / math.e else math.nan
    return BoundaryPropagation(
        sup_w, sup_g, eps1, x0, shape1, shape, sup_w / shape1 if shape1 == shape1 else math.nan,
        sup_w / shape if shape == shape else math.nan,
    )
