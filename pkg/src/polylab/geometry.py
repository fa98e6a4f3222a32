"""Convex polygons, admissibility checks, Hausdorff distance and corner frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class StructuralError(ValueError):
    """Malformed polygon (too few vertices, repeated or collinear vertices)."""


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True, eq=False)
class Polygon:
    """Strictly convex polygon with counterclockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise StructuralError("need an (n, 2) array with n >= 3")
        if not np.isfinite(v).all():
            raise StructuralError("vertex coordinates must be finite")
        e = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(e[:, 0], e[:, 1])
        scale = lengths.max()
        if lengths.min() <= 1e-12 * scale:
            raise StructuralError("repeated vertex")
        turn = _cross(e, np.roll(e, -1, axis=0)) / (lengths * np.roll(lengths, -1))
        if np.any(np.abs(turn) <= 1e-10):
            raise StructuralError("collinear consecutive vertices")
        if not (np.all(turn > 0) or np.all(turn < 0)):
            raise StructuralError("polygon is not strictly convex")
        if np.all(turn < 0):
            raise StructuralError("vertices must be counterclockwise")
        # a locally convex closed chain winding more than once is not simple
        ang = np.arctan2(e[:, 1], e[:, 0])
        winding = np.sum(np.mod(np.diff(np.concatenate([ang, ang[:1]])), 2 * np.pi))
        if abs(winding - 2 * np.pi) > 1e-8:
            raise StructuralError("polygon is not simple")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    @property
    def edges(self) -> np.ndarray:
        """Edge vectors ``v[i+1] - v[i]``."""
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.hypot(e[:, 0], e[:, 1])

    @property
    def interior_angles(self) -> np.ndarray:
        """Interior angle at each vertex."""
        e = self.edges
        nxt = e
        prv = -np.roll(e, 1, axis=0)
        ang = np.arctan2(_cross(nxt, prv), np.sum(nxt * prv, axis=1))
        return np.mod(ang, 2 * np.pi)

    @property
    def outward_normals(self) -> np.ndarray:
        e = self.edges / self.edge_lengths[:, None]
        return np.stack([e[:, 1], -e[:, 0]], axis=1)

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.hypot(d[..., 0], d[..., 1]).max())

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = _cross(v, w)
        area = 0.5 * c.sum()
        return ((v + w) * c[:, None]).sum(axis=0) / (6.0 * area)

    def contains(self, pts, closed: bool = False) -> np.ndarray:
        """Point-in-polygon test; the boundary counts only when ``closed``."""
        p = np.asarray(pts, dtype=float)
        rel = p[..., None, :] - self.vertices
        c = _cross(self.edges, rel) / self.edge_lengths
        if closed:
            return np.all(c >= -1e-14, axis=-1)
        return np.all(c > 1e-14, axis=-1)

    def boundary_distance(self, pts) -> np.ndarray:
        """Unsigned distance from points to the polygon boundary."""
        p = np.asarray(pts, dtype=float)
        a = self.vertices
        e = self.edges
        rel = p[..., None, :] - a
        s = np.clip(np.sum(rel * e, axis=-1) / np.sum(e * e, axis=-1), 0.0, 1.0)
        d = rel - s[..., None] * e
        return np.hypot(d[..., 0], d[..., 1]).min(axis=-1)

    def distance(self, pts) -> np.ndarray:
        """Distance to the closed polygon (zero inside)."""
        d = self.boundary_distance(pts)
        return np.where(self.contains(pts), 0.0, d)

    def boundary_point(self, s) -> np.ndarray:
        """Boundary point at arclength ``s`` (mod perimeter) from vertex 0."""
        s = np.mod(np.asarray(s, dtype=float), self.perimeter)
        cum = np.concatenate([[0.0], np.cumsum(self.edge_lengths)])
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, self.n - 1)
        frac = (s - cum[idx]) / self.edge_lengths[idx]
        return self.vertices[idx] + frac[..., None] * self.edges[idx]

    def transformed(self, scale: float = 1.0, shift=(0.0, 0.0), about=None) -> "Polygon":
        c = self.centroid if about is None else np.asarray(about, dtype=float)
        return Polygon(c + scale * (self.vertices - c) + np.asarray(shift, dtype=float))

    def rotated(self, angle: float, about=None) -> "Polygon":
        c = self.centroid if about is None else np.asarray(about, dtype=float)
        ca, sa = math.cos(angle), math.sin(angle)
        rot = np.array([[ca, -sa], [sa, ca]])
        return Polygon(c + (self.vertices - c) @ rot.T)

    def with_vertex(self, index: int, point) -> "Polygon":
        v = self.vertices.copy()
        v[index] = point
        return Polygon(v)

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())


def regular_polygon(n: int, circumradius: float = 1.0, phase: float = 0.0, center=(0.0, 0.0)):
    ang = phase + 2 * np.pi * np.arange(n) / n
    return Polygon(np.asarray(center) + circumradius * np.stack([np.cos(ang), np.sin(ang)], 1))


def unit_square(center=(0.0, 0.0)) -> Polygon:
    c = np.asarray(center, dtype=float)
    return Polygon(c + np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]))


@dataclass(frozen=True)
class AdmissibleParams:
    ell_min: float
    ell_max: float
    theta_min: float
    theta_max: float
    R: float
    r_m: float
    delta: float
    theta: float

    def __post_init__(self):
        if not (0 < self.ell_min <= self.ell_max):
            raise PreconditionError("need 0 < ell_min <= ell_max")
        if not (0 < self.theta_min < self.theta_max < 2 * np.pi):
            raise PreconditionError("need 0 < theta_min < theta_max < 2 pi")
        if min(self.R, self.r_m, self.delta) <= 0:
            raise PreconditionError("R, r_m and delta must be positive")
        if not (0 < self.theta < np.pi):
            raise PreconditionError("cone opening must lie in (0, pi)")


DEFAULT_PARAMS = AdmissibleParams(0.5, 2.0, np.pi / 4, 3 * np.pi / 4, 2.0, 0.1, 0.1, np.pi / 3)


@dataclass(frozen=True, eq=False)
class ImpedanceParam:
    """Boundary impedance: a complex constant or per-edge arclength samples.

    Samples are given per edge on a uniform grid that includes both edge
    endpoints and are linearly interpolated.
    """

    constant: complex | None = None
    samples: tuple | None = None
    M1: float | None = None
    M2: float | None = None
    alpha0: float = 1.0

    def __post_init__(self):
        if (self.constant is None) == (self.samples is None):
            raise PreconditionError("give exactly one of constant or samples")
        if self.constant is not None:
            object.__setattr__(self, "constant", complex(self.constant))
        else:
            arrs = tuple(np.array(s, dtype=complex) for s in self.samples)
            if any(a.ndim != 1 or a.size < 2 for a in arrs):
                raise PreconditionError("each edge needs at least two samples")
            for a in arrs:
                a.setflags(write=False)
            object.__setattr__(self, "samples", arrs)
        if self.M1 is None:
            object.__setattr__(self, "M1", float(self.sup_abs))

    @classmethod
    def const(cls, eta) -> "ImpedanceParam":
        return cls(constant=complex(eta))

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    @property
    def sup_abs(self) -> float:
        if self.is_constant:
            return abs(self.constant)
        return float(max(np.abs(a).max() for a in self.samples))

    def on_edge(self, edge: int, frac) -> np.ndarray:
        """Impedance at fractional positions ``frac`` in [0, 1] along an edge."""
        frac = np.asarray(frac, dtype=float)
        if self.is_constant:
            return np.full(frac.shape, self.constant, dtype=complex)
        a = self.samples[edge]
        grid = np.linspace(0.0, 1.0, a.size)
        return np.interp(frac, grid, a.real) + 1j * np.interp(frac, grid, a.imag)

    def at_vertex(self, poly: Polygon, vertex: int) -> complex:
        """Value at a vertex, taken from the edge that starts there."""
        return complex(self.on_edge(vertex % poly.n, 0.0))


@dataclass
class CheckResult:
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    items: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.items.values())

    def failed(self) -> list:
        return [k for k, r in self.items.items() if not r.passed]

    def summary(self) -> str:
        lines = [f"{k}: {'pass' if r.passed else 'FAIL'} {r.detail}" for k, r in self.items.items()]
        return "\n".join(lines + self.notes)


@dataclass(frozen=True)
class Cone:
    """Open cone with apex, unit axis, radius and half-amplitude."""

    apex: np.ndarray
    axis: np.ndarray
    radius: float
    half_angle: float

    def contains(self, pts) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - self.apex
        r = np.hypot(d[..., 0], d[..., 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            cosang = np.sum(d * self.axis, axis=-1) / r
        return (r > 0) & (r < self.radius) & (cosang >= math.cos(self.half_angle) - 1e-15)

    def sample(self, n_radial: int = 4, n_angular: int = 8) -> np.ndarray:
        rad = self.radius * (np.arange(1, n_radial + 1) / (n_radial + 1))
        ang = np.linspace(-self.half_angle, self.half_angle, n_angular)
        base = math.atan2(self.axis[1], self.axis[0])
        rr, aa = np.meshgrid(rad, base + ang, indexing="ij")
        pts = self.apex + np.stack([rr * np.cos(aa), rr * np.sin(aa)], -1)
        return pts.reshape(-1, 2)


def _cone_condition(poly: Polygon, delta: float, theta: float, n_points=64, n_dirs=128):
    """Exterior-cone branch of the uniform cone condition, checked by sampling."""
    s0 = poly.perimeter * np.arange(n_points) / n_points
    offsets = np.linspace(-delta, delta, 9)
    dirs_ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
    dirs = np.stack([np.cos(dirs_ang), np.sin(dirs_ang)], 1)
    rad = delta * np.arange(1, 5) / 5.0
    ang = np.linspace(-theta / 2, theta / 2, 8)
    # cone sample offsets relative to an axis at angle 0, for every direction
    rr, aa = np.meshgrid(rad, ang, indexing="ij")
    rr, aa = rr.ravel(), aa.ravel()
    full = dirs_ang[:, None] + aa[None, :]
    offs = np.stack([rr * np.cos(full), rr * np.sin(full)], -1)  # (n_dirs, 32, 2)
    worst = []
    for s in s0:
        ys = poly.boundary_point(s + offsets)
        x = poly.boundary_point(s)
        ys = ys[np.hypot(*(ys - x).T) < delta + 1e-12]
        pts = ys[:, None, None, :] + offs[None]
        inside = poly.contains(pts, closed=True)  # (ny, n_dirs, 32)
        ok_dir = ~inside.any(axis=(0, 2))
        if not ok_dir.any():
            return False, f"no admissible direction at arclength {s:.4g}", dirs
        worst.append(int(np.argmax(ok_dir)))
    return True, f"{n_points} points x {n_dirs} directions", dirs


def _eroded_connected(polys, r: float, margin: float) -> bool:
    vs = np.concatenate([p.vertices for p in polys])
    lo = vs.min(axis=0) - r - margin
    hi = vs.max(axis=0) + r + margin
    step = r / 8.0
    xs = np.arange(lo[0], hi[0] + step, step)
    ys = np.arange(lo[1], hi[1] + step, step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], -1)
    mask = np.ones(X.shape, dtype=bool)
    for p in polys:
        mask &= p.distance(pts) > r
    _, ncomp = ndimage.label(mask, structure=np.ones((3, 3)))
    return ncomp == 1


def validate_admissible(poly: Polygon, params: AdmissibleParams, eta: ImpedanceParam | None = None):
    """Check the a-priori admissibility conditions item by item."""
    rep = ValidationReport()
    rmax = float(np.hypot(*poly.vertices.T).max())
    rep.items["containment"] = CheckResult(rmax <= params.R, f"max |v| = {rmax:.6g}, R = {params.R}")
    rep.items["convexity"] = CheckResult(True, "strictly convex, counterclockwise")
    L = poly.edge_lengths
    rep.items["edge_lengths"] = CheckResult(
        bool(L.min() >= params.ell_min and L.max() <= params.ell_max),
        f"range [{L.min():.6g}, {L.max():.6g}]",
    )
    A = poly.interior_angles
    rep.items["angles"] = CheckResult(
        bool(A.min() >= params.theta_min and A.max() <= params.theta_max),
        f"range [{A.min():.6g}, {A.max():.6g}]",
    )
    radii = params.r_m * np.array([0.25, 0.5, 0.75, 0.95])
    conn = all(_eroded_connected([poly], r, margin=2 * params.r_m) for r in radii)
    rep.items["eroded_exterior"] = CheckResult(conn, f"grid step r/8 at r = {radii.round(6).tolist()}")
    ok, detail, _ = _cone_condition(poly, params.delta, params.theta)
    rep.items["exterior_cone"] = CheckResult(ok, detail)
    rep.items["lipschitz_boundary"] = CheckResult(True, "polygonal boundary")
    rep.notes.append("interior-cone branch untested (exterior branch only)")
    if eta is not None:
        irep = validate_impedance(eta, poly)
        rep.items.update(irep.items)
    return rep


def validate_impedance(eta: ImpedanceParam, poly: Polygon | None = None) -> ValidationReport:
    rep = ValidationReport()
    if eta.is_constant:
        vals = np.array([eta.constant])
    else:
        vals = np.concatenate(eta.samples)
    rep.items["impedance_sup"] = CheckResult(
        bool(np.abs(vals).max() <= eta.M1 * (1 + 1e-12)), f"sup |eta| = {np.abs(vals).max():.6g}"
    )
    rep.items["impedance_real_part"] = CheckResult(bool(vals.real.min() >= 0), "Re eta >= 0")
    if not eta.is_constant and eta.M2 is not None and poly is not None:
        worst = 0.0
        for i, a in enumerate(eta.samples):
            s = np.linspace(0.0, poly.edge_lengths[i], a.size)
            ds = np.abs(s[:, None] - s[None, :])
            da = np.abs(a[:, None] - a[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(ds > 0, da / ds**eta.alpha0, 0.0)
            worst = max(worst, float(q.max()))
        rep.items["impedance_holder"] = CheckResult(worst <= eta.M2 * (1 + 1e-12), f"max quotient {worst:.6g}")
    return rep


def directed_distance(A: Polygon, B: Polygon) -> float:
    """sup over A of the distance to B; attained at a vertex of A."""
    return float(B.distance(A.vertices).max())


def hausdorff_distance(K: Polygon, K2: Polygon) -> float:
    return max(directed_distance(K, K2), directed_distance(K2, K))


def extremal_vertex(K: Polygon, K2: Polygon):
    """Return ``(swapped, index, distance)`` for the vertex realising the distance.

    ``swapped`` is True when the maximising vertex belongs to ``K2``.  Ties are
    broken by the lowest index, preferring ``K``.
    """
    d1 = K2.distance(K.vertices)
    d2 = K.distance(K2.vertices)
    if d1.max() >= d2.max():
        return False, int(np.argmax(d1)), float(d1.max())
    return True, int(np.argmax(d2)), float(d2.max())


@dataclass(frozen=True)
class CornerFrame:
    """Rigid motion putting a vertex at the origin with its edges on two rays.

    ``local = rotation @ (x - vertex)``.  The edge leaving the vertex
    (``minus_edge``) maps onto the positive first axis and the edge arriving at
    it (``plus_edge``) onto the ray at angle ``theta0``.
    """

    vertex: np.ndarray
    theta0: float
    rotation: np.ndarray
    h: float
    vertex_index: int
    minus_edge: int
    plus_edge: int

    @property
    def nu1(self) -> np.ndarray:
        return np.array([-math.sin(self.theta0), math.cos(self.theta0)])

    @property
    def nu2(self) -> np.ndarray:
        return np.array([0.0, -1.0])

    def ray(self, which: str) -> np.ndarray:
        """Unit direction of an edge ray in local coordinates."""
        if which == "-":
            return np.array([1.0, 0.0])
        return np.array([math.cos(self.theta0), math.sin(self.theta0)])

    def normal(self, which: str) -> np.ndarray:
        return self.nu2 if which == "-" else self.nu1

    def to_local(self, pts) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - self.vertex) @ self.rotation.T

    def to_global(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.rotation + self.vertex

    def vector_to_global(self, vec) -> np.ndarray:
        return np.asarray(vec, dtype=float) @ self.rotation

    def edge_points(self, which: str, r) -> np.ndarray:
        """Global coordinates of points at distance ``r`` along an edge."""
        r = np.asarray(r, dtype=float)
        return self.to_global(r[..., None] * self.ray(which))

    def arc_points(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        return self.to_global(self.h * np.stack([np.cos(phi), np.sin(phi)], -1))


def corner_frame(poly: Polygon, vertex_index: int, h: float) -> CornerFrame:
    i = vertex_index % poly.n
    L = poly.edge_lengths
    minus_edge, plus_edge = i, (i - 1) % poly.n
    if not (0 < h < min(L[minus_edge], L[plus_edge])):
        raise PreconditionError("h must be positive and below both incident edge lengths")
    e = poly.edges[minus_edge] / L[minus_edge]
    rot = np.array([[e[0], e[1]], [-e[1], e[0]]])
    return CornerFrame(
        vertex=poly.vertices[i].copy(),
        theta0=float(poly.interior_angles[i]),
        rotation=rot,
        h=float(h),
        vertex_index=i,
        minus_edge=minus_edge,
        plus_edge=plus_edge,
    )


@dataclass
class ErodedGrid:
    """Occupancy grid of cells whose centres lie at distance > r from the obstacles."""

    mask: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    step: float
    r: float
    polys: tuple = ()

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    def labels(self):
        return ndimage.label(self.mask, structure=np.ones((3, 3)))

    @property
    def n_components(self) -> int:
        return int(self.labels()[1])

    @property
    def connected(self) -> bool:
        return self.n_components == 1

    def cell_of(self, point):
        p = np.asarray(point, dtype=float)
        i = int(round((p[0] - self.xs[0]) / self.step))
        j = int(round((p[1] - self.ys[0]) / self.step))
        return i, j

    def center(self, i, j):
        return np.array([self.xs[i], self.ys[j]])


def eroded_exterior(polys, r: float, bbox, grid_step: float | None = None, outer_radius: float | None = None):
    """Cells of G_r where G is the bounding region minus the obstacles.

    ``bbox`` is ``(xmin, xmax, ymin, ymax)``; an optional ``outer_radius``
    intersects the region with a centred disk.
    """
    if isinstance(polys, Polygon):
        polys = [polys]
    if grid_step is None:
        grid_step = r / 8.0
    if not grid_step < r / 4:
        raise PreconditionError("grid_step must be below r/4")
    xmin, xmax, ymin, ymax = bbox
    xs = np.arange(xmin + grid_step / 2, xmax, grid_step)
    ys = np.arange(ymin + grid_step / 2, ymax, grid_step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], -1)
    dist = np.minimum.reduce([X - xmin, xmax - X, Y - ymin, ymax - Y])
    if outer_radius is not None:
        dist = np.minimum(dist, outer_radius - np.hypot(X, Y))
    for p in polys:
        dist = np.minimum(dist, np.where(p.contains(pts, closed=True), -1.0, p.boundary_distance(pts)))
    return ErodedGrid(mask=dist > r, xs=xs, ys=ys, step=grid_step, r=r, polys=tuple(polys))
