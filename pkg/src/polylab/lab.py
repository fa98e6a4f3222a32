"""Stability experiments: perturbation families, sweeps and fitted constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .corner import expand_solution_at_vertex, vanishing_order
from .geometry import (
    DEFAULT_PARAMS,
    AdmissibleParams,
    ImpedanceParam,
    Polygon,
    corner_frame,
    extremal_vertex,
    hausdorff_distance,
    validate_admissible,
)
from .smallness import _edge_data, annulus_error, boundary_propagation_experiment, difference_field, lnln_shape
from .solver import IncidentWave, Resolution, SolverError, far_field, far_field_error, solve


class DomainError(ValueError):
    """Formula evaluated outside the range where it is real and positive."""


class LedgerConflict(ValueError):
    """A constant was refitted within the same run with a different value."""


def kappa(N: int) -> Fraction:
    """Exponent of the log-log stability estimate for vanishing order ``N``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    if N == 0:
        return Fraction(1, 5)
    return Fraction(1, 2 * (N * N + 2 * N - 1))


# ---------------------------------------------------------------------------
# constants ledger


@dataclass(frozen=True)
class LedgerEntry:
    value: float
    run_id: str
    source: str
    note: str = ""


class ConstantsLedger:
    """Named fitted constants; every value is tagged with the run that produced it.

    Setting a constant again from another run appends a new version and
    leaves the old one in the history.  Setting it twice within one run with
    different values raises :class:`LedgerConflict`.
    """

    def __init__(self):
        self._hist: dict[str, list[LedgerEntry]] = {}

    def set(self, name: str, value, run_id: str, source: str = "", note: str = "") -> LedgerEntry:
        entry = LedgerEntry(float(value), str(run_id), source, note)
        hist = self._hist.setdefault(name, [])
        for old in hist:
            if old.run_id == entry.run_id:
                if old.value == entry.value or (math.isnan(old.value) and math.isnan(entry.value)):
                    return old
                raise LedgerConflict(f"{name} already set to {old.value!r} in run {run_id}")
        hist.append(entry)
        return entry

    def get(self, name: str, default=None) -> float:
        hist = self._hist.get(name)
        return default if not hist else hist[-1].value

    def entry(self, name: str) -> LedgerEntry:
        return self._hist[name][-1]

    def history(self, name: str) -> list:
        return list(self._hist.get(name, []))

    def __contains__(self, name: str) -> bool:
        return name in self._hist

    def names(self) -> list:
        return sorted(self._hist)

    def snapshot(self) -> dict:
        return {
            name: [{"value": e.value, "run_id": e.run_id, "source": e.source, "note": e.note} for e in hist]
            for name, hist in sorted(self._hist.items())
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "ConstantsLedger":
        led = cls()
        for name, hist in snap.items():
            for e in hist:
                led._hist.setdefault(name, []).append(LedgerEntry(float(e["value"]), e["run_id"], e.get("source", ""), e.get("note", "")))
        return led


PSI_KEYS = ("C_P", "C_a", "C", "R", "varsigma", "kappa", "alpha")


def psi(eps: float, ledger, *, C_P=None) -> float:
    """Impedance stability function of the far-field error.

    ``C_P * (ln|ln X|)^(-alpha)`` with
    ``X = exp(-C_a sqrt(-ln eps)) + (C/R) (ln ln 1/eps)^(-varsigma kappa)``.
    The value is real and positive only when ``X < 1/e``; outside that range
    a :class:`DomainError` is raised.  With ``C = 0`` the shape term is
    dropped, which is the case of a common polygon.  ``ledger`` is a
    :class:`ConstantsLedger` or a plain mapping.
    """
    get = ledger.get
    c = {k: get(k) for k in PSI_KEYS}
    if C_P is not None:
        c["C_P"] = C_P
    missing = [k for k, v in c.items() if v is None]
    if missing:
        raise KeyError(f"ledger lacks {missing}")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    L = -math.log(eps)
    X = math.exp(-c["C_a"] * math.sqrt(L))
    if c["C"] != 0:
        # the shape term needs ln ln(1/eps) > 0
        if not eps < 1 / math.e:
            raise DomainError("eps must lie in (0, 1/e)")
        X += (c["C"] / c["R"]) * math.log(L) ** (-c["varsigma"] * c["kappa"])
    if X >= 1:
        raise DomainError(f"inner bracket {X:.6g} >= 1")
    outer = math.log(-math.log(X))
    if outer <= 0:
        raise DomainError(f"inner bracket {X:.6g} >= 1/e: outer logarithm not positive")
    return c["C_P"] * outer ** (-c["alpha"])


def bound_shape(eps: float, N: int) -> float:
    """``(ln ln 1/eps)^(-kappa(N))``."""
    return lnln_shape(eps, float(kappa(N)))


# ---------------------------------------------------------------------------
# configuration and rows


@dataclass(frozen=True)
class FamilySpec:
    mode: str
    magnitudes: tuple
    vertex: int = 2

    MODES = ("vertex-shift", "uniform-scale", "rotate", "impedance-shift")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown family mode {self.mode!r}")
        mags = tuple(float(m) for m in self.magnitudes)
        if not mags:
            raise ValueError("family needs at least one magnitude")
        if any(m < 0 for m in mags):
            raise ValueError("magnitudes must be non-negative")
        if any(b > a for a, b in zip(mags, mags[1:])):
            raise ValueError("magnitudes must be non-increasing")
        object.__setattr__(self, "magnitudes", mags)


@dataclass(frozen=True)
class ExperimentConfig:
    polygon: Polygon
    impedance: complex
    k: float
    incidence_angle: float
    family: FamilySpec
    resolution: Resolution = Resolution()
    far_field_m: int = 128
    tau_factors: tuple = (2.0, 4.0, 8.0)
    alpha_prime: float | None = None
    zeta: float = 0.5
    out_dir: str = "out"
    prefix: str = "run"
    seed: int = 0
    params: AdmissibleParams = DEFAULT_PARAMS

    @property
    def incident(self) -> IncidentWave:
        return IncidentWave.from_angle(self.k, self.incidence_angle)

    @property
    def eta(self) -> ImpedanceParam:
        return ImpedanceParam.const(self.impedance)

    def run_id(self, tag: str) -> str:
        return f"{self.prefix}:{tag}:seed={self.seed}"


@dataclass
class StabilityRow:
    t: float
    eps: float
    eps1: float
    hausdorff: float
    eta_gap: float
    N: int
    T_eps: float
    bound_shape: float
    psi_shape: float
    flags: tuple = ()
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def fit_ok(self) -> bool:
        return not any(f in ("floor", "failed", "inadmissible", "zero") for f in self.flags)


def family_member(base: Polygon, spec: FamilySpec, t: float) -> Polygon:
    if spec.mode == "impedance-shift" or t == 0:
        return base
    c = base.centroid
    if spec.mode == "vertex-shift":
        v = base.vertices[spec.vertex]
        d = (v - c) / np.hypot(*(v - c))
        return base.with_vertex(spec.vertex, v + t * d)
    if spec.mode == "uniform-scale":
        return base.transformed(scale=1.0 + t)
    if spec.mode == "rotate":
        return base.rotated(t)
    raise ValueError(spec.mode)


def solver_floor(sol, cfg: ExperimentConfig, F=None) -> float:
    """Far-field change under one mesh refinement, used as the solver tolerance."""
    F = far_field(sol, cfg.far_field_m) if F is None else F
    ref = solve(sol.poly, sol.impedance, sol.incident, cfg.resolution.refined(), check=False)
    return far_field_error(F, far_field(ref, cfg.far_field_m))


def corner_radius(ell_min: float, hd: float | None, k: float) -> float:
    vals = [ell_min, 1.0 / (k + 1)]
    if hd is not None:
        vals.append(hd)
    return 0.5 * min(vals)


@dataclass
class SweepResult:
    rows: list
    ledger: ConstantsLedger
    fitted: dict
    floor: float
    config: ExperimentConfig

    @property
    def monotone(self) -> bool:
        good = [r for r in self.rows if "failed" not in r.flags]
        eps = [r.eps for r in good]
        hd = [r.hausdorff if self.config.family.mode != "impedance-shift" else r.eta_gap for r in good]
        dec = lambda a: all(y < x for x, y in zip(a, a[1:]))  # noqa: E731
        return dec(eps) and dec(hd)


def _safe_psi(eps, ledger):
    try:
        return psi(eps, ledger)
    except (DomainError, KeyError):
        return math.nan


def shape_stability_sweep(cfg: ExperimentConfig, ledger: ConstantsLedger | None = None) -> SweepResult:
    """Far-field error against Hausdorff distance along a shape family."""
    ledger = ConstantsLedger() if ledger is None else ledger
    run = cfg.run_id(cfg.family.mode)
    base = cfg.polygon
    inc, eta = cfg.incident, cfg.eta
    sol0 = solve(base, eta, inc, cfg.resolution)
    F0 = far_field(sol0, cfg.far_field_m)
    floor = solver_floor(sol0, cfg, F0)
    rows = []
    for t in sorted(cfg.family.magnitudes, reverse=True):
        rows.append(_shape_row(cfg, t, base, sol0, F0, floor))
    usable = [r for r in rows if r.fit_ok]
    fitted = {}
    if usable:
        C = max(r.hausdorff / r.bound_shape for r in usable)
        C_b = max(r.extra["sup_w"] / lnln_shape(r.eps) for r in usable)
        C_a = min(-math.log(r.eps1) / math.sqrt(-math.log(r.eps)) for r in usable)
        C_f = max(r.extra["sup_w"] / lnln_shape(r.eps1) for r in usable if r.eps1 < 1 / math.e)
        fitted = {"C": C, "C_b": C_b, "C_a": C_a, "C_f": C_f}
        ledger.set("C", C, run, "max hausdorff / bound_shape over non-floored rows")
        ledger.set("C_b", C_b, run, "max boundary sup |w| / (ln ln 1/eps)^(-1/2)")
        ledger.set("C_a", C_a, run, "min (-ln eps1)/sqrt(-ln eps)")
        ledger.set("C_f", C_f, run, "max boundary sup |w| / (ln|ln eps1|)^(-1/2)")
        for r in rows:
            if r.eps > 0 and r.eps < 1 / math.e:
                r.T_eps = C_b * lnln_shape(r.eps)
            r.psi_shape = _safe_psi(r.eps, ledger) if r.eps > 0 else math.nan
        Ns = sorted({r.N for r in usable})
        for N in Ns:
            ledger.set(f"kappa_N{N}", float(kappa(N)), run, "exact rational exponent")
    ledger.set("solver_floor", floor, run, "far-field change under mesh refinement")
    return SweepResult(rows, ledger, fitted, floor, cfg)


def _shape_row(cfg, t, base, sol0, F0, floor) -> StabilityRow:
    if t == 0:
        return StabilityRow(0.0, 0.0, 0.0, 0.0, 0.0, 0, math.nan, math.nan, math.nan, ("zero",))
    member = family_member(base, cfg.family, t)
    flags = []
    if not validate_admissible(member, cfg.params).ok:
        flags.append("inadmissible")
    try:
        sol1 = solve(member, cfg.eta, cfg.incident, cfg.resolution)
    except SolverError:
        return StabilityRow(t, math.nan, math.nan, math.nan, 0.0, 0, math.nan, math.nan, math.nan, ("failed",))
    eps = far_field_error(F0, far_field(sol1, cfg.far_field_m))
    hd = hausdorff_distance(base, member)
    swapped, vidx, _ = extremal_vertex(base, member)
    # the corner obstacle owns the extremal vertex; the other field is expanded there
    solA, solB = (sol1, sol0) if swapped else (sol0, sol1)
    ell = float(solA.poly.edge_lengths.min())
    h = corner_radius(ell, hd, cfg.k)
    hmin = 4 * float(solA.mesh.panel_length.min())
    if h < hmin:
        if hmin < hd:
            h = hmin
            flags.append("h_floor")
        else:
            # the floor would let the disk reach the other obstacle; keep h
            flags.append("h_conflict")
    frame = corner_frame(solA.poly, vidx, h)
    N = 0
    try:
        N = vanishing_order(expand_solution_at_vertex(solB, frame, h)).N
    except Exception:  # noqa: BLE001 - reported through the flags column
        flags.append("order_failed")
    bp = boundary_propagation_experiment(solA, solB, frame, h, eps, R=cfg.params.R, zeta=cfg.zeta)
    if eps < 10 * floor:
        flags.append("floor")
    shape = bound_shape(eps, N) if 0 < eps < 1 / math.e else math.nan
    extra = {"sup_w": bp.sup_w, "sup_grad_w": bp.sup_grad_w, "h": h, "vertex": vidx, "swapped": swapped, "x0": bp.x0}
    return StabilityRow(t, eps, bp.eps1, hd, 0.0, N, math.nan, shape, math.nan, tuple(flags), extra)


def boundary_l2(sol, frame, h: float, n: int = 64) -> float:
    """``int |u|^2`` over both corner edges ``0 < r < h`` (Gauss-Legendre)."""
    x, w = np.polynomial.legendre.leggauss(n)
    r = 0.5 * h * (x + 1)
    wr = 0.5 * h * w
    tot = 0.0
    for which in ("-", "+"):
        u, _, _ = _edge_data(sol, frame, which, r)
        tot += float(np.sum(wr * np.abs(u) ** 2))
    return tot


def impedance_stability_sweep(cfg: ExperimentConfig, ledger: ConstantsLedger | None = None, vertex: int = 0) -> SweepResult:
    """Far-field error against impedance gap on a fixed polygon."""
    if cfg.family.mode != "impedance-shift":
        raise ValueError("impedance sweep needs an impedance-shift family")
    if cfg.impedance == 0:
        raise ValueError("impedance must be non-zero")
    ledger = ConstantsLedger() if ledger is None else ledger
    run = cfg.run_id("impedance-shift")
    poly, inc = cfg.polygon, cfg.incident
    sol0 = solve(poly, cfg.eta, inc, cfg.resolution)
    F0 = far_field(sol0, cfg.far_field_m)
    floor = solver_floor(sol0, cfg, F0)
    h = corner_radius(float(poly.edge_lengths.min()), None, cfg.k)
    frame = corner_frame(poly, vertex, h)
    N_used = int(ledger.get("N", 0))
    rows = []
    for t in sorted(cfg.family.magnitudes, reverse=True):
        if t == 0:
            rows.append(StabilityRow(0.0, 0.0, 0.0, 0.0, 0.0, N_used, math.nan, math.nan, math.nan, ("zero",)))
            continue
        eta1 = cfg.impedance + t
        flags = []
        try:
            sol1 = solve(poly, ImpedanceParam.const(eta1), inc, cfg.resolution)
        except SolverError:
            rows.append(StabilityRow(t, math.nan, math.nan, 0.0, t, N_used, math.nan, math.nan, math.nan, ("failed",)))
            continue
        eps = far_field_error(F0, far_field(sol1, cfg.far_field_m))
        eps1, x0 = annulus_error(difference_field(sol0, sol1), cfg.params.R, cfg.zeta)
        r = h * np.arange(1, 65) / 64
        sup_d = 0.0
        for which in ("-", "+"):
            u0, _, _ = _edge_data(sol0, frame, which, r)
            u1, _, _ = _edge_data(sol1, frame, which, r)
            sup_d = max(sup_d, float(np.abs(u0 - u1).max()))
        l2 = boundary_l2(sol1, frame, h)
        weighted = math.sqrt(boundary_l2(sol0, frame, h)) * abs(t)
        if eps < 10 * floor:
            flags.append("floor")
        extra = {"sup_boundary_diff": sup_d, "boundary_l2": l2, "weighted_gap": weighted, "h": h, "x0": x0}
        rows.append(StabilityRow(t, eps, eps1, 0.0, abs(t), N_used, math.nan, math.nan, math.nan, tuple(flags), extra))
    usable = [r for r in rows if r.fit_ok]
    fitted = {}
    if usable:
        C_a = min(-math.log(r.eps1) / math.sqrt(-math.log(r.eps)) for r in usable)
        ledger.set("C_a_impedance", C_a, run, "min (-ln eps1)/sqrt(-ln eps) on impedance rows")
        hd_fit = max(r.hausdorff / bound_shape(r.eps, r.N) for r in usable if r.eps < 1 / math.e) if any(
            r.eps < 1 / math.e for r in usable) else 0.0
        defaults = {
            "C": (hd_fit, "max hausdorff / bound_shape on these rows (the polygon is fixed)"),
            "R": (cfg.params.R, "a-priori containment radius"),
            "varsigma": (0.5, "fixed choice"),
            "kappa": (float(kappa(N_used)), "kappa at the recorded vanishing order"),
            "alpha": (0.25, "fixed choice below 1/2"),
        }
        for name, (val, why) in defaults.items():
            if name not in ledger:
                ledger.set(name, val, run, why)
        view = {k: ledger.get(k) for k in PSI_KEYS if k != "C_P"}
        view["C_a"] = C_a
        shapes = []
        for r in usable:
            try:
                shapes.append(psi(r.eps, view, C_P=1.0))
            except DomainError:
                shapes.append(math.nan)
        ratios = [r.eta_gap / s for r, s in zip(usable, shapes) if s == s]
        C_P = max(ratios) if ratios else math.nan
        ledger.set("C_P", C_P, run, "max |eta - eta'| / psi_shape over non-floored rows")
        view["C_P"] = C_P
        for r in rows:
            if r.eps > 0:
                try:
                    r.psi_shape = psi(r.eps, view)
                except DomainError:
                    r.psi_shape = math.nan
                    r.flags = r.flags + ("psi_domain",)
        l2s = [r.extra["boundary_l2"] for r in usable]
        fitted = {"C_a": C_a, "C_P": C_P, "E_B": min(l2s), "l2_spread": max(l2s) / min(l2s)}
        ledger.set("E_B", min(l2s), run, "min boundary L2 of the total field near the corner")
    ledger.set("solver_floor_impedance", floor, run, "far-field change under mesh refinement")
    return SweepResult(rows, ledger, fitted, floor, cfg)


def with_family(cfg: ExperimentConfig, mode: str, magnitudes=None) -> ExperimentConfig:
    mags = cfg.family.magnitudes if magnitudes is None else tuple(magnitudes)
    return replace(cfg, family=FamilySpec(mode, mags, cfg.family.vertex))
