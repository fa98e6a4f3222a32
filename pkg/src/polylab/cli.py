"""Command line entry point ``lab``."""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np
import yaml

from .cgo import make_probe
from .config import ConfigError, load_config
from .corner import ConfigurationError, default_tau0, integral_identity_ledger
from .geometry import (
    PreconditionError,
    StructuralError,
    corner_frame,
    eroded_exterior,
    extremal_vertex,
    hausdorff_distance,
    validate_admissible,
    validate_impedance,
)
from .lab import ConstantsLedger, corner_radius, family_member, impedance_stability_sweep, kappa, shape_stability_sweep
from .report import emit_report, read_ledger_yaml, read_rows_csv, render_svg
from .smallness import DisconnectedRegionError, GeometryError as SmallnessGeometryError, build_chain, fit_three_sphere, plane_wave_superposition, propagate
from .solver import SolverError, far_field, solve, write_far_field_csv

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3
VERBS = ("validate", "solve", "farfield", "corner", "chain", "sweep-shape", "sweep-impedance", "report")


def _out(cfg, args):
    d = args.out or cfg.out_dir
    os.makedirs(d, exist_ok=True)
    return d


def _dump(path, doc):
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def cmd_validate(cfg, sections, args):
    ok = True
    lines = []
    members = [("base", cfg.polygon)]
    if cfg.family.mode != "impedance-shift":
        members += [(f"t={t:g}", family_member(cfg.polygon, cfg.family, t)) for t in cfg.family.magnitudes]
    for name, poly in members:
        rep = validate_admissible(poly, cfg.params, cfg.eta)
        ok &= rep.ok
        lines.append(f"{name}: {'ok' if rep.ok else 'FAILED ' + ', '.join(rep.failed())}")
    rep = validate_impedance(cfg.eta, cfg.polygon)
    ok &= rep.ok
    lines.append(f"impedance: {'ok' if rep.ok else 'FAILED ' + ', '.join(rep.failed())}")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_solve(cfg, sections, args):
    sol = solve(cfg.polygon, cfg.eta, cfg.incident, cfg.resolution)
    d = _out(cfg, args)
    path = os.path.join(d, f"{cfg.prefix}_trace.csv")
    with open(path, "w") as fh:
        fh.write("x,y,re_u,im_u\n")
        for (x, y), u in zip(sol.mesh.nodes, sol.density):
            fh.write(f"{x:.17g},{y:.17g},{u.real:.17g},{u.imag:.17g}\n")
    _dump(os.path.join(d, f"{cfg.prefix}_diagnostics.yaml"), {k: float(v) for k, v in sol.diagnostics.items()})
    print(f"solved {sol.mesh.n_nodes} nodes; residual {sol.diagnostics['relative_residual']:.3e}; trace -> {path}")
    return EXIT_OK


def cmd_farfield(cfg, sections, args):
    sol = solve(cfg.polygon, cfg.eta, cfg.incident, cfg.resolution)
    path = os.path.join(_out(cfg, args), f"{cfg.prefix}_farfield.csv")
    write_far_field_csv(far_field(sol, cfg.far_field_m), path)
    print(f"far field -> {path}")
    return EXIT_OK


def cmd_corner(cfg, sections, args):
    t = cfg.family.magnitudes[0]
    other = family_member(cfg.polygon, cfg.family, t)
    hd = hausdorff_distance(cfg.polygon, other)
    if hd == 0:
        print("family member coincides with the base polygon", file=sys.stderr)
        return EXIT_VALIDATION
    swapped, vidx, _ = extremal_vertex(cfg.polygon, other)
    KA, KB = (other, cfg.polygon) if swapped else (cfg.polygon, other)
    sec = sections.get("corner", {})
    if sec.get("vertex") is not None:
        vidx = int(sec["vertex"])
    h = float(sec["h"]) if sec.get("h") is not None else corner_radius(float(KA.edge_lengths.min()), hd, cfg.k)
    solA = solve(KA, cfg.eta, cfg.incident, cfg.resolution)
    solB = solve(KB, cfg.eta, cfg.incident, cfg.resolution)
    frame = corner_frame(KA, vidx, h)
    d = _out(cfg, args)
    summary = {}
    for fac in cfg.tau_factors:
        tau = fac * default_tau0(cfg.k, h)
        probe, cert = make_probe(tau, cfg.k, frame, cfg.alpha_prime)
        led = integral_identity_ledger(solA, solB, frame, h, probe, cfg.eta, cert=cert)
        path = os.path.join(d, f"{cfg.prefix}_ledger_tau{fac:g}.csv")
        led.to_csv(path)
        summary[f"tau={tau:.6g}"] = {
            "N": led.N, "residual": led.residual, "lhs_abs": abs(led.lhs), "bounds_ok": led.all_bounds_ok,
            "constants": led.constants(),
        }
        print(f"tau={tau:.6g} N={led.N} residual={led.residual:.3e} bounds_ok={led.all_bounds_ok} -> {path}")
    _dump(os.path.join(d, f"{cfg.prefix}_corner.yaml"), summary)
    return EXIT_OK


def cmd_chain(cfg, sections, args):
    sec = sections.get("chain", {})
    r = float(sec.get("r", cfg.params.r_m / 8))
    R = cfg.params.R
    grid = eroded_exterior([cfg.polygon], 4 * r, (-R, R, -R, R))
    start = sec.get("start", [-0.8 * R, 0.0])
    end = sec.get("end", [0.8 * R, 0.0])
    chain = build_chain(grid, start, end, r, r_m=cfg.params.r_m)
    d = _out(cfg, args)
    path = os.path.join(d, f"{cfg.prefix}_chain.csv")
    chain.to_csv(path)
    fit = fit_three_sphere(cfg.k, seed=cfg.seed)
    fld = plane_wave_superposition(cfg.k, int(sec.get("n_waves", 20)), np.random.default_rng(cfg.seed))
    prop = propagate(fld, chain, 1.0, fit.chain_constant, fit.beta)
    _dump(os.path.join(d, f"{cfg.prefix}_chain.yaml"), {
        "n_disks": chain.n, "d_gamma": chain.d_gamma, "audit": chain.audit,
        "three_sphere": {"C": fit.C, "beta": fit.beta, "pass": fit.n_pass, "of": fit.n_valid},
        "propagation": {"bound": prop.bound, "m0": prop.m0, "last_sup": prop.last_sup, "exponent": prop.exponent},
    })
    print(f"chain of {chain.n} disks, length {chain.d_gamma:.6g} -> {path}")
    return EXIT_OK


def _ledger_in(d, prefix):
    path = os.path.join(d, f"{prefix}_ledger.yaml")
    return read_ledger_yaml(path) if os.path.exists(path) else ConstantsLedger()


def cmd_sweep_shape(cfg, sections, args):
    res = shape_stability_sweep(cfg)
    d = _out(cfg, args)
    Ns = {r.N for r in res.rows if r.fit_ok}
    kap = float(kappa(min(Ns))) if Ns else None
    paths = emit_report(res.rows, res.ledger, d, cfg.prefix, res.fitted.get("C"), kap,
                        extra={"fitted": res.fitted, "monotone": res.monotone, "solver_floor": res.floor})
    print(f"{len(res.rows)} rows; monotone={res.monotone}; C={res.fitted.get('C', math.nan):.6g} -> {paths['csv']}")
    return EXIT_OK


def cmd_sweep_impedance(cfg, sections, args):
    res = impedance_stability_sweep(cfg)
    d = _out(cfg, args)
    paths = emit_report(res.rows, res.ledger, d, cfg.prefix, ylabel="eta_gap",
                        extra={"fitted": res.fitted, "monotone": res.monotone, "solver_floor": res.floor})
    print(f"{len(res.rows)} rows; monotone={res.monotone}; C_P={res.fitted.get('C_P', math.nan):.6g} -> {paths['csv']}")
    return EXIT_OK


def cmd_report(cfg, sections, args):
    d = args.out or cfg.out_dir
    rows = read_rows_csv(os.path.join(d, f"{cfg.prefix}.csv"))
    led = _ledger_in(d, cfg.prefix)
    Ns = {r.N for r in rows}
    impedance = cfg.family.mode == "impedance-shift"
    C = None if impedance else led.get("C")
    kap = None if impedance or not Ns else float(kappa(min(Ns)))
    path = os.path.join(d, f"{cfg.prefix}.svg")
    with open(path, "w") as fh:
        fh.write(render_svg(rows, C, kap, "eta_gap" if impedance else "hausdorff"))
    print(f"plot -> {path}")
    return EXIT_OK


HANDLERS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "farfield": cmd_farfield,
    "corner": cmd_corner,
    "chain": cmd_chain,
    "sweep-shape": cmd_sweep_shape,
    "sweep-impedance": cmd_sweep_impedance,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Impedance scattering stability lab")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", required=True, help="YAML experiment configuration")
    p.add_argument("--seed", type=int, default=None, help="overrides the configured seed")
    p.add_argument("--out", default=None, help="output directory (overrides the configured one)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not (0 <= args.seed < 2**64):
        print("seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg, sections = load_config(args.config, args.seed)
        return HANDLERS[args.verb](cfg, sections, args)
    except (ConfigError, StructuralError, PreconditionError, ConfigurationError, DisconnectedRegionError, SmallnessGeometryError, FileNotFoundError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
