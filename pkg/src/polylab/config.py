"""YAML experiment configuration with strict key checking."""

from __future__ import annotations

import math

import yaml

from .geometry import DEFAULT_PARAMS, AdmissibleParams, Polygon, regular_polygon, unit_square
from .lab import ExperimentConfig, FamilySpec
from .solver import Resolution


class ConfigError(ValueError):
    """Malformed or unknown configuration entries."""


TOP_KEYS = {
    "polygon", "impedance", "k", "incidence_angle", "family", "mesh", "far_field_m",
    "probe", "zeta", "output", "seed", "params", "corner", "chain",
}
SECTION_KEYS = {
    "polygon": {"vertices", "preset", "n", "radius", "phase", "center"},
    "family": {"mode", "magnitudes", "vertex"},
    "mesh": {"panels_per_edge", "order", "grading"},
    "probe": {"tau_factors", "alpha_prime"},
    "output": {"dir", "prefix"},
    "params": {"ell_min", "ell_max", "theta_min", "theta_max", "R", "r_m", "delta", "theta"},
    "corner": {"vertex", "h"},
    "chain": {"start", "end", "r", "n_waves"},
}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def polygon_from_dict(d) -> Polygon:
    _check_keys(d, SECTION_KEYS["polygon"], "polygon")
    if "vertices" in d:
        return Polygon([[float(a), float(b)] for a, b in d["vertices"]])
    preset = d.get("preset")
    if preset == "unit_square":
        return unit_square(d.get("center", (0.0, 0.0)))
    if preset == "regular":
        return regular_polygon(int(d["n"]), float(d.get("radius", 1.0)), float(d.get("phase", 0.0)), d.get("center", (0.0, 0.0)))
    raise ConfigError("polygon needs vertices or a preset (unit_square, regular)")


def polygon_to_dict(poly: Polygon) -> dict:
    return {"vertices": [[float(x), float(y)] for x, y in poly.vertices]}


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError("complex values are given as [re, im]")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def parse_config(doc: dict, seed: int | None = None):
    """Build an :class:`ExperimentConfig` and the per-verb sections from a mapping."""
    _check_keys(doc, TOP_KEYS, "config")
    for name in ("polygon", "family"):
        if name not in doc:
            raise ConfigError(f"missing section {name!r}")
    sections = {}
    for name, allowed in SECTION_KEYS.items():
        if name in doc and doc[name] is not None:
            _check_keys(doc[name], allowed, name)
            sections[name] = doc[name]
    try:
        poly = polygon_from_dict(doc["polygon"])
        fam = doc["family"]
        family = FamilySpec(fam["mode"], tuple(fam["magnitudes"]), int(fam.get("vertex", 2)))
        mesh = sections.get("mesh", {})
        res = Resolution(int(mesh.get("panels_per_edge", 12)), int(mesh.get("order", 16)), float(mesh.get("grading", 3.0)))
        probe = sections.get("probe", {})
        out = sections.get("output", {})
        params = DEFAULT_PARAMS
        if "params" in sections:
            base = {f: getattr(DEFAULT_PARAMS, f) for f in SECTION_KEYS["params"]}
            base.update({k2: float(v) for k2, v in sections["params"].items()})
            params = AdmissibleParams(**base)
        k = float(doc.get("k", 1.0))
        if not (k > 0 and math.isfinite(k)):
            raise ConfigError("k must be positive")
        cfg = ExperimentConfig(
            polygon=poly,
            impedance=_complex(doc.get("impedance", 1.0)),
            k=k,
            incidence_angle=float(doc.get("incidence_angle", 0.0)),
            family=family,
            resolution=res,
            far_field_m=int(doc.get("far_field_m", 128)),
            tau_factors=tuple(float(x) for x in probe.get("tau_factors", (2.0, 4.0, 8.0))),
            alpha_prime=None if probe.get("alpha_prime") is None else float(probe["alpha_prime"]),
            zeta=float(doc.get("zeta", 0.5)),
            out_dir=str(out.get("dir", "out")),
            prefix=str(out.get("prefix", "run")),
            seed=int(doc.get("seed", 0) if seed is None else seed),
            params=params,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, sections


def load_config(path, seed: int | None = None):
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        raise ConfigError("empty configuration")
    return parse_config(doc, seed)
