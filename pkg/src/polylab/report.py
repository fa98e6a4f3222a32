"""CSV, SVG and YAML output for stability sweeps."""

from __future__ import annotations

import csv
import math
import os
from xml.sax.saxutils import escape

import yaml

from .lab import ConstantsLedger, StabilityRow

COLUMNS = ("t", "eps", "eps1", "hausdorff", "eta_gap", "N", "T_eps", "bound_shape", "psi_shape", "flags")
FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def write_rows_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(COLUMNS)
        for r in rows:
            wr.writerow(
                [_fmt(r.t), _fmt(r.eps), _fmt(r.eps1), _fmt(r.hausdorff), _fmt(r.eta_gap), str(int(r.N)),
                 _fmt(r.T_eps), _fmt(r.bound_shape), _fmt(r.psi_shape), ";".join(r.flags)]
            )


def read_rows_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected header {header}")
        for rec in rd:
            f = [float(x) for x in rec[:5]]
            rows.append(
                StabilityRow(f[0], f[1], f[2], f[3], f[4], int(rec[5]), float(rec[6]), float(rec[7]), float(rec[8]),
                             tuple(x for x in rec[9].split(";") if x))
            )
    return rows


def _log_ticks(lo: float, hi: float):
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    return [10.0**e for e in range(a, b + 1)]


def render_svg(rows, C: float | None = None, kappa: float | None = None, ylabel: str = "hausdorff", width=640, height=480) -> str:
    """Log-log plot of ``y`` against ``ln ln(1/eps)`` with an optional curve ``C x^(-kappa)``."""
    pts = []
    for r in rows:
        y = r.hausdorff if ylabel == "hausdorff" else r.eta_gap
        if 0 < r.eps < 1 / math.e and y > 0:
            pts.append((math.log(math.log(1 / r.eps)), y, r.flags))
    ml, mr, mt, mb = 70, 20, 30, 50
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        curve = []
        if C is not None and kappa is not None:
            curve = [C * x ** (-kappa) for x in xs]
        x_lo, x_hi = min(xs) / 1.1, max(xs) * 1.1
        y_lo, y_hi = min(ys + curve) / 2, max(ys + curve) * 2
        X = lambda v: ml + (math.log10(v) - math.log10(x_lo)) / (math.log10(x_hi) - math.log10(x_lo)) * (width - ml - mr)  # noqa: E731
        Y = lambda v: height - mb - (math.log10(v) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo)) * (height - mt - mb)  # noqa: E731
        out.append(f'<rect x="{ml}" y="{mt}" width="{width - ml - mr}" height="{height - mt - mb}" fill="none" stroke="black"/>')
        for tv in _log_ticks(y_lo, y_hi):
            if y_lo <= tv <= y_hi:
                out.append(f'<line x1="{ml - 4}" y1="{Y(tv):.2f}" x2="{ml}" y2="{Y(tv):.2f}" stroke="black"/>')
                out.append(f'<text x="{ml - 6}" y="{Y(tv) + 4:.2f}" font-size="11" text-anchor="end">{tv:.0e}</text>')
        for tv in (x_lo * 1.1, math.sqrt(x_lo * x_hi), x_hi / 1.1):
            out.append(f'<text x="{X(tv):.2f}" y="{height - mb + 16}" font-size="11" text-anchor="middle">{tv:.3g}</text>')
        out.append(f'<text x="{(ml + width - mr) / 2}" y="{height - 10}" font-size="12" text-anchor="middle">ln ln(1/eps)</text>')
        out.append(f'<text x="16" y="{(mt + height - mb) / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {(mt + height - mb) / 2})">{escape(ylabel)}</text>')
        if curve:
            order = sorted(range(len(xs)), key=lambda i: xs[i])
            path = " ".join(f"{'M' if j == 0 else 'L'}{X(xs[i]):.2f},{Y(curve[i]):.2f}" for j, i in enumerate(order))
            out.append(f'<path d="{path}" fill="none" stroke="#c0392b" stroke-width="1.5"/>')
        for x, y, flags in pts:
            out.append(f'<circle cx="{X(x):.2f}" cy="{Y(y):.2f}" r="3.5" fill="#2c3e50"/>')
            if flags:
                cx, cy = X(x), Y(y)
                out.append(f'<path d="M{cx - 6:.2f},{cy - 6:.2f} L{cx + 6:.2f},{cy + 6:.2f} M{cx - 6:.2f},{cy + 6:.2f} L{cx + 6:.2f},{cy - 6:.2f}" stroke="#e67e22"/>')
                out.append(f'<text x="{cx + 8:.2f}" y="{cy - 8:.2f}" font-size="10">{escape(";".join(flags))}</text>')
    else:
        out.append('<text x="20" y="40" font-size="12">no plottable rows</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_ledger_yaml(ledger: ConstantsLedger, path, extra: dict | None = None) -> None:
    doc = {"constants": ledger.snapshot()}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def read_ledger_yaml(path) -> ConstantsLedger:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return ConstantsLedger.from_snapshot(doc.get("constants", {}))


def emit_report(rows, ledger: ConstantsLedger, out_dir, prefix: str = "report", C=None, kappa=None, ylabel="hausdorff", extra=None) -> dict:
    """Write ``<prefix>.csv``, ``<prefix>.svg`` and ``<prefix>_ledger.yaml`` and return their paths."""
    if not rows:
        raise ValueError("no rows to report")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, f"{prefix}.csv"),
        "svg": os.path.join(out_dir, f"{prefix}.svg"),
        "ledger": os.path.join(out_dir, f"{prefix}_ledger.yaml"),
    }
    write_rows_csv(rows, paths["csv"])
    with open(paths["svg"], "w") as fh:
        fh.write(render_svg(rows, C, kappa, ylabel))
    write_ledger_yaml(ledger, paths["ledger"], extra)
    return paths
