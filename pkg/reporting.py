"""
reporting.py — Byte-stable CSV tables and SVG drawings of meshes and convergence curves.

CSV: comma separated, '.' decimal, 12 significant digits, '\\n' row endings,
empty field for a missing value. SVG: fixed 1000×1000 canvas, stroke width 1,
no timestamps or generated ids.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from mesh2d import Mesh

logger = logging.getLogger(__name__)

CANVAS = 1000
PLOT_MARGIN = 80
PALETTE = ("#1f4e79", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e")

TABLE_HEADER = ("n_elem", "error", "majorant", "delta", "normalized")
AMR_HEADER = ("iter", "n_elem", "value", "normalized")
COMPARE_HEADER = ("iter", "n_opt", "n_maj", "diff_pct")
QUADRATURE_HEADER = ("degree", "error", "majorant", "delta")


# ─── CSV ────────────────────────────────────────────────────────────────

def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        return ""
    return f"{value:.12g}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a table; every row must have as many fields as the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"Row {row!r} does not match header {header!r}")
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.info(f"Wrote {path} ({count} rows)")
    return path


# ─── SVG ────────────────────────────────────────────────────────────────

def _coord(v: float) -> str:
    return f"{v:.3f}"


def _svg(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" '
        f'viewBox="0 0 {CANVAS} {CANVAS}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def mesh_svg(mesh: Mesh) -> str:
    """Wireframe with one line per edge, scaled uniformly into the canvas."""
    lo = mesh.vertices.min(axis=0)
    extent = float((mesh.vertices.max(axis=0) - lo).max()) or 1.0
    pad = 0.02 * CANVAS
    scale = (CANVAS - 2 * pad) / extent
    x = pad + (mesh.vertices[:, 0] - lo[0]) * scale
    y = CANVAS - pad - (mesh.vertices[:, 1] - lo[1]) * scale
    lines = [
        f'<line x1="{_coord(x[a])}" y1="{_coord(y[a])}" x2="{_coord(x[b])}" y2="{_coord(y[b])}" '
        f'stroke="black" stroke-width="1"/>'
        for a, b in mesh.edges
    ]
    return _svg(lines)


def convergence_svg(series: dict, title: str = "") -> str:
    """
    Log-log plot of named (x, y) series; points with non-positive or missing
    coordinates are skipped.
    """
    clean = {}
    for name, points in series.items():
        kept = [(float(a), float(b)) for a, b in points if a is not None and b is not None and a > 0 and b > 0]
        if kept:
            clean[name] = kept
    body = [
        f'<rect x="{PLOT_MARGIN}" y="{PLOT_MARGIN}" width="{CANVAS - 2 * PLOT_MARGIN}" '
        f'height="{CANVAS - 2 * PLOT_MARGIN}" fill="none" stroke="black" stroke-width="1"/>'
    ]
    if title:
        body.append(f'<text x="{CANVAS // 2}" y="{PLOT_MARGIN // 2}" text-anchor="middle" font-size="20">{title}</text>')
    if not clean:
        return _svg(body)

    xs = np.log10([a for pts in clean.values() for a, _ in pts])
    ys = np.log10([b for pts in clean.values() for _, b in pts])
    x_lo, x_hi = _padded(xs.min(), xs.max())
    y_lo, y_hi = _padded(ys.min(), ys.max())
    span = CANVAS - 2 * PLOT_MARGIN

    def to_canvas(a: float, b: float) -> tuple[float, float]:
        u = PLOT_MARGIN + (math.log10(a) - x_lo) / (x_hi - x_lo) * span
        v = CANVAS - PLOT_MARGIN - (math.log10(b) - y_lo) / (y_hi - y_lo) * span
        return u, v

    for decade in range(math.ceil(x_lo), math.floor(x_hi) + 1):
        u, _ = to_canvas(10.0**decade, 10.0**y_lo)
        body.append(f'<text x="{_coord(u)}" y="{CANVAS - PLOT_MARGIN + 25}" text-anchor="middle" font-size="14">1e{decade}</text>')
    for decade in range(math.ceil(y_lo), math.floor(y_hi) + 1):
        _, v = to_canvas(10.0**x_lo, 10.0**decade)
        body.append(f'<text x="{PLOT_MARGIN - 10}" y="{_coord(v)}" text-anchor="end" font-size="14">1e{decade}</text>')

    for i, (name, pts) in enumerate(clean.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_coord(u)},{_coord(v)}" for u, v in (to_canvas(a, b) for a, b in pts))
        body.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1"/>')
        body.append(
            f'<text x="{PLOT_MARGIN + 10}" y="{PLOT_MARGIN + 20 * (i + 1)}" font-size="14" fill="{color}">{name}</text>'
        )
    return _svg(body)


def _padded(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(text)
    logger.info(f"Wrote {path}")
    return path


def write_mesh_svg(mesh: Mesh, path) -> Path:
    return write_text(path, mesh_svg(mesh))


def write_convergence_svg(series: dict, path, title: Optional[str] = None) -> Path:
    return write_text(path, convergence_svg(series, title or ""))
