"""Minimal SVG emitters for diagnostics: log-scale line plots and categorical heat maps."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def line_plot_log(
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    *,
    title: str = "",
    xlabel: str = "t",
    width: int = 640,
    height: int = 400,
    floor: float = 1e-300,
) -> str:
    """Polylines of each series against x on a log10 y-axis; non-positive values clamp to ``floor``."""
    ml, mr, mt, mb = 70, 130, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    logs = {k: [math.log10(max(float(v), floor)) for v in vals] for k, vals in series.items()}
    allv = [v for vs in logs.values() for v in vs] or [0.0]
    ylo, yhi = math.floor(min(allv)), math.ceil(max(allv))
    if yhi <= ylo:
        yhi = ylo + 1
    xlo, xhi = (min(x), max(x)) if len(x) else (0.0, 1.0)
    if xhi <= xlo:
        xhi = xlo + 1.0

    def px(v: float) -> float:
        return ml + (v - xlo) / (xhi - xlo) * pw

    def py(v: float) -> float:
        return mt + (yhi - v) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
    ]
    step = max(1, (yhi - ylo) // 8)
    for e in range(ylo, yhi + 1, step):
        y = _fmt(py(e))
        out.append(f'<line x1="{ml}" y1="{y}" x2="{ml + pw}" y2="{y}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">1e{e}</text>')
    for i in range(6):
        xv = xlo + (xhi - xlo) * i / 5
        out.append(f'<text x="{_fmt(px(xv))}" y="{mt + ph + 15}" text-anchor="middle">{xv:.3g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for j, (name, vals) in enumerate(logs.items()):
        color = PALETTE[j % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, vals))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 14 * j + 8
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly}" dominant-baseline="middle">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def category_map(
    xs: Sequence[float],
    ys: Sequence[float],
    labels: Sequence[Sequence[str]],
    *,
    xlabel: str = "d1",
    ylabel: str = "d2/r",
    title: str = "",
    cell: int = 12,
    colors: Mapping[str, str] | None = None,
) -> str:
    """Heat map with labels[i][j] at (xs[i], ys[j]); one color per distinct label."""
    cats = sorted({lab for row in labels for lab in row})
    colors = dict(colors or {})
    for k, c in enumerate(cats):
        colors.setdefault(c, PALETTE[k % len(PALETTE)])
    nx, ny = len(xs), len(ys)
    ml, mt, mb = 60, 30, 45
    pw, ph = nx * cell, ny * cell
    width = ml + pw + 170
    height = mt + ph + mb
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
    ]
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for i in range(nx):
        for j in range(ny):
            x0 = ml + i * cell
            y0 = mt + (ny - 1 - j) * cell
            out.append(f'<rect x="{x0}" y="{y0}" width="{cell}" height="{cell}" fill="{colors[labels[i][j]]}"/>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{ml}" y="{mt + ph + 15}" text-anchor="start">{xs[0]:.3g}</text>')
    out.append(f'<text x="{ml + pw}" y="{mt + ph + 15}" text-anchor="end">{xs[-1]:.3g}</text>')
    out.append(f'<text x="{ml - 6}" y="{mt + ph}" text-anchor="end">{ys[0]:.3g}</text>')
    out.append(f'<text x="{ml - 6}" y="{mt + 10}" text-anchor="end">{ys[-1]:.3g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2})">{escape(ylabel)}</text>'
    )
    for k, c in enumerate(cats):
        ly = mt + 16 * k
        out.append(f'<rect x="{ml + pw + 12}" y="{ly}" width="12" height="12" fill="{colors[c]}"/>')
        out.append(f'<text x="{ml + pw + 30}" y="{ly + 10}">{escape(c)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
