"""CSV emission and a small dependency-free SVG line-chart writer."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def format_float(x: float) -> str:
    # 17 significant digits round-trip any float64
    return format(float(x), ".17g")


def csv_text(columns: Mapping[str, Sequence[float]]) -> str:
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    n = len(data[0])
    if any(len(d) != n for d in data):
        raise ValueError("all columns must have the same length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for i in range(n):
        w.writerow([format_float(d[i]) for d in data])
    return buf.getvalue()


def write_csv(path, columns: Mapping[str, Sequence[float]]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(columns))
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


def parse_csv(text: str) -> dict[str, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#17becf", "#bcbd22")


def svg_line_chart(x, series: Mapping[str, Sequence[float]], title: str = "",
                   width: int = 640, height: int = 400) -> str:
    """Render the series against ``x`` as a minimal SVG document."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if math.isclose(y0, y1):
        y0, y1 = y0 - 0.5, y1 + 0.5
    x0, x1 = float(x.min()), float(x.max())
    if math.isclose(x0, x1):
        x1 = x0 + 1.0
    ml, mr, mt, mb = 60, 120, 30, 40
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{ml}" y="{mt - 10}" font-size="13" font-family="sans-serif">{title}</text>',
        f'<text x="{ml}" y="{height - 12}" font-size="11" font-family="sans-serif">'
        f'{x0:.4g}</text>',
        f'<text x="{ml + pw}" y="{height - 12}" font-size="11" text-anchor="end" '
        f'font-family="sans-serif">{x1:.4g}</text>',
        f'<text x="{ml - 5}" y="{mt + ph}" font-size="11" text-anchor="end" '
        f'font-family="sans-serif">{y0:.4g}</text>',
        f'<text x="{ml - 5}" y="{mt + 10}" font-size="11" text-anchor="end" '
        f'font-family="sans-serif">{y1:.4g}</text>',
    ]
    for i, (name, y) in enumerate(ys.items()):
        color = _COLORS[i % len(_COLORS)]
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        ly = mt + 14 * (i + 1)
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly}" font-size="11" '
                   f'font-family="sans-serif">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_from_csv(text: str, title: str = "") -> str:
    """Plot every column of a CSV against its first column."""
    cols = parse_csv(text)
    names = list(cols)
    return svg_line_chart(cols[names[0]], {k: cols[k] for k in names[1:]}, title=title)
