"""SVG rendering of an AMR result table."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import ValidationError

WIDTH, HEIGHT = 640, 480
MARGIN = dict(left=70, right=20, top=30, bottom=55)

# (label, stroke, dash, fill) per curve
STYLES = {
    "AMR_est": ("AMR estimate", "black", None, "none"),
    "Conley": ("Spatial-HAC CI", "red", "2,3", "red"),
    "Per": ("Permutation null percentiles", "blue", "2,3", "blue"),
    "AMR_est_smoothed": ("Smoothed AMR", "black", "8,4", "none"),
}


def _ticks(lo: float, hi: float, n: int = 6):
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for m in (1, 2, 5, 10):
        if span / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def emit_plot(columns: dict, path, distance_units: str = "distance",
              outcome_units: str = "AMR") -> str:
    """Write an SVG line chart of the result columns and return the SVG text.

    Draws the AMR estimate (solid black), the Conley interval (red dotted
    band), the permutation percentiles (blue dotted band) and the smoothed
    curve (dashed black), each as one ``polyline``. A band is traced along
    its lower bound and back along its upper bound. Missing values are skipped.
    """
    if "dVec" not in columns or len(columns["dVec"]) == 0:
        raise ValidationError("cannot plot an empty result table")
    d = np.asarray(columns["dVec"], dtype=float)
    if len(d) < 2:
        raise ValidationError("plot needs at least two distances")

    series = []  # (style key, x, y) where bands trace lower then upper reversed
    def _add(key, y):
        y = np.asarray(y, dtype=float)
        ok = ~np.isnan(y)
        series.append((key, d[ok], y[ok]))

    _add("AMR_est", columns["AMR_est"])
    for key in ("Conley", "Per"):
        lo, hi = columns.get(f"{key}.CI.l"), columns.get(f"{key}.CI.u")
        if lo is None or hi is None:
            continue
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        ok = ~(np.isnan(lo) | np.isnan(hi))
        xs = np.concatenate([d[ok], d[ok][::-1]])
        ys = np.concatenate([lo[ok], hi[ok][::-1]])
        series.append((key, xs, ys))
    if "AMR_est_smoothed" in columns:
        _add("AMR_est_smoothed", columns["AMR_est_smoothed"])

    ys_all = np.concatenate([s[2] for s in series] + [np.zeros(1)])
    ymin, ymax = float(ys_all.min()), float(ys_all.max())
    if ymax - ymin < 1e-12:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad
    xmin, xmax = float(d.min()), float(d.max())

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - xmin) / (xmax - xmin) * pw

    def sy(y):
        return MARGIN["top"] + (ymax - y) / (ymax - ymin) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444"/>',
    ]
    for t in _ticks(xmin, xmax):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{MARGIN["top"] + ph}" x2="{x:.2f}" '
                   f'y2="{MARGIN["top"] + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{x:.2f}" y="{MARGIN["top"] + ph + 18}" '
                   f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(ymin, ymax):
        y = sy(t)
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{y:.2f}" x2="{MARGIN["left"]}" '
                   f'y2="{y:.2f}" stroke="#444"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{y + 4:.2f}" '
                   f'text-anchor="end">{_fmt(t)}</text>')
    if ymin < 0 < ymax:
        out.append(f'<line x1="{MARGIN["left"]}" y1="{sy(0):.2f}" x2="{MARGIN["left"] + pw}" '
                   f'y2="{sy(0):.2f}" stroke="#bbb"/>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 12}" '
               f'text-anchor="middle">{escape(distance_units)}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.2f})">'
               f'{escape(outcome_units)}</text>')

    for key, xs, ys in series:
        label, stroke, dash, fill = STYLES[key]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        if fill != "none":
            dash_attr += ' fill-opacity="0.06"'
        out.append(f'<polyline class="{key}" points="{pts}" fill="{fill}" stroke="{stroke}" '
                   f'stroke-width="1.5"{dash_attr}><title>{escape(label)}</title></polyline>')

    lx, ly = MARGIN["left"] + 10, MARGIN["top"] + 10
    for k, (key, *_rest) in enumerate(series):
        label, stroke, dash, _ = STYLES[key]
        y = ly + 16 * k
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{stroke}" '
                   f'stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{y + 4}">{escape(label)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    Path(path).write_text(text)
    return text
