"""Minimal SVG rendering for error curves and histograms.

Output is plain text built from polylines, rects and text elements; numbers are
formatted with a fixed precision so identical input gives identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

LOG_FLOOR = 1e-16
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=30, bottom=60)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


class PlotError(ValueError):
    pass


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def _n(v: float) -> str:
    return f"{v:.2f}"


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    w = WIDTH - MARGIN["left"] - MARGIN["right"]
    h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<g class="axes" stroke="black" fill="none"><path d="M{MARGIN["left"]},{MARGIN["top"]} '
        f'v{h} h{w}"/></g>',
        f'<text x="{MARGIN["left"] + w / 2:.1f}" y="{HEIGHT - 28}" text-anchor="middle" font-size="12">'
        f"{escape(xlabel)}</text>",
        f'<text x="16" y="{MARGIN["top"] + h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN["top"] + h / 2:.1f})">{escape(ylabel)}</text>',
    ]


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def line_plot(series: list[Series], title: str, xlabel: str, ylabel: str, log_y: bool = True) -> str:
    """Overlay of one polyline per series with a legend.

    On a log axis, non-positive values are drawn at ``LOG_FLOOR`` and a footnote
    says so. NaN points (e.g. after divergence) end the polyline.
    """
    if not series or all(np.size(s.y) == 0 for s in series):
        raise PlotError("nothing to plot")
    clamped = False
    prepared = []
    for s in series:
        x = np.asarray(s.x, dtype=np.float64)
        y = np.asarray(s.y, dtype=np.float64)
        if log_y:
            low = np.isfinite(y) & (y < LOG_FLOOR)
            clamped |= bool(low.any())
            y = np.where(low, LOG_FLOOR, y)
            y = np.log10(y)
        prepared.append((s.label, x, y))
    xs = np.concatenate([x for _, x, _ in prepared])
    ys = np.concatenate([y for _, _, y in prepared])
    ys = ys[np.isfinite(ys)]
    if ys.size == 0:
        raise PlotError("no finite values to plot")
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    y0, y1 = float(ys.min()), float(ys.max())
    if log_y:
        y0, y1 = math.floor(y0), math.ceil(y1)
        if y1 == y0:
            y1 = y0 + 1
    sx = _scale(x0, x1, MARGIN["left"], WIDTH - MARGIN["right"])
    sy = _scale(y0, y1, HEIGHT - MARGIN["bottom"], MARGIN["top"])

    out = _frame(title, xlabel, ylabel)
    for tick in _ticks(y0, y1, log_y):
        label = f"1e{int(tick)}" if log_y else f"{tick:.3g}"
        out.append(f'<text class="tick" x="{MARGIN["left"] - 6}" y="{_n(sy(tick) + 4)}" text-anchor="end" '
                   f'font-size="10">{label}</text>')
    for tick in _ticks(x0, x1, False):
        out.append(f'<text class="tick" x="{_n(sx(tick))}" y="{HEIGHT - MARGIN["bottom"] + 14}" '
                   f'text-anchor="middle" font-size="10">{tick:.4g}</text>')
    for i, (label, x, y) in enumerate(prepared):
        color = PALETTE[i % len(PALETTE)]
        ok = np.isfinite(y) & np.isfinite(x)
        stop = int(np.argmin(ok)) if not ok.all() else ok.size
        pts = " ".join(f"{_n(sx(a))},{_n(sy(b))}" for a, b in zip(x[:stop], y[:stop]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" data-label="{escape(label)}" '
                   f'points="{pts}"/>')
        ly = MARGIN["top"] + 14 + 16 * i
        lx = WIDTH - MARGIN["right"] - 150
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 26}" y="{ly}" font-size="11">{escape(label)}</text>')
    if clamped:
        out.append(f'<text class="footnote" x="{MARGIN["left"]}" y="{HEIGHT - 8}" font-size="10">'
                   f"values below {LOG_FLOOR:g} (including zeros) are drawn at the axis floor {LOG_FLOOR:g}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _ticks(lo: float, hi: float, integer: bool) -> list[float]:
    if integer:
        step = max(1, int(math.ceil((hi - lo) / 8)))
        return [float(t) for t in range(int(lo), int(hi) + 1, step)]
    if hi <= lo:
        return [lo]
    return [float(t) for t in np.linspace(lo, hi, 5)]


def histogram(values, bins: int, title: str, xlabel: str) -> str:
    """Histogram with exactly ``bins`` bars (empty bins get zero height)."""
    v = np.asarray(values, dtype=np.float64)
    finite = v[np.isfinite(v)]
    if v.size == 0:
        raise PlotError("nothing to plot")
    if bins < 1:
        raise PlotError("bins must be >= 1")
    if finite.size:
        counts, edges = np.histogram(finite, bins=bins)
    else:
        counts, edges = np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    out = _frame(title, xlabel, "count")
    sx = _scale(float(edges[0]), float(edges[-1]), MARGIN["left"], WIDTH - MARGIN["right"])
    top = max(int(counts.max()), 1)
    sy = _scale(0.0, float(top), HEIGHT - MARGIN["bottom"], MARGIN["top"])
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        x, w = sx(a), max(sx(b) - sx(a) - 1.0, 0.5)
        y = sy(c)
        out.append(f'<rect class="bar" x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" '
                   f'height="{_n(HEIGHT - MARGIN["bottom"] - y)}" fill="{PALETTE[0]}"/>')
    for tick in _ticks(float(edges[0]), float(edges[-1]), False):
        out.append(f'<text class="tick" x="{_n(sx(tick))}" y="{HEIGHT - MARGIN["bottom"] + 14}" '
                   f'text-anchor="middle" font-size="10">{tick:.3g}</text>')
    n_bad = int(v.size - finite.size)
    if n_bad:
        out.append(f'<text class="footnote" x="{MARGIN["left"]}" y="{HEIGHT - 8}" font-size="10">'
                   f"{n_bad} diverged (non-finite) values not shown</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def series_from_csv(header: list[str], rows: list[list[str]], label: str, column: str | None = None) -> Series:
    """First column is x; ``column`` (default: the second) is y."""
    if not rows:
        raise PlotError(f"{label}: CSV has no data rows")
    col = 1 if column is None else header.index(column)
    x = np.array([float(r[0]) for r in rows])
    y = np.array([float(r[col]) for r in rows])
    return Series(label, x, y)
