"""Minimal SVG line charts and histograms for simulation summaries."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

_W, _H = 640, 420
_L, _R, _T, _B = 70, 150, 40, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _scale(lo, hi, log):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _map(v, lo, hi, log, a, b):
    v = math.log10(v) if log else v
    return a + (v - lo) / (hi - lo) * (b - a)


def _ticks(lo, hi, log):
    if log:
        return [10.0**k for k in range(math.floor(lo), math.ceil(hi) + 1) if lo <= k <= hi] or [10.0**lo]
    return list(np.linspace(lo, hi, 5))


def _frame(title, xlabel, ylabel):
    x0, y0, x1, y1 = _L, _T, _W - _R, _H - _B
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>',
    ]


def _axes(out, xr, yr, xlog, ylog):
    x0, y0, x1, y1 = _L, _T, _W - _R, _H - _B
    for v in _ticks(*xr, xlog):
        px = _map(v, *xr, xlog, x0, x1)
        out.append(f'<line x1="{px:.1f}" y1="{y1}" x2="{px:.1f}" y2="{y1 + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.1f}" y="{y1 + 18}" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(*yr, ylog):
        py = _map(v, *yr, ylog, y1, y0)
        out.append(f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end">{v:.3g}</text>')


def _legend(out, names):
    for k, name in enumerate(names):
        y = _T + 10 + 18 * k
        c = _COLORS[k % len(_COLORS)]
        out.append(f'<line x1="{_W - _R + 10}" y1="{y}" x2="{_W - _R + 30}" y2="{y}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{_W - _R + 36}" y="{y + 4}">{escape(name)}</text>')


def line_chart(xs, series, title="", xlabel="", ylabel="", xlog=True, ylog=True):
    """SVG text for one or more lines over shared ``xs``; ``series`` maps name to values."""
    xs = np.asarray(xs, dtype=float)
    vals = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    if ylog:
        vals = vals[vals > 0]
    xr = _scale(xs.min(), xs.max(), xlog)
    yr = _scale(vals.min(), vals.max(), ylog)
    out = _frame(title, xlabel, ylabel)
    _axes(out, xr, yr, xlog, ylog)
    x0, y0, x1, y1 = _L, _T, _W - _R, _H - _B
    for k, (name, ys) in enumerate(series.items()):
        pts = [
            f"{_map(x, *xr, xlog, x0, x1):.1f},{_map(y, *yr, ylog, y1, y0):.1f}"
            for x, y in zip(xs, ys)
            if not ylog or y > 0
        ]
        c = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{c}" stroke-width="2"/>')
    _legend(out, list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def histogram(samples, bins=30, title="", xlabel="", ylabel="count", vline=1.0):
    """Overlaid step histograms of several samples, with a reference line at ``vline``."""
    allv = np.concatenate([np.asarray(v, dtype=float) for v in samples.values()])
    allv = allv[np.isfinite(allv)]
    lo, hi = float(allv.min()), float(allv.max())
    if vline is not None:
        lo, hi = min(lo, vline), max(hi, vline)
    edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
    counts = {k: np.histogram(np.asarray(v, dtype=float), edges)[0] for k, v in samples.items()}
    top = max(int(c.max()) for c in counts.values()) or 1
    xr, yr = (edges[0], edges[-1]), (0.0, float(top))
    out = _frame(title, xlabel, ylabel)
    _axes(out, xr, yr, False, False)
    x0, y0, x1, y1 = _L, _T, _W - _R, _H - _B
    for k, (name, c) in enumerate(counts.items()):
        pts = []
        for i, n in enumerate(c):
            xa = _map(edges[i], *xr, False, x0, x1)
            xb = _map(edges[i + 1], *xr, False, x0, x1)
            py = _map(n, *yr, False, y1, y0)
            pts += [f"{xa:.1f},{py:.1f}", f"{xb:.1f},{py:.1f}"]
        col = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{col}" stroke-width="2"/>')
    if vline is not None:
        px = _map(vline, *xr, False, x0, x1)
        out.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y1}" stroke="red" stroke-dasharray="4 3"/>')
    _legend(out, list(counts))
    out.append("</svg>")
    return "\n".join(out) + "\n"
