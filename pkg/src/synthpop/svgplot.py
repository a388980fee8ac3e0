"""Dependency-free SVG 1.1 emission for scatter and line charts.

Output is deterministic for identical inputs: no timestamps, fixed float
formatting, and callers pass series in a fixed order.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from xml.sax.saxutils import escape

WIDTH = 520
HEIGHT = 440
MARGIN_LEFT = 64
MARGIN_RIGHT = 20
MARGIN_TOP = 44
MARGIN_BOTTOM = 52

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _tick_label(x: float) -> str:
    if x == 0:
        return "0"
    if abs(x) >= 1000 or abs(x) < 0.01:
        return f"{x:.1e}"
    return f"{x:.3g}"


class _Axis:
    """Maps data coordinates into the plot rectangle, optionally log10."""

    def __init__(self, lo: float, hi: float, pix_lo: float, pix_hi: float, log: bool):
        if log:
            lo = max(lo, 1e-12)
            hi = max(hi, lo * 10.0)
            self.lo, self.hi = math.log10(lo), math.log10(hi)
        else:
            if hi <= lo:
                hi = lo + 1.0
            self.lo, self.hi = lo, hi
        self.pix_lo, self.pix_hi = pix_lo, pix_hi
        self.log = log

    def __call__(self, x: float) -> float:
        v = math.log10(max(x, 1e-12)) if self.log else x
        frac = (v - self.lo) / (self.hi - self.lo)
        return self.pix_lo + frac * (self.pix_hi - self.pix_lo)

    def ticks(self, n: int = 5) -> list[float]:
        if self.log:
            lo, hi = math.floor(self.lo), math.ceil(self.hi)
            step = max(1, (hi - lo) // n)
            return [10.0**e for e in range(lo, hi + 1, step)]
        return [self.lo + i * (self.hi - self.lo) / n for i in range(n + 1)]


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]


def _axes(xaxis: _Axis, yaxis: _Axis, xlabel: str, ylabel: str) -> list[str]:
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
    parts = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for t in xaxis.ticks():
        px = xaxis(t)
        parts.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{_fmt(px)}" y="{y0 + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{_tick_label(t)}</text>'
        )
    for t in yaxis.ticks():
        py = yaxis(t)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(py + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{_tick_label(t)}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 14}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2})">{escape(ylabel)}</text>'
    )
    return parts


def scatter_svg(
    points: Sequence[tuple[float, float]],
    title: str,
    xlabel: str,
    ylabel: str,
    annotation: Sequence[str] = (),
) -> str:
    """45-degree scatter: points, diagonal reference, corner annotation."""
    hi = max((max(x, y) for x, y in points), default=1.0)
    hi = hi * 1.05 if hi > 0 else 1.0
    xaxis = _Axis(0.0, hi, MARGIN_LEFT, WIDTH - MARGIN_RIGHT, log=False)
    yaxis = _Axis(0.0, hi, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP, log=False)
    parts = _header(title) + _axes(xaxis, yaxis, xlabel, ylabel)
    parts.append(
        f'<line x1="{_fmt(xaxis(0))}" y1="{_fmt(yaxis(0))}" '
        f'x2="{_fmt(xaxis(hi))}" y2="{_fmt(yaxis(hi))}" '
        f'stroke="#888888" stroke-dasharray="4 3"/>'
    )
    for x, y in points:
        parts.append(
            f'<circle cx="{_fmt(xaxis(x))}" cy="{_fmt(yaxis(y))}" r="2.5" '
            f'fill="#1f77b4" fill-opacity="0.55"/>'
        )
    for i, line in enumerate(annotation):
        parts.append(
            f'<text x="{MARGIN_LEFT + 8}" y="{MARGIN_TOP + 14 + 14 * i}" '
            f'font-family="sans-serif" font-size="11">{escape(line)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart_svg(
    series: Sequence[tuple[str, Sequence[tuple[float, float]]]],
    title: str,
    xlabel: str,
    ylabel: str,
    logx: bool = False,
    logy: bool = False,
) -> str:
    """Multi-series line chart with a legend; None/non-finite y are skipped."""
    cleaned = [
        (name, [(x, y) for x, y in pts if y is not None and math.isfinite(y)])
        for name, pts in series
    ]
    xs = [x for _, pts in cleaned for x, _ in pts]
    ys = [y for _, pts in cleaned for _, y in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    xaxis = _Axis(min(xs), max(xs), MARGIN_LEFT, WIDTH - MARGIN_RIGHT, log=logx)
    ylo = min(ys)
    yhi = max(ys)
    if not logy:
        pad = 0.05 * (yhi - ylo if yhi > ylo else max(abs(yhi), 1.0))
        ylo, yhi = ylo - pad, yhi + pad
    yaxis = _Axis(ylo, yhi, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP, log=logy)
    parts = _header(title) + _axes(xaxis, yaxis, xlabel, ylabel)
    for i, (name, pts) in enumerate(cleaned):
        color = PALETTE[i % len(PALETTE)]
        if pts:
            coords = " ".join(f"{_fmt(xaxis(x))},{_fmt(yaxis(y))}" for x, y in pts)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for x, y in pts:
                parts.append(f'<circle cx="{_fmt(xaxis(x))}" cy="{_fmt(yaxis(y))}" r="2" fill="{color}"/>')
        ly = MARGIN_TOP + 14 + 14 * i
        parts.append(f'<line x1="{WIDTH - 150}" y1="{ly - 4}" x2="{WIDTH - 130}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{WIDTH - 124}" y="{ly}" font-family="sans-serif" font-size="11">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
