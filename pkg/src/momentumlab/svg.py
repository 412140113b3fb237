"""Hand-emitted SVG charts: deterministic text, no plotting dependency."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

WIDTH, HEIGHT = 960, 540
MARGIN = {"left": 80, "right": 30, "top": 50, "bottom": 60}
SERIES_COLORS = {"p1": "#1f77b4", "p2": "#d62728"}
NEUTRAL = "#555555"


def fmt(v: float) -> str:
    """Fixed 2-decimal coordinates with trailing zeros trimmed; never '-0'."""
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def tick_label(v: float, step: float) -> str:
    decimals = max(0, -int(math.floor(math.log10(step)))) if step > 0 else 0
    s = f"{v:.{decimals}f}"
    return "0" if float(s) == 0 else s


def nice_step(span: float, target: int = 5) -> float:
    if span <= 0 or not math.isfinite(span):
        return 1.0
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if raw <= m * mag + 1e-12:
            return m * mag
    return 10 * mag


def nice_ticks(lo: float, hi: float, target: int = 5) -> tuple[float, float, list[float]]:
    """Axis range widened to round numbers, plus the ticks inside it."""
    if hi < lo:
        lo, hi = hi, lo
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    step = nice_step(hi - lo, target)
    start = math.floor(lo / step + 1e-9) * step
    stop = math.ceil(hi / step - 1e-9) * step
    n = int(round((stop - start) / step))
    ticks = [round(start + i * step, 10) for i in range(n + 1)]
    return start, stop, ticks


class Frame:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, x_range, y_range):
        self.x0, self.x1, self.xticks = nice_ticks(*x_range)
        self.y0, self.y1, self.yticks = nice_ticks(*y_range)
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    def x(self, v: float) -> float:
        return self.left + (v - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def y(self, v: float) -> float:
        return self.bottom - (v - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def axes(self, x_label: str, y_label: str) -> list[str]:
        out = [f'<g class="axes" stroke="{NEUTRAL}" stroke-width="1">',
               f'<line x1="{self.left}" y1="{self.bottom}" x2="{self.right}" y2="{self.bottom}"/>',
               f'<line x1="{self.left}" y1="{self.top}" x2="{self.left}" y2="{self.bottom}"/>',
               "</g>"]
        xstep = self.xticks[1] - self.xticks[0] if len(self.xticks) > 1 else 1.0
        ystep = self.yticks[1] - self.yticks[0] if len(self.yticks) > 1 else 1.0
        out.append('<g class="ticks" font-family="sans-serif" font-size="12" fill="#333333">')
        for t in self.xticks:
            px = fmt(self.x(t))
            out.append(f'<line x1="{px}" y1="{self.bottom}" x2="{px}" y2="{self.bottom + 5}" stroke="{NEUTRAL}"/>')
            out.append(f'<text x="{px}" y="{self.bottom + 20}" text-anchor="middle">{tick_label(t, xstep)}</text>')
        for t in self.yticks:
            py = fmt(self.y(t))
            out.append(f'<line x1="{self.left - 5}" y1="{py}" x2="{self.left}" y2="{py}" stroke="{NEUTRAL}"/>')
            out.append(f'<text x="{self.left - 8}" y="{py}" text-anchor="end" dominant-baseline="middle">'
                       f"{tick_label(t, ystep)}</text>")
        out.append("</g>")
        cx = fmt((self.left + self.right) / 2)
        cy = fmt((self.top + self.bottom) / 2)
        out.append(f'<text x="{cx}" y="{HEIGHT - 15}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="14">{escape(x_label)}</text>')
        out.append(f'<text x="20" y="{cy}" text-anchor="middle" font-family="sans-serif" font-size="14" '
                   f'transform="rotate(-90 20 {cy})">{escape(y_label)}</text>')
        return out


def _document(title: str, body: list[str], legend: Sequence[tuple[str, str]] = ()) -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH // 2}" y="30" text-anchor="middle" font-family="sans-serif" font-size="18">'
        f"{escape(title)}</text>",
        *body,
    ]
    for i, (label, color) in enumerate(legend):
        x = WIDTH - MARGIN["right"] - 150
        y = MARGIN["top"] + 10 + 20 * i
        lines.append(f'<rect x="{x}" y="{y - 8}" width="14" height="10" fill="{color}"/>')
        lines.append(f'<text x="{x + 20}" y="{y + 1}" font-family="sans-serif" font-size="12">'
                     f"{escape(label)}</text>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _points(frame: Frame, xs, ys) -> str:
    return " ".join(f"{fmt(frame.x(a))},{fmt(frame.y(b))}" for a, b in zip(xs, ys))


def _range(*arrays) -> tuple[float, float]:
    cat = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    return float(cat.min()), float(cat.max())


def line_chart(series: Mapping[str, Sequence[float]], title: str,
               x_label: str = "point", y_label: str = "momentum") -> str:
    """One polyline per named series, x = 1..n."""
    arrays = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    n = max(len(v) for v in arrays.values())
    frame = Frame((1, max(n, 2)), _range(0.0, *arrays.values()))
    body = frame.axes(x_label, y_label)
    for name, ys in arrays.items():
        color = SERIES_COLORS.get(name, NEUTRAL)
        xs = np.arange(1, len(ys) + 1)
        body.append(f'<polyline class="series" data-series={quoteattr(name)} fill="none" '
                    f'stroke="{color}" stroke-width="2" points="{_points(frame, xs, ys)}"/>')
    return _document(title, body, [(k, SERIES_COLORS.get(k, NEUTRAL)) for k in arrays])


def stacked_area_chart(p1: Sequence[float], p2: Sequence[float], title: str,
                       x_label: str = "point", y_label: str = "momentum") -> str:
    """p1 band from 0 to p1, p2 band stacked on top of it."""
    a = np.asarray(p1, dtype=float)
    b = np.asarray(p2, dtype=float)
    if len(a) != len(b):
        raise ValueError("stacked series must have equal length")
    top = a + b
    xs = np.arange(1, len(a) + 1)
    frame = Frame((1, max(len(a), 2)), _range(0.0, top))
    body = frame.axes(x_label, y_label)
    for name, lower, upper in (("p1", np.zeros_like(a), a), ("p2", a, top)):
        outline = _points(frame, xs, upper) + " " + _points(frame, xs[::-1], lower[::-1])
        body.append(f'<polygon class="band" data-series="{name}" fill="{SERIES_COLORS[name]}" '
                    f'fill-opacity="0.7" stroke="none" points="{outline}"/>')
    return _document(title, body, [("p1", SERIES_COLORS["p1"]), ("p2", SERIES_COLORS["p2"])])


def cusum_chart(curves: Mapping[str, Sequence[float]], turning_points: Mapping[str, Sequence[int]],
                title: str, x_label: str = "point", y_label: str = "cumulative deviation") -> str:
    """CUSUM curves with a marker at each (1-based) turning point."""
    arrays = {k: np.asarray(v, dtype=float) for k, v in curves.items()}
    n = max(len(v) for v in arrays.values())
    frame = Frame((1, max(n, 2)), _range(0.0, *arrays.values()))
    body = frame.axes(x_label, y_label)
    zero = fmt(frame.y(0.0))
    body.append(f'<line class="zero" x1="{frame.left}" y1="{zero}" x2="{frame.right}" y2="{zero}" '
                f'stroke="#999999" stroke-dasharray="4 4"/>')
    for name, ys in arrays.items():
        color = SERIES_COLORS.get(name, NEUTRAL)
        xs = np.arange(1, len(ys) + 1)
        body.append(f'<polyline class="series" data-series={quoteattr(name)} fill="none" '
                    f'stroke="{color}" stroke-width="2" points="{_points(frame, xs, ys)}"/>')
        for t in turning_points.get(name, ()):
            body.append(f'<circle class="turning-point" data-player={quoteattr(name)} data-index="{int(t)}" '
                        f'cx="{fmt(frame.x(t))}" cy="{fmt(frame.y(ys[t - 1]))}" r="4" '
                        f'fill="none" stroke="{color}" stroke-width="2"/>')
    return _document(title, body, [(k, SERIES_COLORS.get(k, NEUTRAL)) for k in arrays])


def density_chart(grid: Sequence[float] | None, values: Sequence[float] | None,
                  edges: Sequence[float], counts: Sequence[int], title: str,
                  x_label: str = "metric") -> str:
    """Histogram (as density) with an optional KDE curve on top."""
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    widths = np.diff(edges)
    total = counts.sum()
    heights = np.where(widths > 0, counts / (total * np.where(widths > 0, widths, 1.0)), 0.0)
    xs = [edges] + ([np.asarray(grid, dtype=float)] if grid is not None else [])
    ys = [heights] + ([np.asarray(values, dtype=float)] if values is not None else [])
    x_lo, x_hi = _range(*xs)
    frame = Frame((x_lo, x_hi), _range(0.0, *ys))
    body = frame.axes(x_label, "density")
    body.append('<g class="histogram" fill="#cccccc" stroke="#ffffff">')
    for lo, hi, h in zip(edges[:-1], edges[1:], heights):
        x0, x1 = frame.x(lo), frame.x(hi)
        y = frame.y(h)
        body.append(f'<rect x="{fmt(x0)}" y="{fmt(y)}" width="{fmt(max(x1 - x0, 1.0))}" '
                    f'height="{fmt(frame.bottom - y)}"/>')
    body.append("</g>")
    legend = [("histogram", "#cccccc")]
    if grid is not None and values is not None:
        body.append(f'<polyline class="kde" fill="none" stroke="{SERIES_COLORS["p1"]}" stroke-width="2" '
                    f'points="{_points(frame, grid, values)}"/>')
        legend.append(("kernel density", SERIES_COLORS["p1"]))
    return _document(title, body, legend)
