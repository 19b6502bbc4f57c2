"""Minimal byte-stable SVG line plots (axes, log scales, polylines, legend).

No plotting dependency on purpose: sweep artifacts must be diffable, so all
coordinates are formatted with a fixed precision and the element order is
deterministic.
"""

from __future__ import annotations

import math

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _ticks_linear(lo: float, hi: float, target: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / target))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= target + 1:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(t)
        t += step
    return out


def _ticks_log(lo: float, hi: float):
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0**e for e in range(lo_e, hi_e + 1)]


class LinePlot:
    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = "",
                 xlog: bool = False, ylog: bool = False,
                 width: int = 640, height: int = 440):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.xlog = xlog
        self.ylog = ylog
        self.width = width
        self.height = height
        self.series = []

    def add_series(self, name: str, xs, ys):
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)]
        self.series.append((name, pts))

    # -- rendering ---------------------------------------------------------

    def _extent(self):
        xs = [p[0] for _, pts in self.series for p in pts]
        ys = [p[1] for _, pts in self.series for p in pts]
        if not xs:
            xs, ys = [0.0, 1.0], [0.0, 1.0]
        lo_x, hi_x = min(xs), max(xs)
        lo_y, hi_y = min(ys), max(ys)
        if self.xlog:
            lo_x = max(lo_x, 1e-300)
        if self.ylog:
            lo_y = max(lo_y, 1e-300)
        if lo_x == hi_x:
            hi_x = lo_x + 1.0
        if lo_y == hi_y:
            hi_y = lo_y * 1.1 if self.ylog else lo_y + 1.0
        return lo_x, hi_x, lo_y, hi_y

    def render(self) -> str:
        m_l, m_r, m_t, m_b = 70, 20, 34, 50
        iw = self.width - m_l - m_r
        ih = self.height - m_t - m_b
        lo_x, hi_x, lo_y, hi_y = self._extent()

        def tx(v):
            if self.xlog:
                f = (math.log10(v) - math.log10(lo_x)) / (
                    math.log10(hi_x) - math.log10(lo_x))
            else:
                f = (v - lo_x) / (hi_x - lo_x)
            return m_l + f * iw

        def ty(v):
            if self.ylog:
                f = (math.log10(v) - math.log10(lo_y)) / (
                    math.log10(hi_y) - math.log10(lo_y))
            else:
                f = (v - lo_y) / (hi_y - lo_y)
            return m_t + (1 - f) * ih

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" '
            f'fill="white"/>',
            f'<rect x="{m_l}" y="{m_t}" width="{iw}" height="{ih}" '
            f'fill="none" stroke="#333" stroke-width="1"/>',
        ]
        xt = _ticks_log(lo_x, hi_x) if self.xlog else _ticks_linear(lo_x, hi_x)
        for t in xt:
            if t < lo_x * (1 - 1e-12) or t > hi_x * (1 + 1e-12):
                continue
            px = tx(t)
            parts.append(
                f'<line x1="{_fmt(px)}" y1="{m_t + ih}" x2="{_fmt(px)}" '
                f'y2="{m_t + ih + 5}" stroke="#333"/>'
            )
            parts.append(
                f'<text x="{_fmt(px)}" y="{m_t + ih + 18}" font-size="11" '
                f'text-anchor="middle" font-family="monospace">{_fmt(t)}</text>'
            )
        yt = _ticks_log(lo_y, hi_y) if self.ylog else _ticks_linear(lo_y, hi_y)
        for t in yt:
            if t < lo_y * (1 - 1e-12) or t > hi_y * (1 + 1e-12):
                continue
            py = ty(t)
            parts.append(
                f'<line x1="{m_l - 5}" y1="{_fmt(py)}" x2="{m_l}" '
                f'y2="{_fmt(py)}" stroke="#333"/>'
            )
            parts.append(
                f'<text x="{m_l - 8}" y="{_fmt(py + 4)}" font-size="11" '
                f'text-anchor="end" font-family="monospace">{_fmt(t)}</text>'
            )
        for i, (name, pts) in enumerate(self.series):
            color = _COLORS[i % len(_COLORS)]
            coords = " ".join(f"{_fmt(tx(x))},{_fmt(ty(y))}" for x, y in pts)
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
            for x, y in pts:
                parts.append(
                    f'<circle cx="{_fmt(tx(x))}" cy="{_fmt(ty(y))}" r="2.5" '
                    f'fill="{color}"/>'
                )
            ly = m_t + 14 + 14 * i
            parts.append(
                f'<line x1="{m_l + iw - 130}" y1="{ly - 4}" '
                f'x2="{m_l + iw - 110}" y2="{ly - 4}" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
            parts.append(
                f'<text x="{m_l + iw - 105}" y="{ly}" font-size="11" '
                f'font-family="monospace">{name}</text>'
            )
        if self.title:
            parts.append(
                f'<text x="{self.width / 2:.0f}" y="20" font-size="13" '
                f'text-anchor="middle" font-family="monospace">{self.title}</text>'
            )
        if self.xlabel:
            parts.append(
                f'<text x="{m_l + iw / 2:.0f}" y="{self.height - 12}" '
                f'font-size="12" text-anchor="middle" '
                f'font-family="monospace">{self.xlabel}</text>'
            )
        if self.ylabel:
            parts.append(
                f'<text x="16" y="{m_t + ih / 2:.0f}" font-size="12" '
                f'text-anchor="middle" font-family="monospace" '
                f'transform="rotate(-90 16 {m_t + ih / 2:.0f})">{self.ylabel}</text>'
            )
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.render())
