"""Deterministic SVG rendering of point sets, matchings, and tail plots.

Plain string assembly, no plotting dependency.  Output is byte-identical for
identical inputs, which makes figures diffable in review.
"""

from __future__ import annotations

import numpy as np

from .geometry import RED, ColoredPointSet
from .stable import Matching

_RED = "#c0392b"
_BLUE = "#2471a3"
_EDGE = "#555555"


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


class _Canvas:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
            f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
            f'<rect width="{_fmt(width)}" height="{_fmt(height)}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, color=_EDGE, width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{_fmt(width)}"{extra}/>')

    def circle(self, x, y, r, color):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{color}"/>')

    def text(self, x, y, s, size=11, color="#000000"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="monospace" fill="{color}">{s}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def render_matching(points: ColoredPointSet, matching: Matching | None = None,
                    size: float = 640.0, point_radius: float = 2.0) -> str:
    """Matched pairs as segments over the colored points, first two axes.

    On a torus, a pair whose short path wraps is drawn as two half-segments
    leaving opposite edges of the square.
    """
    dom = points.domain
    if dom.d < 1:
        raise ValueError("nothing to draw")
    scale = size / dom.L
    cv = _Canvas(size, size)

    def to_px(c):
        x = c[..., 0] * scale
        y = (size - c[..., 1] * scale) if dom.d >= 2 else np.full_like(x, size / 2.0)
        return x, y

    if matching is not None:
        coords = points.coords
        for a, b in matching.pairs:
            pa = coords[a, :2] if dom.d >= 2 else np.array([coords[a, 0], 0.0])
            pb = coords[b, :2] if dom.d >= 2 else np.array([coords[b, 0], 0.0])
            segs = _segments(pa, pb, dom)
            for (qa, qb) in segs:
                xa, ya = to_px(qa)
                xb, yb = to_px(qb)
                cv.line(float(xa), float(ya), float(xb), float(yb),
                        width=0.8, dash="3,2" if len(segs) > 1 else None)
    xs, ys = to_px(points.coords[:, :2] if dom.d >= 2
                   else np.column_stack([points.coords[:, 0],
                                         np.zeros(len(points))]))
    for i in range(len(points)):
        color = _RED if points.colors[i] == RED else _BLUE
        cv.circle(float(xs[i]), float(ys[i]), point_radius, color)
    return cv.render()


def _segments(pa, pb, dom):
    """One segment, or two pieces when the geodesic wraps the torus."""
    if dom.boundary != "torus":
        return [(pa, pb)]
    delta = pb - pa
    wrap = np.abs(delta) > dom.L / 2.0
    if not wrap.any():
        return [(pa, pb)]
    shift = np.where(wrap, -np.sign(delta) * dom.L, 0.0)
    # pb seen from pa's side, and pa seen from pb's side
    return [(pa, pb + shift), (pb, pa - shift)]


def render_survival(grid, survival, fit=None, size: float = 480.0,
                    title: str = "") -> str:
    """Log-log survival plot with the fitted power law overlaid."""
    grid = np.asarray(grid, dtype=float)
    survival = np.asarray(survival, dtype=float)
    keep = (grid > 0) & (survival > 0)
    if keep.sum() < 2:
        raise ValueError("need at least 2 positive points to plot")
    lx = np.log10(grid[keep])
    ly = np.log10(survival[keep])
    margin = 48.0
    span = size - 2 * margin

    def px(v, lo, hi):
        return margin + (v - lo) / max(hi - lo, 1e-12) * span

    x0, x1 = lx.min(), lx.max()
    y0, y1 = ly.min(), ly.max()
    cv = _Canvas(size, size)
    cv.line(margin, size - margin, size - margin, size - margin, width=1.2)
    cv.line(margin, margin, margin, size - margin, width=1.2)
    if fit is not None:
        ln10 = np.log(10.0)
        fy0 = (fit.intercept - fit.exponent * x0 * ln10) / ln10
        fy1 = (fit.intercept - fit.exponent * x1 * ln10) / ln10
        cv.line(px(x0, x0, x1), size - px(fy0, y0, y1),
                px(x1, x0, x1), size - px(fy1, y0, y1),
                color="#888888", width=1.0, dash="4,3")
        cv.text(margin + 6, margin + 14,
                f"slope = -{fit.exponent:.3f} (se {fit.stderr:.3f})")
    for i in range(len(lx)):
        cv.circle(px(lx[i], x0, x1), size - px(ly[i], y0, y1), 2.0, "#1b4f72")
    if title:
        cv.text(margin, margin - 10, title)
    cv.text(size / 2 - 30, size - margin + 28, "log10 r")
    cv.text(6, size / 2, "log10 P(X&gt;r)")
    return cv.render()
