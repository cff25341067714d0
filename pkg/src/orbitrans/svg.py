"""Minimal SVG writer for strata, curves and trajectories."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from . import orbifold as ob
from .orbifold import Orbifold

SIZE = 480
PAD = 30
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(x: float) -> str:
    return f"{x:.3f}"


class Canvas:
    """Maps a data rectangle onto a square SVG viewport (y up)."""

    def __init__(self, xlim, ylim, title: str = ""):
        self.xlim, self.ylim = xlim, ylim
        self.items: list[str] = []
        self.title = title

    def xy(self, x, y):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        u = PAD + (x - x0) / (x1 - x0) * (SIZE - 2 * PAD)
        v = SIZE - PAD - (y - y0) / (y1 - y0) * (SIZE - 2 * PAD)
        return u, v

    def line(self, p, q, color="#444", width=1.0, dash=None):
        (u1, v1), (u2, v2) = self.xy(*p), self.xy(*q)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<line x1="{_f(u1)}" y1="{_f(v1)}" x2="{_f(u2)}" y2="{_f(v2)}" stroke="{color}" stroke-width="{width}"{extra}/>'
        )

    def polyline(self, pts, color="#000", width=1.2, closed=False):
        if len(pts) < 2:
            return
        coords = " ".join(f"{_f(u)},{_f(v)}" for u, v in (self.xy(x, y) for x, y in pts))
        tag = "polygon" if closed else "polyline"
        self.items.append(f'<{tag} points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def dot(self, p, color="#000", r=3.0):
        u, v = self.xy(*p)
        self.items.append(f'<circle cx="{_f(u)}" cy="{_f(v)}" r="{r}" fill="{color}"/>')

    def text(self, p, s, color="#000", size=11):
        u, v = self.xy(*p)
        self.items.append(f'<text x="{_f(u + 4)}" y="{_f(v - 4)}" font-size="{size}" fill="{color}">{escape(s)}</text>')

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">\n'
            f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>\n'
        )
        title = f'<text x="{PAD}" y="{PAD - 10}" font-size="13">{escape(self.title)}</text>\n' if self.title else ""
        return head + title + "\n".join(self.items) + "\n</svg>\n"


def _split_wrapped(pts):
    """Break an (s, phi) path where phi jumps across the seam."""
    runs, cur = [], [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        if abs(b[1] - a[1]) > math.pi:
            runs.append(cur)
            cur = []
        cur.append(b)
    runs.append(cur)
    return runs


def _spindle_canvas(orb: Orbifold, title: str) -> Canvas:
    c = Canvas((0.0, 2.0 * math.pi), (0.0, 1.0), title)
    c.polyline([(0.0, 0.0), (2 * math.pi, 0.0), (2 * math.pi, 1.0), (0.0, 1.0)], color="#999", width=0.8, closed=True)
    c.line((0.0, 0.0), (2 * math.pi, 0.0), color="#d62728", width=2.5)
    c.line((0.0, 1.0), (2 * math.pi, 1.0), color="#d62728", width=2.5)
    c.text((0.0, 0.0), f"N (Z_{orb.p})" if orb.p else "N")
    c.text((0.0, 1.0), f"S (Z_{orb.q})" if orb.q else "S")
    return c


def _flip(pts):
    # phi on the horizontal axis, s downward from N
    return [(float(p[1]), float(p[0])) for p in pts]


def _draw_curve(c: Canvas, samples, color):
    pts = np.array(samples, dtype=float)
    pts[:, 1] = np.mod(pts[:, 1], 2.0 * math.pi)
    for run in _split_wrapped([tuple(p) for p in pts]):
        c.polyline(_flip(run), color=color, width=1.5)


def _quotient_canvas(orb: Orbifold, title: str, extent: float) -> Canvas:
    c = Canvas((-extent, extent), (-extent, extent), title)
    chart = orb.charts[0]
    if chart.dimension < 2:
        c.line((-extent, 0.0), (extent, 0.0), color="#bbb")
    for comp in ob.stratify(orb):
        if comp.chart_id != 0:
            continue
        rep = np.asarray(comp.representative, dtype=float)
        xy = (rep[0], rep[1] if rep.shape[0] > 1 else 0.0)
        if comp.sdim == 0:
            c.dot(xy, color="#d62728", r=4.0)
            c.text(xy, f"{comp.label}: |H|={comp.isotropy_order}", color="#d62728")
        elif comp.sdim == 1:
            u = rep / np.linalg.norm(rep)
            end = (extent * 1.5 * u[0], extent * 1.5 * (u[1] if u.shape[0] > 1 else 0.0))
            c.line((0.0, 0.0), end, color="#1f77b4", width=2.0)
            c.text((0.6 * end[0], 0.6 * end[1]), f"{comp.label}: |H|={comp.isotropy_order}", color="#1f77b4")
    return c


def plot_scene(orb: Orbifold, curves=(), trajectories=(), title: str = "", extent: float | None = None) -> str:
    """``curves``: (label, samples) pairs in (s, phi); ``trajectories``: (label, points)."""
    if orb.is_spindle_like:
        c = _spindle_canvas(orb, title)
        for k, (label, samples) in enumerate(curves):
            color = PALETTE[k % len(PALETTE)]
            _draw_curve(c, samples, color)
            c.text((float(np.mod(samples[0][1], 2 * math.pi)), float(samples[0][0])), label, color=color)
        for k, (label, pts) in enumerate(trajectories):
            color = PALETTE[(k + len(curves)) % len(PALETTE)]
            sp = [orb.underlying(p) for p in pts]
            for run in _split_wrapped(sp):
                c.polyline(_flip(run), color=color, width=1.0)
            c.dot(_flip([sp[0]])[0], color=color, r=2.5)
            c.dot(_flip([sp[-1]])[0], color=color, r=3.5)
            c.text(_flip([sp[-1]])[0], label, color=color)
        return c.render()
    if extent is None:
        extent = 2.0
        for _, pts in trajectories:
            for p in pts:
                extent = max(extent, 1.1 * float(np.abs(p.lift[:2]).max()))
    c = _quotient_canvas(orb, title, extent)
    for k, (label, pts) in enumerate(trajectories):
        color = PALETTE[(k + 2) % len(PALETTE)]
        xy = [(float(p.lift[0]), float(p.lift[1]) if p.lift.shape[0] > 1 else 0.0) for p in pts]
        c.polyline(xy, color=color)
        c.dot(xy[0], color=color, r=2.5)
        c.dot(xy[-1], color=color, r=3.5)
        c.text(xy[-1], label, color=color)
    return c.render()
