"""Hand-written SVG figures: failure trajectories, coverage over time, Q-table growth."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

from adsbench.routes import RouteSpec

WIDTH = 640
HEIGHT = 480
PAD = 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


class _Frame:
    """Maps data coordinates into the padded canvas, y pointing up."""

    def __init__(self, xmin: float, xmax: float, ymin: float, ymax: float, equal: bool = False) -> None:
        if xmax <= xmin:
            xmax = xmin + 1.0
        if ymax <= ymin:
            ymax = ymin + 1.0
        sx = (WIDTH - 2 * PAD) / (xmax - xmin)
        sy = (HEIGHT - 2 * PAD) / (ymax - ymin)
        if equal:
            sx = sy = min(sx, sy)
        self.xmin, self.ymin, self.sx, self.sy = xmin, ymin, sx, sy

    def __call__(self, x: float, y: float) -> str:
        px = PAD + (x - self.xmin) * self.sx
        py = HEIGHT - PAD - (y - self.ymin) * self.sy
        return f"{_fmt(px)},{_fmt(py)}"


def _path(points: list[str], **attrs) -> str:
    extra = " ".join(f'{k.rstrip("_").replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<path d="M {" L ".join(points)}" fill="none" {extra}/>'


def _axes(frame: _Frame, xmin: float, xmax: float, ymin: float, ymax: float, xlabel: str, ylabel: str) -> list[str]:
    out = [
        _path([frame(xmin, ymin), frame(xmax, ymin)], stroke="black"),
        _path([frame(xmin, ymin), frame(xmin, ymax)], stroke="black"),
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for v, anchor in ((xmin, "start"), (xmax, "end")):
        x, y = frame(v, ymin).split(",")
        out.append(f'<text x="{x}" y="{float(y) + 16:.2f}" text-anchor="{anchor}" font-size="10">{v:g}</text>')
    for v in (ymin, ymax):
        x, y = frame(xmin, v).split(",")
        out.append(f'<text x="{float(x) - 4:.2f}" y="{y}" text-anchor="end" font-size="10">{v:g}</text>')
    return out


def render_trajectories(route: RouteSpec, trajectories: Sequence[Sequence[Sequence[float]]],
                        title: str = "VIF failure trajectories") -> str:
    """Bird's-eye view: lane edges, obstacles, EV start, one polyline per trajectory.

    Lane edges are drawn as paths so that the polylines in the document are
    exactly the trajectories.
    """
    xmin, ymin, xmax, ymax = route.bounds(5.0)
    frame = _Frame(xmin, xmax, ymin, ymax, equal=True)
    out = _header(title)
    half = route.lane_half_width
    for side in (1.0, -1.0):
        pts = []
        for p in route.centerline:
            pts.append(frame(p.x - side * half * math.sin(p.heading), p.y + side * half * math.cos(p.heading)))
        out.append(_path(pts, stroke="#555555", stroke_width="1.5", class_="lane-edge"))
    for obs in route.obstacles:
        corners = " ".join(frame(x, y) for x, y in obs.corners())
        out.append(f'<polygon class="obstacle" points="{corners}" fill="#f2c200" stroke="black"/>')
    sx, sy = frame(route.ev_start.x, route.ev_start.y).split(",")
    out.append(f'<circle class="ev-start" cx="{sx}" cy="{sy}" r="5" fill="black"/>')
    for i, traj in enumerate(trajectories):
        pts = " ".join(frame(float(x), float(y)) for x, y in traj)
        color = COLORS[i % len(COLORS)]
        out.append(f'<polyline class="trajectory" points="{pts}" fill="none" stroke="{color}" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_coverage(steps: Sequence[float], curves: Sequence[tuple[str, Sequence[float], Sequence[float]]],
                    ylabel: str = "coverage", title: str = "Coverage over time") -> str:
    """Mean line with a +/- sem band per campaign; ``curves`` = (label, mean, sem)."""
    t_max = max(steps) if len(steps) else 1.0
    top = max([m + s for _, mean, sem in curves for m, s in zip(mean, sem)] or [0.0])
    top = top if top > 0 else 1.0
    frame = _Frame(0.0, t_max, 0.0, top)
    out = _header(title)
    out += _axes(frame, 0.0, t_max, 0.0, top, "step", ylabel)
    for i, (label, mean, sem) in enumerate(curves):
        color = COLORS[i % len(COLORS)]
        upper = [frame(t, m + s) for t, m, s in zip(steps, mean, sem)]
        lower = [frame(t, m - s) for t, m, s in zip(steps, mean, sem)]
        band = " ".join(upper + lower[::-1])
        out.append(f'<polygon class="sem-band" points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(frame(t, m) for t, m in zip(steps, mean))
        out.append(f'<polyline class="mean" points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - PAD}" y="{PAD + 14 * i}" text-anchor="end" font-size="12" '
                   f'fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_growth(steps: Sequence[float], distinct: Sequence[float], title: str = "Q-table growth") -> str:
    t_max = max(steps) if len(steps) else 1.0
    top = max(list(distinct) + [1.0])
    frame = _Frame(0.0, t_max, 0.0, max(top, t_max))
    out = _header(title)
    out += _axes(frame, 0.0, t_max, 0.0, max(top, t_max), "step", "distinct states")
    out.append(_path([frame(0.0, 0.0), frame(t_max, t_max)], stroke="#999999", stroke_dasharray="4 4"))
    line = " ".join(frame(t, d) for t, d in zip(steps, distinct))
    out.append(f'<polyline class="growth" points="{line}" fill="none" stroke="{COLORS[0]}" stroke-width="2"/>')
    ratio = distinct[-1] / steps[-1] if len(steps) and steps[-1] else 0.0
    out.append(f'<text x="{PAD + 10}" y="{PAD}" font-size="12">distinct/steps = {ratio:.4f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
