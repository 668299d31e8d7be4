"""Planar geometry: oriented rectangles, separating-axis overlap, centre gaps."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class Rect:
    """Oriented rectangle; ``length`` runs along ``heading``."""

    x: float
    y: float
    heading: float
    length: float
    width: float

    def corners(self) -> list[tuple[float, float]]:
        return rect_corners(self.x, self.y, self.heading, self.length, self.width)

    @property
    def inscribed_radius(self) -> float:
        return 0.5 * min(self.length, self.width)


def rect_corners(x: float, y: float, heading: float, length: float, width: float) -> list[tuple[float, float]]:
    c = math.cos(heading)
    s = math.sin(heading)
    hl = 0.5 * length
    hw = 0.5 * width
    ax, ay = c * hl, s * hl
    bx, by = -s * hw, c * hw
    return [
        (x + ax + bx, y + ay + by),
        (x - ax + bx, y - ay + by),
        (x - ax - bx, y - ay - by),
        (x + ax - bx, y + ay - by),
    ]


def _separated_on(axis_x: float, axis_y: float, ca, cb) -> bool:
    amin = amax = ca[0][0] * axis_x + ca[0][1] * axis_y
    for px, py in ca[1:]:
        p = px * axis_x + py * axis_y
        if p < amin:
            amin = p
        elif p > amax:
            amax = p
    bmin = bmax = cb[0][0] * axis_x + cb[0][1] * axis_y
    for px, py in cb[1:]:
        p = px * axis_x + py * axis_y
        if p < bmin:
            bmin = p
        elif p > bmax:
            bmax = p
    # strict: a zero gap is contact, not separation
    return amax < bmin or bmax < amin


def obb_intersects(a: Rect, b: Rect) -> bool:
    """Separating-axis test over the four face normals; touching counts as overlap."""
    # broad phase on circumscribed circles
    ra = 0.5 * math.hypot(a.length, a.width)
    rb = 0.5 * math.hypot(b.length, b.width)
    dx = a.x - b.x
    dy = a.y - b.y
    if dx * dx + dy * dy > (ra + rb) * (ra + rb):
        return False
    ca = a.corners()
    cb = b.corners()
    for heading in (a.heading, b.heading):
        c = math.cos(heading)
        s = math.sin(heading)
        if _separated_on(c, s, ca, cb) or _separated_on(-s, c, ca, cb):
            return False
    return True


def center_distance(a: Rect, b: Rect) -> float:
    """Centre-to-centre distance minus both inscribed-circle radii.

    Can be positive while the rectangles overlap (corner contact).
    """
    return math.hypot(a.x - b.x, a.y - b.y) - a.inscribed_radius - b.inscribed_radius
