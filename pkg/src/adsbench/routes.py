"""Route geometry: centerline polylines, obstacles, traffic control, JSON I/O."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from adsbench.geometry import Rect, wrap_angle

ROUTE_IDS = ("straight", "left_turn", "right_turn")


class ConfigError(ValueError):
    """Invalid configuration (route, campaign or CLI)."""


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        h = self.heading
        if not -math.pi < h <= math.pi:
            object.__setattr__(self, "heading", wrap_angle(h))


@dataclass(frozen=True)
class TrafficControl:
    """Circular zone where the ego vehicle must not move while the light is red."""

    x: float
    y: float
    radius: float
    red_start: int
    red_end: int

    def is_red(self, tick: int) -> bool:
        return self.red_start <= tick <= self.red_end


@dataclass(frozen=True)
class Projection:
    s: float  # arc length along the centerline
    lateral: float  # signed offset, positive to the left of travel
    heading: float  # centerline heading at s


@dataclass(frozen=True)
class RouteSpec:
    id: str
    centerline: tuple[Pose2D, ...]
    lane_half_width: float
    obstacles: tuple[Rect, ...]
    ev_start: Pose2D
    vif_start: Pose2D
    ped_start: Pose2D
    destination: Pose2D
    traffic_control: TrafficControl | None = None
    _cum: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _seg: np.ndarray = field(init=False, repr=False, compare=False)
    _segl: tuple[tuple[float, ...], ...] = field(init=False, repr=False, compare=False)
    obstacle_frames: tuple[tuple[float, float], ...] = field(init=False, repr=False, compare=False)
    zone_s: float | None = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.centerline) < 2:
            raise ConfigError(f"route {self.id!r}: centerline needs at least 2 waypoints")
        if self.lane_half_width <= 0:
            raise ConfigError(f"route {self.id!r}: lane_half_width must be positive")
        object.__setattr__(self, "centerline", tuple(self.centerline))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        cum = [0.0]
        for a, b in zip(self.centerline, self.centerline[1:]):
            step = math.hypot(b.x - a.x, b.y - a.y)
            if step <= 0.0:
                raise ConfigError(f"route {self.id!r}: waypoints must strictly increase in arc length")
            cum.append(cum[-1] + step)
        pts = np.array([(p.x, p.y) for p in self.centerline], dtype=np.float64)
        d = pts[1:] - pts[:-1]
        seg = np.column_stack([pts[:-1], d, np.einsum("ij,ij->i", d, d)])
        object.__setattr__(self, "_cum", tuple(cum))
        object.__setattr__(self, "_seg", seg)
        object.__setattr__(self, "_segl", tuple(tuple(float(v) for v in row) for row in seg))
        frames = []
        for o in self.obstacles:
            p = self.project(o.x, o.y)
            frames.append((p.s, p.lateral))
        object.__setattr__(self, "obstacle_frames", tuple(frames))
        tc = self.traffic_control
        object.__setattr__(self, "zone_s", None if tc is None else self.project(tc.x, tc.y).s)

    @property
    def route_length(self) -> float:
        return self._cum[-1]

    def bounds(self, margin: float = 15.0) -> tuple[float, float, float, float]:
        xs = [p.x for p in self.centerline]
        ys = [p.y for p in self.centerline]
        return min(xs) - margin, min(ys) - margin, max(xs) + margin, max(ys) + margin

    def project(self, x: float, y: float, hint: float | None = None) -> Projection:
        """Closest point on the centerline.

        ``hint`` is an approximate arc length; when given only nearby segments
        are searched. Beyond either end the first/last segment is extended.
        """
        n_seg = len(self._cum) - 1
        if hint is None:
            seg = self._seg
            px = x - seg[:, 0]
            py = y - seg[:, 1]
            t = np.clip((px * seg[:, 2] + py * seg[:, 3]) / seg[:, 4], 0.0, 1.0)
            ex = px - t * seg[:, 2]
            ey = py - t * seg[:, 3]
            i = int(np.argmin(ex * ex + ey * ey))
        else:
            k = bisect.bisect_right(self._cum, hint) - 1
            lo = max(0, k - 4)
            hi = min(n_seg, k + 5)
            best = math.inf
            i = lo
            segl = self._segl
            for j in range(lo, hi):
                sx, sy, dx, dy, dd = segl[j]
                qx = x - sx
                qy = y - sy
                tj = (qx * dx + qy * dy) / dd
                if tj < 0.0:
                    tj = 0.0
                elif tj > 1.0:
                    tj = 1.0
                ex = qx - tj * dx
                ey = qy - tj * dy
                dist = ex * ex + ey * ey
                if dist < best:
                    best = dist
                    i = j
        sx, sy, dx, dy, dd = self._segl[i]
        qx = x - sx
        qy = y - sy
        t = (qx * dx + qy * dy) / dd
        if i > 0 and t < 0.0:
            t = 0.0
        if i < n_seg - 1 and t > 1.0:
            t = 1.0
        seg_len = math.sqrt(dd)
        s = self._cum[i] + t * seg_len
        cross = (dx * qy - dy * qx) / seg_len
        if 0.0 <= t <= 1.0:
            ex = qx - t * dx
            ey = qy - t * dy
            lateral = math.copysign(math.hypot(ex, ey), cross)
        else:
            # extrapolated past an end of the polyline
            lateral = cross
        return Projection(s=s, lateral=lateral, heading=math.atan2(dy, dx))

    def point_at(self, s: float) -> tuple[float, float, float]:
        """Centerline point and heading at arc length ``s`` (extrapolated past the ends)."""
        cum = self._cum
        n_seg = len(cum) - 1
        i = min(max(bisect.bisect_right(cum, s) - 1, 0), n_seg - 1)
        sx, sy, dx, dy, dd = self._segl[i]
        seg_len = math.sqrt(dd)
        t = (s - cum[i]) / seg_len
        return sx + t * dx, sy + t * dy, math.atan2(dy, dx)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        def pose(p: Pose2D) -> dict[str, float]:
            return {"x": p.x, "y": p.y, "heading": p.heading}

        tc = self.traffic_control
        return {
            "id": self.id,
            "centerline": [pose(p) for p in self.centerline],
            "lane_half_width": self.lane_half_width,
            "obstacles": [
                {"x": o.x, "y": o.y, "heading": o.heading, "length": o.length, "width": o.width}
                for o in self.obstacles
            ],
            "ev_start": pose(self.ev_start),
            "vif_start": pose(self.vif_start),
            "ped_start": pose(self.ped_start),
            "destination": pose(self.destination),
            "traffic_control": None
            if tc is None
            else {
                "center": {"x": tc.x, "y": tc.y},
                "radius": tc.radius,
                "red_interval": [tc.red_start, tc.red_end],
            },
            "route_length": self.route_length,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RouteSpec:
        try:
            tc = data.get("traffic_control")
            route = cls(
                id=data["id"],
                centerline=tuple(Pose2D(**p) for p in data["centerline"]),
                lane_half_width=float(data["lane_half_width"]),
                obstacles=tuple(Rect(**o) for o in data.get("obstacles", [])),
                ev_start=Pose2D(**data["ev_start"]),
                vif_start=Pose2D(**data["vif_start"]),
                ped_start=Pose2D(**data["ped_start"]),
                destination=Pose2D(**data["destination"]),
                traffic_control=None
                if tc is None
                else TrafficControl(
                    x=tc["center"]["x"],
                    y=tc["center"]["y"],
                    radius=tc["radius"],
                    red_start=int(tc["red_interval"][0]),
                    red_end=int(tc["red_interval"][1]),
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed route: {exc}") from exc
        validate_route(route)
        return route


def validate_route(route: RouteSpec) -> None:
    last = route.centerline[-1]
    d = route.destination
    if math.hypot(last.x - d.x, last.y - d.y) > 1e-6:
        raise ConfigError(f"route {route.id!r}: destination must be the last waypoint")
    ev = route.project(route.ev_start.x, route.ev_start.y)
    vif = route.project(route.vif_start.x, route.vif_start.y)
    if not vif.s > ev.s:
        raise ConfigError(f"route {route.id!r}: vif_start must be ahead of ev_start")


def load_route(path: str | Path) -> RouteSpec:
    with open(path, encoding="utf-8") as fh:
        return RouteSpec.from_dict(json.load(fh))


def dump_route(route: RouteSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(route.to_dict(), fh, indent=2)
        fh.write("\n")


# -- built-in routes ------------------------------------------------------

LANE_HALF_WIDTH = 1.75
SAMPLE_SPACING = 1.0


def _polyline(pieces: list[tuple]) -> list[Pose2D]:
    """Sample ``("line", length)`` / ``("arc", radius, signed_angle)`` pieces."""
    x = y = h = 0.0
    pts = [Pose2D(x, y, h)]
    for piece in pieces:
        if piece[0] == "line":
            length = piece[1]
            n = max(1, round(length / SAMPLE_SPACING))
            step = length / n
            for _ in range(n):
                x += step * math.cos(h)
                y += step * math.sin(h)
                pts.append(Pose2D(x, y, h))
        else:
            radius, angle = piece[1], piece[2]
            arc = radius * abs(angle)
            n = max(2, round(arc / SAMPLE_SPACING))
            side = 1.0 if angle > 0 else -1.0
            cx = x - side * radius * math.sin(h)
            cy = y + side * radius * math.cos(h)
            h0 = h
            for k in range(1, n + 1):
                hk = h0 + angle * k / n
                x = cx + side * radius * math.sin(hk)
                y = cy - side * radius * math.cos(hk)
                pts.append(Pose2D(x, y, hk))
            h = h0 + angle
    return pts


def _offset_pose(line: list[Pose2D], s: float, lateral: float, dheading: float = 0.0) -> Pose2D:
    tmp = RouteSpec(
        id="tmp",
        centerline=tuple(line),
        lane_half_width=LANE_HALF_WIDTH,
        obstacles=(),
        ev_start=line[0],
        vif_start=line[1],
        ped_start=line[0],
        destination=line[-1],
    )
    x, y, h = tmp.point_at(s)
    return Pose2D(x - lateral * math.sin(h), y + lateral * math.cos(h), h + dheading)


def _roadside(line: list[Pose2D], s: float, lateral: float = -3.4, length: float = 3.0, width: float = 1.2) -> Rect:
    p = _offset_pose(line, s, lateral)
    return Rect(p.x, p.y, p.heading, length, width)


def _assemble(route_id: str, pieces: list[tuple], obstacles, ped_s: float, tc=None) -> RouteSpec:
    line = _polyline(pieces)
    obs = tuple(o if isinstance(o, Rect) else _roadside(line, *o) for o in obstacles)
    tc_spec = None
    if tc is not None:
        s_zone, radius, red = tc
        zone = _offset_pose(line, s_zone, 0.0)
        tc_spec = TrafficControl(zone.x, zone.y, radius, red[0], red[1])
    route = RouteSpec(
        id=route_id,
        centerline=tuple(line),
        lane_half_width=LANE_HALF_WIDTH,
        obstacles=obs,
        ev_start=line[0],
        vif_start=_offset_pose(line, 15.0, 0.0),
        ped_start=_offset_pose(line, ped_s, -6.0, math.pi / 2),
        destination=line[-1],
        traffic_control=tc_spec,
    )
    validate_route(route)
    return route


def builtin_route(route_id: str) -> RouteSpec:
    """One of the three built-in scenarios (each about 150 m long)."""
    if route_id == "straight":
        return _assemble("straight", [("line", 150.0)], [(45.0,), (75.0,), (105.0,), (135.0,)], ped_s=60.0)
    if route_id == "left_turn":
        # the first obstacle sits where the lane starts curving, dead ahead of the start
        first = Rect(38.0, -0.5, 0.0, 3.0, 1.2)
        pieces = [("line", 25.0), ("arc", 20.0, math.pi / 2), ("line", 150.0 - 25.0 - 10.0 * math.pi)]
        return _assemble("left_turn", pieces, [first, (75.0,), (110.0,)], ped_s=85.0)
    if route_id == "right_turn":
        pieces = [("line", 70.0), ("arc", 20.0, -math.pi / 2), ("line", 150.0 - 70.0 - 10.0 * math.pi)]
        return _assemble(
            "right_turn",
            pieces,
            [(30.0,), (48.0,), (120.0,)],
            ped_s=105.0,
            tc=(62.0, 4.0, (0, 160)),
        )
    raise ConfigError(f"unknown route {route_id!r}; expected one of {', '.join(ROUTE_IDS)}")
