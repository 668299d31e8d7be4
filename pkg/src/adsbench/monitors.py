"""Requirement metrics, violation detection under three modes, rewards."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import NamedTuple

from adsbench.geometry import Rect, center_distance, obb_intersects
from adsbench.microworld import WorldState

DCL_THRESHOLD = 1.15
VIOLATION_REWARD = 1.0e6
DISTANCE_FLOOR = 0.01
TR_SPEED = 0.5


class Requirement(IntEnum):
    R1_DCL = 0
    R2_DV = 1
    R3_DP = 2
    R4_DS = 3
    R5_DT = 4
    R6_TR = 5


REQUIREMENTS = tuple(Requirement)
COLLISION_REQUIREMENTS = (Requirement.R2_DV, Requirement.R3_DP, Requirement.R4_DS)


class DetectionMode(str, Enum):
    SENSOR = "sensor"  # OBB contact and lane-invasion sensors
    THRESHOLD = "threshold"  # distances only
    FUSED = "fused"  # distances, forced to threshold whenever a sensor fires


class DistanceVector(NamedTuple):
    dcl: float
    dv: float
    dp: float
    ds: float
    dt_norm: float
    tr_violated: bool


class SensorReadings(NamedTuple):
    lane: bool
    vif: bool
    ped: bool
    obstacle: bool


@dataclass(frozen=True)
class ViolationEvent:
    requirement: Requirement
    tick: int  # tick within the episode
    episode: int
    step: int = 0  # 0-based tick index within the whole repetition

    def to_json(self) -> str:
        return json.dumps(
            {"episode": self.episode, "tick": self.tick, "requirement": self.requirement.name, "step": self.step},
            sort_keys=True,
        )


def compute_distances(world: WorldState) -> DistanceVector:
    route = world.route
    proj = world.project("ev")
    ev_rect = world.ev.rect()
    dv = center_distance(ev_rect, world.vif.rect())
    dp = center_distance(ev_rect, world.ped.rect())
    ds = min((center_distance(ev_rect, o) for o in route.obstacles), default=math.inf)
    remaining = route.route_length - proj.s
    dt_norm = min(max(remaining / route.route_length, 0.0), 1.0)
    tr = False
    tc = route.traffic_control
    if tc is not None and world.ev.speed > TR_SPEED and tc.is_red(world.tick):
        ev = world.ev.pose
        tr = math.hypot(ev.x - tc.x, ev.y - tc.y) <= tc.radius
    return DistanceVector(abs(proj.lateral), dv, dp, ds, dt_norm, tr)


def _lane_invaded(world: WorldState) -> bool:
    ev = world.ev
    proj = world.project("ev")
    half = world.route.lane_half_width
    dpsi = ev.pose.heading - proj.heading
    # cheap bound on the body's lateral extent; 0.3 m covers centerline curvature
    reach = 0.5 * ev.length * abs(math.sin(dpsi)) + 0.5 * ev.width * abs(math.cos(dpsi)) + 0.3
    if abs(proj.lateral) + reach <= half:
        return False
    route = world.route
    return any(abs(route.project(x, y, proj.s).lateral) > half for x, y in ev.rect().corners())


def read_sensors(world: WorldState) -> SensorReadings:
    ev_rect: Rect = world.ev.rect()
    return SensorReadings(
        lane=_lane_invaded(world),
        vif=obb_intersects(ev_rect, world.vif.rect()),
        ped=obb_intersects(ev_rect, world.ped.rect()),
        obstacle=any(obb_intersects(ev_rect, o) for o in world.route.obstacles),
    )


def fuse_distances(d: DistanceVector, sensors: SensorReadings) -> DistanceVector:
    """Force each distance to its violation threshold when its sensor fired."""
    return DistanceVector(
        max(d.dcl, DCL_THRESHOLD) if sensors.lane else d.dcl,
        min(d.dv, 0.0) if sensors.vif else d.dv,
        min(d.dp, 0.0) if sensors.ped else d.dp,
        min(d.ds, 0.0) if sensors.obstacle else d.ds,
        d.dt_norm,
        d.tr_violated,
    )


def _threshold_violations(d: DistanceVector) -> set[Requirement]:
    out = set()
    if d.dcl > DCL_THRESHOLD:
        out.add(Requirement.R1_DCL)
    if d.dv <= 0.0:
        out.add(Requirement.R2_DV)
    if d.dp <= 0.0:
        out.add(Requirement.R3_DP)
    if d.ds <= 0.0:
        out.add(Requirement.R4_DS)
    return out


def detect_violations(
    world: WorldState,
    d: DistanceVector,
    mode: DetectionMode | str,
    episode_end: bool,
    sensors: SensorReadings | None = None,
) -> set[Requirement]:
    """Requirements violated in this state under ``mode``.

    ``sensors`` may be passed to avoid re-reading them from ``world``.
    """
    mode = DetectionMode(mode)
    if mode is DetectionMode.THRESHOLD:
        out = _threshold_violations(d)
    else:
        if sensors is None:
            sensors = read_sensors(world)
        if mode is DetectionMode.SENSOR:
            out = set()
            if sensors.lane:
                out.add(Requirement.R1_DCL)
            if sensors.vif:
                out.add(Requirement.R2_DV)
            if sensors.ped:
                out.add(Requirement.R3_DP)
            if sensors.obstacle:
                out.add(Requirement.R4_DS)
        else:
            out = _threshold_violations(fuse_distances(d, sensors))
            if sensors.lane:
                out.add(Requirement.R1_DCL)
    if episode_end and d.dt_norm > 0.0:
        out.add(Requirement.R5_DT)
    if d.tr_violated:
        out.add(Requirement.R6_TR)
    return out


def reward(req: Requirement, d: DistanceVector, violated: bool) -> float:
    """Per-requirement reward: inverse distance to violation, 1e6 on violation."""
    if violated:
        return VIOLATION_REWARD
    if req is Requirement.R2_DV:
        return 1.0 / max(d.dv, DISTANCE_FLOOR)
    if req is Requirement.R3_DP:
        return 1.0 / max(d.dp, DISTANCE_FLOOR)
    if req is Requirement.R4_DS:
        return 1.0 / max(d.ds, DISTANCE_FLOOR)
    if req is Requirement.R1_DCL:
        dcl_norm = min(d.dcl / DCL_THRESHOLD, 1.0)
        return 1.0 / max(1.0 - dcl_norm, DISTANCE_FLOOR)
    if req is Requirement.R5_DT:
        # progress made; capped at 100 like the others when not violated
        return 1.0 / max(1.0 - d.dt_norm, DISTANCE_FLOOR)
    return 0.0


def reward_vector(d: DistanceVector, violated: set[Requirement] | frozenset) -> tuple[float, ...]:
    return tuple(reward(r, d, r in violated) for r in REQUIREMENTS)
