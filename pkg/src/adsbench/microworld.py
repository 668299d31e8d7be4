"""Deterministic 2D driving microworld.

One ego vehicle (EV) driven by a scripted ADS, one vehicle in front (VIF) and
one pedestrian perturbed by the testing agent, plus weather. Vehicles follow a
kinematic bicycle model integrated with explicit Euler at a fixed ``dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from adsbench.actions import ACTION_TABLE, ActionId
from adsbench.geometry import Rect, obb_intersects, wrap_angle
from adsbench.routes import ConfigError, Pose2D, Projection, RouteSpec

DT = 0.1

# vehicle body and longitudinal model (shared by EV and VIF)
VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 2.0
WHEELBASE = 2.7
MAX_WHEEL_ANGLE = 0.5  # rad at |steer| == 1
THROTTLE_ACCEL = 3.0  # m/s^2 at full throttle
DRAG = 0.3  # 1/s
ROLLING = 0.2  # m/s^2
PED_RADIUS = 0.3

# ADS under test
TARGET_SPEED = 8.0
ADS_LOOKAHEAD = 6.0
PERCEPTION_RANGE = 40.0  # R0, clear weather
BRAKE_DECEL = 6.0  # a0, dry road
BRAKE_MARGIN = 2.0
SPEED_GAIN = 0.5
GLARE_ALTITUDE = 10.0

# VIF lane-following autopilot; the agent's steer command is added on top
VIF_LOOKAHEAD = 8.0
VIF_START_THROTTLE = 0.5

DEFAULT_WEATHER = (0.0, 0.0, 60.0)


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True, slots=True)
class VehicleState:
    pose: Pose2D
    speed: float = 0.0
    accel: float = 0.0
    throttle: float = 0.0
    steer: float = 0.0
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    halted: bool = False  # stopped by a collision for the rest of the episode

    def rect(self) -> Rect:
        p = self.pose
        return Rect(p.x, p.y, p.heading, self.length, self.width)


@dataclass(frozen=True, slots=True)
class PedestrianState:
    pose: Pose2D
    speed: float = 0.0
    radius: float = PED_RADIUS
    halted: bool = False

    def rect(self) -> Rect:
        p = self.pose
        return Rect(p.x, p.y, p.heading, 2.0 * self.radius, 2.0 * self.radius)


@dataclass(frozen=True, slots=True)
class Weather:
    fog: float = 0.0
    rain: float = 0.0
    sun_altitude: float = 60.0


class EVCommand(NamedTuple):
    throttle: float
    brake: float
    steer: float


@dataclass(frozen=True)
class WorldState:
    ev: VehicleState
    vif: VehicleState
    ped: PedestrianState
    weather: Weather
    route: RouteSpec
    tick: int = 0
    dt: float = DT
    # projection cache and arc-length hints; derived data, not part of the state
    _proj: dict = field(default_factory=dict, repr=False, compare=False)
    _hint: dict = field(default_factory=dict, repr=False, compare=False)

    def project(self, actor: str) -> Projection:
        """Centerline projection of ``"ev"``, ``"vif"`` or ``"ped"`` (cached)."""
        cached = self._proj.get(actor)
        if cached is None:
            pose = getattr(self, actor).pose
            cached = self.route.project(pose.x, pose.y, self._hint.get(actor))
            self._proj[actor] = cached
        return cached

    def replace(self, **changes) -> WorldState:
        fields = {
            "ev": self.ev,
            "vif": self.vif,
            "ped": self.ped,
            "weather": self.weather,
            "route": self.route,
            "tick": self.tick,
            "dt": self.dt,
        }
        fields.update(changes)
        new = WorldState(**fields)
        for actor in ("ev", "vif", "ped"):
            proj = self._proj.get(actor)
            if proj is not None:
                if actor not in changes:
                    new._proj[actor] = proj
                new._hint[actor] = proj.s
            elif actor in self._hint:
                new._hint[actor] = self._hint[actor]
        return new


def reset_scenario(route: RouteSpec, dt: float = DT, jitter: float = 0.0, rng=None) -> WorldState:
    """Place the actors at their start poses, at rest, in default weather.

    With ``jitter > 0`` each actor's start position is shifted by a uniform
    offset in [-jitter, jitter] per axis drawn from ``rng`` (six draws), a
    stand-in for the spawn noise of a physics-engine simulator.
    """
    if len(route.centerline) < 2:
        raise ConfigError("route needs at least 2 waypoints")
    if dt <= 0:
        raise ConfigError("dt must be positive")
    starts = [route.ev_start, route.vif_start, route.ped_start]
    if jitter > 0.0:
        offsets = rng.uniform(-jitter, jitter, size=6)
        starts = [
            Pose2D(p.x + float(offsets[2 * i]), p.y + float(offsets[2 * i + 1]), p.heading)
            for i, p in enumerate(starts)
        ]
    fog, rain, sun = DEFAULT_WEATHER
    return WorldState(
        ev=VehicleState(pose=starts[0]),
        vif=VehicleState(pose=starts[1], throttle=VIF_START_THROTTLE),
        ped=PedestrianState(pose=starts[2]),
        weather=Weather(fog, rain, sun),
        route=route,
        tick=0,
        dt=dt,
    )


def apply_action(world: WorldState, action: ActionId | int) -> WorldState:
    """Change one controlled variable by its table delta, clamped to range."""
    effect = ACTION_TABLE[ActionId(action)]
    if effect is None:
        return world
    owner, attr = effect.target.split(".")
    if owner == "weather":
        w = world.weather
        value = _clamp(getattr(w, attr) + effect.delta, effect.low, effect.high)
        values = {"fog": w.fog, "rain": w.rain, "sun_altitude": w.sun_altitude}
        values[attr] = value
        return world.replace(weather=Weather(**values))
    if owner == "vif":
        v = world.vif
        throttle, steer = v.throttle, v.steer
        if attr == "throttle":
            throttle = _clamp(throttle + effect.delta, effect.low, effect.high)
        else:
            steer = _clamp(steer + effect.delta, effect.low, effect.high)
        return world.replace(
            vif=VehicleState(v.pose, v.speed, v.accel, throttle, steer, v.length, v.width, v.halted)
        )
    p = world.ped
    if attr == "speed":
        ped = PedestrianState(p.pose, _clamp(p.speed + effect.delta, effect.low, effect.high), p.radius, p.halted)
    elif attr == "x":
        ped = PedestrianState(Pose2D(p.pose.x + effect.delta, p.pose.y, p.pose.heading), p.speed, p.radius, p.halted)
    else:
        ped = PedestrianState(Pose2D(p.pose.x, p.pose.y + effect.delta, p.pose.heading), p.speed, p.radius, p.halted)
    return world.replace(ped=ped)


# -- ADS under test -------------------------------------------------------


def perception_range(weather: Weather) -> float:
    glare = 0.6 if weather.sun_altitude < GLARE_ALTITUDE else 1.0
    return PERCEPTION_RANGE * (1.0 - 0.7 * weather.fog) * glare


def braking_decel(weather: Weather) -> float:
    return BRAKE_DECEL * (1.0 - 0.5 * weather.rain)


def _pursuit_steer(x: float, y: float, heading: float, tx: float, ty: float) -> float:
    """Pure-pursuit wheel angle toward (tx, ty), as a normalized steer command."""
    dx = tx - x
    dy = ty - y
    ld = math.hypot(dx, dy)
    if ld < 1e-9:
        return 0.0
    alpha = math.atan2(dy, dx) - heading
    delta = math.atan2(2.0 * WHEELBASE * math.sin(alpha), ld)
    return delta / MAX_WHEEL_ANGLE


def _perceived_gap(world: WorldState, s_ev: float, x: float, y: float, s_obj: float, lat_obj: float,
                   half_extent: float, rng: float) -> float | None:
    """Longitudinal free gap to an object the ADS can see, else None."""
    ev = world.ev
    ahead = s_obj - s_ev
    if ahead <= 0.0 or abs(lat_obj) > world.route.lane_half_width:
        return None
    if math.hypot(x - ev.pose.x, y - ev.pose.y) > rng:
        return None
    return ahead - 0.5 * ev.length - half_extent


def ads_control(world: WorldState) -> EVCommand:
    """The ADS under test: pure pursuit + speed hold + emergency braking.

    Objects whose centre lies laterally outside the lane (|offset| > lane
    half-width) are ignored even if part of their body intrudes: a
    deliberate blind spot.
    """
    ev = world.ev
    if ev.halted:
        return EVCommand(0.0, 1.0, 0.0)
    route = world.route
    proj = world.project("ev")
    tx, ty, _ = route.point_at(proj.s + ADS_LOOKAHEAD)
    steer = _clamp(_pursuit_steer(ev.pose.x, ev.pose.y, ev.pose.heading, tx, ty), -1.0, 1.0)

    v = ev.speed
    feed_forward = (DRAG * TARGET_SPEED + ROLLING) / THROTTLE_ACCEL
    throttle = _clamp(feed_forward + SPEED_GAIN * (TARGET_SPEED - v), 0.0, 1.0)

    rng = perception_range(world.weather)
    envelope = v * v / (2.0 * braking_decel(world.weather)) + BRAKE_MARGIN
    gaps = []
    vif = world.vif
    pv = world.project("vif")
    gaps.append(_perceived_gap(world, proj.s, vif.pose.x, vif.pose.y, pv.s, pv.lateral, 0.5 * vif.length, rng))
    ped = world.ped
    pp = world.project("ped")
    gaps.append(_perceived_gap(world, proj.s, ped.pose.x, ped.pose.y, pp.s, pp.lateral, ped.radius, rng))
    for obs, (s_o, lat_o) in zip(route.obstacles, route.obstacle_frames):
        gaps.append(_perceived_gap(world, proj.s, obs.x, obs.y, s_o, lat_o, 0.5 * obs.length, rng))
    tc = route.traffic_control
    if tc is not None and tc.is_red(world.tick):
        entry = route.zone_s - tc.radius
        gap = entry - (proj.s + 0.5 * ev.length)
        if gap >= 0.0 and gap <= rng:
            gaps.append(gap)
    if any(g is not None and g <= envelope for g in gaps):
        return EVCommand(0.0, 1.0, steer)
    return EVCommand(throttle, 0.0, steer)


def blocked_by_halted_vif(world: WorldState) -> bool:
    """EV at a standstill behind a halted VIF it perceives: a permanent deadlock."""
    ev, vif = world.ev, world.vif
    if not vif.halted or ev.halted or ev.speed != 0.0:
        return False
    pv = world.project("vif")
    gap = _perceived_gap(world, world.project("ev").s, vif.pose.x, vif.pose.y, pv.s, pv.lateral,
                         0.5 * vif.length, perception_range(world.weather))
    return gap is not None and gap <= BRAKE_MARGIN


# -- dynamics ---------------------------------------------------------------


def _bicycle(v: VehicleState, throttle: float, brake: float, steer: float, decel: float, dt: float):
    """One Euler step; returns (pose, speed)."""
    p = v.pose
    speed = v.speed
    delta = steer * MAX_WHEEL_ANGLE
    beta = math.atan(0.5 * math.tan(delta))
    x = p.x + speed * math.cos(p.heading + beta) * dt
    y = p.y + speed * math.sin(p.heading + beta) * dt
    heading = wrap_angle(p.heading + speed * math.cos(beta) * math.tan(delta) / WHEELBASE * dt)
    a = THROTTLE_ACCEL * throttle - decel * brake - DRAG * speed
    if speed > 0.0 or a > 0.0:
        a -= ROLLING
    new_speed = speed + a * dt
    if new_speed < 0.0:
        new_speed = 0.0
    return Pose2D(x, y, heading), new_speed


def vif_steer_command(world: WorldState) -> float:
    """Autopilot lane following plus the agent-controlled steer offset."""
    vif = world.vif
    proj = world.project("vif")
    tx, ty, _ = world.route.point_at(proj.s + VIF_LOOKAHEAD)
    auto = _pursuit_steer(vif.pose.x, vif.pose.y, vif.pose.heading, tx, ty)
    return _clamp(auto + vif.steer, -1.0, 1.0)


def _hits_obstacle(rect: Rect, route: RouteSpec) -> bool:
    return any(obb_intersects(rect, o) for o in route.obstacles)


def simulate_tick(world: WorldState, ev_cmd: EVCommand) -> WorldState:
    """Advance every actor by one ``dt``; contacts halt the moving actor."""
    dt = world.dt
    decel = braking_decel(world.weather)
    ev, vif, ped = world.ev, world.vif, world.ped

    if ev.halted:
        ev_pose, ev_speed = ev.pose, 0.0
    else:
        ev_pose, ev_speed = _bicycle(
            ev, _clamp(ev_cmd.throttle, 0.0, 1.0), _clamp(ev_cmd.brake, 0.0, 1.0),
            _clamp(ev_cmd.steer, -1.0, 1.0), decel, dt,
        )
    if vif.halted:
        vif_pose, vif_speed = vif.pose, 0.0
    else:
        vif_pose, vif_speed = _bicycle(vif, vif.throttle, 0.0, vif_steer_command(world), decel, dt)
    if ped.halted or ped.speed == 0.0:
        ped_pose = ped.pose
    else:
        h = ped.pose.heading
        ped_pose = Pose2D(ped.pose.x + ped.speed * math.cos(h) * dt, ped.pose.y + ped.speed * math.sin(h) * dt, h)

    ev_halted, vif_halted, ped_halted = ev.halted, vif.halted, ped.halted
    route = world.route
    ev_rect = Rect(ev_pose.x, ev_pose.y, ev_pose.heading, ev.length, ev.width)
    vif_rect = Rect(vif_pose.x, vif_pose.y, vif_pose.heading, vif.length, vif.width)
    ped_rect = Rect(ped_pose.x, ped_pose.y, ped_pose.heading, 2.0 * ped.radius, 2.0 * ped.radius)
    if not ev_halted and _hits_obstacle(ev_rect, route):
        ev_halted = True
    if not vif_halted and _hits_obstacle(vif_rect, route):
        vif_halted = True
    if not ped_halted and ped_pose is not ped.pose and _hits_obstacle(ped_rect, route):
        ped_halted = True
    if obb_intersects(ev_rect, vif_rect):
        ev_halted = vif_halted = True
    if obb_intersects(ev_rect, ped_rect):
        ev_halted = True
    if ev_halted:
        ev_speed = 0.0
    if vif_halted:
        vif_speed = 0.0

    new_ev = VehicleState(
        ev_pose, ev_speed, (ev_speed - ev.speed) / dt, _clamp(ev_cmd.throttle, 0.0, 1.0),
        _clamp(ev_cmd.steer, -1.0, 1.0), ev.length, ev.width, ev_halted,
    )
    new_vif = VehicleState(
        vif_pose, vif_speed, (vif_speed - vif.speed) / dt, vif.throttle, vif.steer, vif.length, vif.width, vif_halted
    )
    new_ped = PedestrianState(ped_pose, ped.speed, ped.radius, ped_halted)
    new = WorldState(new_ev, new_vif, new_ped, world.weather, route, world.tick + 1, dt)
    for actor in ("ev", "vif", "ped"):
        proj = world._proj.get(actor)
        if proj is not None:
            new._hint[actor] = proj.s
        elif actor in world._hint:
            new._hint[actor] = world._hint[actor]
    return new


def step(world: WorldState) -> WorldState:
    """ADS decision followed by one physics tick."""
    return simulate_tick(world, ads_control(world))
