from __future__ import annotations

import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adsbench.actions import ACTION_TABLE, N_ACTIONS, VIF_ACTIONS, ActionId
from adsbench.microworld import (
    EVCommand,
    VehicleState,
    Weather,
    ads_control,
    apply_action,
    blocked_by_halted_vif,
    perception_range,
    reset_scenario,
    simulate_tick,
    step,
)
from adsbench.monitors import DetectionMode, compute_distances, detect_violations
from adsbench.routes import Pose2D, builtin_route
from adsbench.geometry import center_distance, obb_intersects


def _place(world, actor, x, y, heading=0.0, **kw):
    old = getattr(world, actor)
    if actor == "ped":
        return world.replace(ped=dataclasses.replace(old, pose=Pose2D(x, y, heading), **kw))
    fields = dict(pose=Pose2D(x, y, heading), speed=old.speed, throttle=old.throttle, steer=old.steer)
    fields.update(kw)
    return world.replace(**{actor: VehicleState(**fields)})


class TestActionTable:
    def test_seventeen_actions(self):
        assert N_ACTIONS == 17 and len(ACTION_TABLE) == 17

    def test_four_vif_actions(self):
        assert len(VIF_ACTIONS) == 4

    def test_single_noop(self):
        assert [a for a, e in ACTION_TABLE.items() if e is None] == [ActionId.NO_OP]


class TestReset:
    def test_ev_at_start(self, straight):
        w = reset_scenario(straight)
        assert w.ev.pose == straight.ev_start
        assert w.tick == 0

    def test_dt_metric_full_at_start(self, left_turn):
        assert compute_distances(reset_scenario(left_turn)).dt_norm == 1.0

    def test_repeatable(self, right_turn):
        assert reset_scenario(right_turn) == reset_scenario(right_turn)

    def test_defaults(self, straight):
        w = reset_scenario(straight)
        assert (w.ev.speed, w.vif.speed, w.ped.speed) == (0.0, 0.0, 0.0)
        assert w.weather == Weather(0.0, 0.0, 60.0)

    def test_jitter_is_seeded(self, straight):
        import numpy as np

        a = reset_scenario(straight, jitter=0.05, rng=np.random.default_rng(3))
        b = reset_scenario(straight, jitter=0.05, rng=np.random.default_rng(3))
        assert a == b
        assert abs(a.ev.pose.x - straight.ev_start.x) <= 0.05
        assert a.ev.pose != straight.ev_start


class TestApplyAction:
    def test_throttle_up(self, straight):
        w = reset_scenario(straight)
        assert w.vif.throttle == 0.5
        assert apply_action(w, ActionId.VIF_THROTTLE_UP).vif.throttle == pytest.approx(0.6)

    def test_throttle_clamped(self, straight):
        w = reset_scenario(straight)
        w = _place(w, "vif", w.vif.pose.x, w.vif.pose.y, throttle=1.0)
        assert apply_action(w, ActionId.VIF_THROTTLE_UP).vif.throttle == 1.0

    def test_noop_identity(self, straight):
        w = reset_scenario(straight)
        assert apply_action(w, ActionId.NO_OP) == w

    @pytest.mark.parametrize("action", list(ActionId))
    def test_one_variable_changes(self, straight, action):
        w = reset_scenario(straight)
        w = w.replace(weather=Weather(0.5, 0.5, 0.0))
        w = w.replace(ped=dataclasses.replace(w.ped, speed=1.0))
        after = apply_action(w, action)
        diffs = 0
        diffs += after.ev != w.ev
        diffs += after.vif.throttle != w.vif.throttle
        diffs += after.vif.steer != w.vif.steer
        diffs += after.ped != w.ped
        diffs += (after.weather.fog != w.weather.fog) + (after.weather.rain != w.weather.rain)
        diffs += after.weather.sun_altitude != w.weather.sun_altitude
        assert diffs == (0 if action is ActionId.NO_OP else 1)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 16), min_size=1, max_size=120))
    def test_ranges_hold(self, actions):
        w = reset_scenario(builtin_route("straight"))
        for a in actions:
            w = step(apply_action(w, a))
            assert 0.0 <= w.vif.throttle <= 1.0
            assert -1.0 <= w.vif.steer <= 1.0
            assert 0.0 <= w.ped.speed <= 3.0
            assert 0.0 <= w.weather.fog <= 1.0 and 0.0 <= w.weather.rain <= 1.0
            assert -90.0 <= w.weather.sun_altitude <= 90.0
            assert w.ev.speed >= 0.0 and w.vif.speed >= 0.0
            assert 0.0 <= w.ev.throttle <= 1.0 and -1.0 <= w.ev.steer <= 1.0
            for actor in (w.ev, w.vif, w.ped):
                assert -math.pi < actor.pose.heading <= math.pi


class TestAdsControl:
    def test_clear_road_accelerates(self, straight):
        cmd = ads_control(reset_scenario(straight))
        assert cmd.throttle > 0 and cmd.brake == 0

    def test_vif_close_ahead_brakes(self, straight):
        w = _place(reset_scenario(straight), "vif", 5.0, 0.0)
        assert ads_control(w).brake == 1.0

    def test_fog_hides_vif(self, straight):
        # free gap 13.5 m is inside the 14 m stopping envelope at 12 m/s
        w = _place(reset_scenario(straight), "vif", 18.0, 0.0, speed=0.0)
        w = w.replace(ev=VehicleState(Pose2D(0.0, 0.0), speed=12.0))
        assert ads_control(w).brake == 1.0
        foggy = w.replace(weather=Weather(1.0, 0.0, 60.0))
        assert perception_range(foggy.weather) == pytest.approx(12.0)
        assert ads_control(foggy).brake == 0.0

    def test_glare_shrinks_range(self):
        assert perception_range(Weather(0.0, 0.0, 5.0)) == pytest.approx(24.0)
        assert perception_range(Weather(0.0, 0.0, 10.0)) == pytest.approx(40.0)

    def test_blind_spot(self, straight):
        # VIF centre just outside the lane, body reaching 0.85 m into it
        w = _place(reset_scenario(straight), "vif", 5.0, -1.9)
        assert ads_control(w).brake == 0.0

    def test_pure_function(self, left_turn):
        w = step(step(reset_scenario(left_turn)))
        assert ads_control(w) == ads_control(w)


class TestSimulateTick:
    def test_rest_state(self, straight):
        w = _place(reset_scenario(straight), "vif", 15.0, 0.0, throttle=0.0)
        after = simulate_tick(w, EVCommand(0.0, 0.0, 0.0))
        assert after.ev.pose == w.ev.pose
        assert after.tick == 1

    def test_euler_step(self, straight):
        w = reset_scenario(straight).replace(ev=VehicleState(Pose2D(0.0, 0.0, 0.0), speed=10.0))
        after = simulate_tick(w, EVCommand(0.0, 0.0, 0.0))
        assert after.ev.pose.x == pytest.approx(1.0, abs=1e-12)
        assert after.ev.pose.y == 0.0
        assert after.ev.accel == pytest.approx((after.ev.speed - 10.0) / 0.1)

    def test_vif_hitting_obstacle_stops(self, straight):
        obs = straight.obstacles[0]
        # VIF heading right towards the obstacle, its front 0.05 m short of it
        x = obs.x
        y = obs.y + 0.5 * obs.width + 2.25 + 0.05
        w = _place(reset_scenario(straight), "vif", x, y, -math.pi / 2, speed=5.0, throttle=0.5)
        w = simulate_tick(w, EVCommand(0.0, 0.0, 0.0))
        assert w.vif.halted
        w = simulate_tick(w, EVCommand(0.0, 0.0, 0.0))
        assert w.vif.speed == 0.0
        assert obb_intersects(w.vif.rect(), obs)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 15.0), st.floats(0.0, 1.0))
    def test_full_brake_never_speeds_up(self, v0, rain):
        w = reset_scenario(builtin_route("straight"))
        w = w.replace(ev=VehicleState(Pose2D(0.0, 0.0), speed=v0), weather=Weather(0.0, rain, 60.0))
        last = v0
        for _ in range(30):
            w = simulate_tick(w, EVCommand(0.0, 1.0, 0.0))
            assert w.ev.speed <= last
            last = w.ev.speed

    def test_deterministic_sequences(self, left_turn):
        seq = [i % 17 for i in range(0, 400, 7)]

        def run():
            w = reset_scenario(left_turn)
            states = []
            for a in seq:
                w = step(apply_action(w, a))
                states.append(w)
            return states

        assert run() == run()


@pytest.mark.parametrize("route_id", ["straight", "left_turn", "right_turn"])
def test_nominal_run_is_clean(route_id):
    route = builtin_route(route_id)
    w = reset_scenario(route)
    found = set()
    for _ in range(700):
        w = step(w)
        d = compute_distances(w)
        found |= detect_violations(w, d, DetectionMode.SENSOR, False)
        if w.project("ev").s >= route.route_length:
            break
    assert w.project("ev").s >= route.route_length
    assert not found
    assert not w.ev.halted


def test_blind_spot_collision_with_positive_gap(straight):
    """A halted VIF poking into the lane is driven into; its centre gap stays positive."""
    w = reset_scenario(straight)
    w = _place(w, "vif", 30.0, -1.9, speed=0.0, throttle=0.0, halted=True)
    contact = None
    for _ in range(200):
        w = step(w)
        if obb_intersects(w.ev.rect(), w.vif.rect()):
            contact = w
            break
    assert contact is not None
    assert contact.ev.halted
    assert center_distance(contact.ev.rect(), contact.vif.rect()) > 0


def test_rear_end_gap_is_positive():
    # bumper-to-bumper contact of two 4.5 m vehicles leaves the centres 4.5 m apart
    from adsbench.geometry import Rect

    a, b = Rect(0, 0, 0, 4.5, 2.0), Rect(4.5, 0, 0, 4.5, 2.0)
    assert obb_intersects(a, b)
    assert center_distance(a, b) == pytest.approx(2.5)


def test_deadlock_behind_halted_vif(straight):
    w = reset_scenario(straight)
    w = _place(w, "vif", 20.0, 0.0, speed=0.0, throttle=0.0, halted=True)
    for _ in range(300):
        w = step(w)
    assert w.ev.speed == 0.0 and not w.ev.halted
    assert blocked_by_halted_vif(w)
    assert not blocked_by_halted_vif(reset_scenario(straight))
