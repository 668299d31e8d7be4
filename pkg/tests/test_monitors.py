from __future__ import annotations

import dataclasses
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adsbench.microworld import VehicleState, reset_scenario
from adsbench.monitors import (
    DCL_THRESHOLD,
    REQUIREMENTS,
    VIOLATION_REWARD,
    DetectionMode,
    DistanceVector,
    Requirement,
    SensorReadings,
    ViolationEvent,
    compute_distances,
    detect_violations,
    fuse_distances,
    read_sensors,
    reward,
    reward_vector,
)
from adsbench.routes import Pose2D


def _dist(dcl=0.0, dv=10.0, dp=10.0, ds=10.0, dt=0.5, tr=False):
    return DistanceVector(dcl, dv, dp, ds, dt, tr)


@pytest.fixture
def world(straight):
    return reset_scenario(straight)


def _corner_contact(world):
    """VIF alongside the EV, slightly yawed so one rear corner dips 4.5 cm into the EV."""
    ev = VehicleState(Pose2D(0.0, 0.0, 0.0), speed=3.0)
    vif = dataclasses.replace(world.vif, pose=Pose2D(0.0, 2.3, 0.16))
    return world.replace(ev=ev, vif=vif)


class TestDistances:
    def test_start_values(self, world):
        d = compute_distances(world)
        assert d.dt_norm == 1.0
        assert d.dcl == pytest.approx(0.0)
        assert not d.tr_violated

    def test_dt_zero_at_destination(self, world, straight):
        ev = VehicleState(Pose2D(straight.route_length + 1.0, 0.0, 0.0))
        assert compute_distances(world.replace(ev=ev)).dt_norm == 0.0

    def test_dcl_is_lateral_offset(self, world):
        w = world.replace(ev=VehicleState(Pose2D(10.0, 1.2, 0.0)))
        assert compute_distances(w).dcl == pytest.approx(1.2)

    def test_tr_requires_motion_on_red(self, right_turn):
        w = reset_scenario(right_turn)
        tc = right_turn.traffic_control
        moving = w.replace(ev=VehicleState(Pose2D(tc.x, tc.y, 0.0), speed=2.0))
        assert compute_distances(moving).tr_violated
        stopped = w.replace(ev=VehicleState(Pose2D(tc.x, tc.y, 0.0), speed=0.0))
        assert not compute_distances(stopped).tr_violated


class TestDetection:
    def test_dv_zero_threshold(self, world):
        assert detect_violations(world, _dist(dv=0.0), DetectionMode.THRESHOLD, False) == {Requirement.R2_DV}

    def test_dcl_threshold(self, world):
        assert detect_violations(world, _dist(dcl=1.2), "threshold", False) == {Requirement.R1_DCL}
        assert detect_violations(world, _dist(dcl=DCL_THRESHOLD), "threshold", False) == set()

    def test_corner_contact_confound(self, world):
        w = _corner_contact(world)
        d = compute_distances(w)
        assert d.dv == pytest.approx(0.3)
        assert detect_violations(w, d, DetectionMode.SENSOR, False) == {Requirement.R2_DV}
        assert detect_violations(w, d, DetectionMode.THRESHOLD, False) == set()
        assert detect_violations(w, d, DetectionMode.FUSED, False) == {Requirement.R2_DV}

    def test_r5_only_at_episode_end(self, world):
        for mode in DetectionMode:
            assert Requirement.R5_DT not in detect_violations(world, _dist(dt=0.3), mode, False)
            assert Requirement.R5_DT in detect_violations(world, _dist(dt=0.3), mode, True)
            assert Requirement.R5_DT not in detect_violations(world, _dist(dt=0.0), mode, True)

    def test_r6_all_modes(self, world):
        for mode in DetectionMode:
            assert Requirement.R6_TR in detect_violations(world, _dist(tr=True), mode, False)

    def test_lane_sensor(self, world):
        w = world.replace(ev=VehicleState(Pose2D(10.0, 0.9, 0.0)))
        assert read_sensors(w).lane
        d = compute_distances(w)
        assert Requirement.R1_DCL in detect_violations(w, d, DetectionMode.SENSOR, False)
        assert Requirement.R1_DCL not in detect_violations(w, d, DetectionMode.THRESHOLD, False)
        assert Requirement.R1_DCL in detect_violations(w, d, DetectionMode.FUSED, False)

    def test_fuse_only_touches_fired(self):
        d = _dist(dcl=0.2, dv=0.4, dp=3.0, ds=2.0)
        f = fuse_distances(d, SensorReadings(False, True, False, False))
        assert f == d._replace(dv=0.0)
        f = fuse_distances(d, SensorReadings(True, False, False, True))
        assert f == d._replace(dcl=DCL_THRESHOLD, ds=0.0)

    def test_event_json(self):
        e = ViolationEvent(Requirement.R2_DV, tick=4, episode=2, step=77)
        assert json.loads(e.to_json()) == {"episode": 2, "tick": 4, "requirement": "R2_DV", "step": 77}


class TestReward:
    def test_r2_point(self):
        assert reward(Requirement.R2_DV, _dist(dv=2.0), False) == 0.5

    def test_violation_point(self):
        for r in REQUIREMENTS:
            assert reward(r, _dist(), True) == 1.0e6 == VIOLATION_REWARD

    def test_tr_sparse(self):
        assert reward(Requirement.R6_TR, _dist(), False) == 0.0

    def test_cap(self):
        assert reward(Requirement.R2_DV, _dist(dv=0.001), False) == 100.0

    def test_dcl_normalized(self):
        assert reward(Requirement.R1_DCL, _dist(dcl=0.0), False) == 1.0
        assert reward(Requirement.R1_DCL, _dist(dcl=0.575), False) == pytest.approx(2.0)

    def test_dt(self):
        assert reward(Requirement.R5_DT, _dist(dt=0.5), False) == 2.0
        assert reward(Requirement.R5_DT, _dist(dt=0.0), False) == 1.0
        assert reward(Requirement.R5_DT, _dist(dt=1.0), False) == 100.0

    def test_vector_order(self):
        v = reward_vector(_dist(dv=4.0), {Requirement.R4_DS})
        assert v[Requirement.R2_DV] == 0.25
        assert v[Requirement.R4_DS] == VIOLATION_REWARD
        assert len(v) == 6

    @given(
        st.floats(0.0, 5.0), st.floats(0.0, 200.0), st.floats(0.0, 200.0), st.floats(0.0, 200.0),
        st.floats(0.0, 1.0), st.booleans(),
    )
    def test_range_when_not_violated(self, dcl, dv, dp, ds, dt, tr):
        d = _dist(dcl, dv, dp, ds, dt, tr)
        for r in REQUIREMENTS:
            assert 0.0 <= reward(r, d, False) <= 100.0

    @given(st.floats(0.01, 100.0), st.floats(0.01, 100.0))
    def test_r2_decreasing(self, a, b):
        if a < b:
            assert reward(Requirement.R2_DV, _dist(dv=a), False) > reward(Requirement.R2_DV, _dist(dv=b), False)
