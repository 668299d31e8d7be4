"""The 17 discrete perturbation actions available to a testing agent."""

from __future__ import annotations

from enum import IntEnum
from typing import NamedTuple


class ActionId(IntEnum):
    VIF_THROTTLE_UP = 0
    VIF_THROTTLE_DOWN = 1
    VIF_STEER_LEFT = 2
    VIF_STEER_RIGHT = 3
    PED_SPEED_UP = 4
    PED_SPEED_DOWN = 5
    PED_X_UP = 6
    PED_X_DOWN = 7
    PED_Y_UP = 8
    PED_Y_DOWN = 9
    FOG_UP = 10
    FOG_DOWN = 11
    RAIN_UP = 12
    RAIN_DOWN = 13
    SUN_UP = 14
    SUN_DOWN = 15
    NO_OP = 16


class ActionEffect(NamedTuple):
    target: str  # "vif.throttle", "ped.x", "weather.fog", ...
    delta: float
    low: float
    high: float


_INF = float("inf")

ACTION_TABLE: dict[ActionId, ActionEffect | None] = {
    ActionId.VIF_THROTTLE_UP: ActionEffect("vif.throttle", 0.1, 0.0, 1.0),
    ActionId.VIF_THROTTLE_DOWN: ActionEffect("vif.throttle", -0.1, 0.0, 1.0),
    ActionId.VIF_STEER_LEFT: ActionEffect("vif.steer", 0.1, -1.0, 1.0),
    ActionId.VIF_STEER_RIGHT: ActionEffect("vif.steer", -0.1, -1.0, 1.0),
    ActionId.PED_SPEED_UP: ActionEffect("ped.speed", 0.2, 0.0, 3.0),
    ActionId.PED_SPEED_DOWN: ActionEffect("ped.speed", -0.2, 0.0, 3.0),
    ActionId.PED_X_UP: ActionEffect("ped.x", 0.5, -_INF, _INF),
    ActionId.PED_X_DOWN: ActionEffect("ped.x", -0.5, -_INF, _INF),
    ActionId.PED_Y_UP: ActionEffect("ped.y", 0.5, -_INF, _INF),
    ActionId.PED_Y_DOWN: ActionEffect("ped.y", -0.5, -_INF, _INF),
    ActionId.FOG_UP: ActionEffect("weather.fog", 0.1, 0.0, 1.0),
    ActionId.FOG_DOWN: ActionEffect("weather.fog", -0.1, 0.0, 1.0),
    ActionId.RAIN_UP: ActionEffect("weather.rain", 0.1, 0.0, 1.0),
    ActionId.RAIN_DOWN: ActionEffect("weather.rain", -0.1, 0.0, 1.0),
    ActionId.SUN_UP: ActionEffect("weather.sun_altitude", 10.0, -90.0, 90.0),
    ActionId.SUN_DOWN: ActionEffect("weather.sun_altitude", -10.0, -90.0, 90.0),
    ActionId.NO_OP: None,
}

N_ACTIONS = len(ActionId)
VIF_ACTIONS = frozenset(a for a, e in ACTION_TABLE.items() if e is not None and e.target.startswith("vif."))
