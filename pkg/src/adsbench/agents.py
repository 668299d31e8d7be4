"""Observation encodings, state keys, and the tabular testing agents.

RANDOM picks uniformly among the 17 actions. Q-learning keys a dynamic
table on the text rendering of the 19 observation values. MORLOT keeps one
such table per requirement and acts through the uncovered requirement whose
reward was highest on the previous step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from adsbench.actions import N_ACTIONS
from adsbench.geometry import wrap_angle
from adsbench.microworld import WorldState
from adsbench.monitors import REQUIREMENTS, Requirement

OBS_SIZE = 19
FRAMES = ("absolute", "relative")

# slot names, absolute frame
OBS_SLOTS = (
    "ev_x", "ev_y", "ev_heading", "ev_speed", "ev_accel",
    "vif_x", "vif_y", "vif_heading", "vif_speed", "vif_accel",
    "ped_x", "ped_y", "ped_heading", "ped_speed",
    "fog", "rain", "sun_altitude",
    "vif_throttle", "vif_steer",
)
# relative frame: positions become route (progress, lateral) for the EV and
# polar (range, bearing) about the EV for the others; headings become differences
RELATIVE_SLOTS = (
    "ev_progress", "ev_lateral", "ev_heading_err", "ev_speed", "ev_accel",
    "vif_range", "vif_bearing", "vif_heading_diff", "vif_speed", "vif_accel",
    "ped_range", "ped_bearing", "ped_heading_diff", "ped_speed",
    "fog", "rain", "sun_altitude",
    "vif_throttle", "vif_steer",
)


def _polar(ex: float, ey: float, eh: float, x: float, y: float) -> tuple[float, float]:
    dx = x - ex
    dy = y - ey
    rng = math.hypot(dx, dy)
    bearing = wrap_angle(math.atan2(dy, dx) - eh) if rng > 0.0 else 0.0
    return rng, bearing


def encode_observation(world: WorldState, frame: str = "absolute") -> tuple[float, ...]:
    ev, vif, ped, w = world.ev, world.vif, world.ped, world.weather
    if frame == "absolute":
        return (
            ev.pose.x, ev.pose.y, ev.pose.heading, ev.speed, ev.accel,
            vif.pose.x, vif.pose.y, vif.pose.heading, vif.speed, vif.accel,
            ped.pose.x, ped.pose.y, ped.pose.heading, ped.speed,
            w.fog, w.rain, w.sun_altitude,
            vif.throttle, vif.steer,
        )
    if frame != "relative":
        raise ValueError(f"unknown frame {frame!r}")
    proj = world.project("ev")
    eh = ev.pose.heading
    vr, vb = _polar(ev.pose.x, ev.pose.y, eh, vif.pose.x, vif.pose.y)
    pr, pb = _polar(ev.pose.x, ev.pose.y, eh, ped.pose.x, ped.pose.y)
    return (
        proj.s, proj.lateral, wrap_angle(eh - proj.heading), ev.speed, ev.accel,
        vr, vb, wrap_angle(vif.pose.heading - eh), vif.speed, vif.accel,
        pr, pb, wrap_angle(ped.pose.heading - eh), ped.speed,
        w.fog, w.rain, w.sun_altitude,
        vif.throttle, vif.steer,
    )


def encode_state_key(obs: Sequence[float], decimals: int | None = None) -> str:
    """'|'-joined text key; ``decimals=None`` keeps full (round-trip) precision."""
    if decimals is None:
        return "|".join([repr(float(v)) for v in obs])
    # "+ 0.0" folds -0.0 into 0.0 so both render the same
    return "|".join([f"{round(float(v), decimals) + 0.0:.{decimals}f}" for v in obs])


def parse_state_key(key: str) -> tuple[float, ...]:
    return tuple(float(p) for p in key.split("|"))


def random_select(rng: np.random.Generator) -> int:
    return int(rng.integers(N_ACTIONS))


# -- tabular Q-learning -----------------------------------------------------


class QTable:
    """State key -> 17 action values, rows created lazily as zeros."""

    def __init__(self) -> None:
        self.rows: dict[str, list[float]] = {}
        self.visits = 0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def distinct_states(self) -> int:
        return len(self.rows)

    def row(self, key: str) -> list[float]:
        r = self.rows.get(key)
        if r is None:
            r = [0.0] * N_ACTIONS
            self.rows[key] = r
        return r

    def max_value(self, key: str) -> float:
        r = self.rows.get(key)
        return 0.0 if r is None else max(r)

    def to_csv_lines(self) -> Iterable[str]:
        yield "state_key," + ",".join(f"a{i}" for i in range(N_ACTIONS))
        for key, r in self.rows.items():
            yield '"' + key + '",' + ",".join(repr(v) for v in r)


def _argmax(row: list[float], tie_break: str, rng: np.random.Generator) -> int:
    best = max(row)
    if tie_break == "lowest":
        return row.index(best)
    ties = [i for i, v in enumerate(row) if v == best]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def q_select(table: QTable, key: str, epsilon: float, rng: np.random.Generator, tie_break: str = "random") -> int:
    """Epsilon-greedy over the row for ``key`` (created on first visit).

    At epsilon 1 exactly one rng draw is consumed, the same one
    ``random_select`` would consume.
    """
    row = table.row(key)
    table.visits += 1
    if epsilon >= 1.0 or (epsilon > 0.0 and rng.random() < epsilon):
        return random_select(rng)
    return _argmax(row, tie_break, rng)


def q_update(table: QTable, key: str, action: int, r: float, next_key: str, alpha: float, gamma: float) -> float:
    row = table.row(key)
    target = r + gamma * table.max_value(next_key)
    row[action] += alpha * (target - row[action])
    return row[action]


@dataclass(frozen=True)
class Transition:
    state_key: str
    action: int
    rewards: tuple[float, ...]  # indexed by Requirement
    next_state_key: str
    observation: tuple[float, ...] = ()
    next_observation: tuple[float, ...] = ()
    done: bool = False
    violated: frozenset = frozenset()  # requirements whose violation latched on this step


@dataclass
class MorlotState:
    tables: list[QTable] = field(default_factory=lambda: [QTable() for _ in REQUIREMENTS])
    uncovered: list[Requirement] = field(default_factory=lambda: list(REQUIREMENTS))
    last_reward: list[float] = field(default_factory=lambda: [0.0] * len(REQUIREMENTS))


def morlot_choose(m: MorlotState) -> Requirement:
    """Uncovered requirement with the highest previous reward (ties by order)."""
    if not m.uncovered:
        raise ValueError("all requirements covered")
    best = m.uncovered[0]
    for req in m.uncovered[1:]:
        if m.last_reward[req] > m.last_reward[best]:
            best = req
    return best


def morlot_select(m: MorlotState, key: str, epsilon: float, rng: np.random.Generator,
                  tie_break: str = "random") -> tuple[int, Requirement]:
    req = morlot_choose(m)
    return q_select(m.tables[req], key, epsilon, rng, tie_break), req


def morlot_update(m: MorlotState, t: Transition, alpha: float = 0.1, gamma: float = 0.99) -> None:
    for req in m.uncovered:
        q_update(m.tables[req], t.state_key, t.action, t.rewards[req], t.next_state_key, alpha, gamma)
    m.last_reward = list(t.rewards)
    if t.violated:
        m.uncovered = [r for r in m.uncovered if r not in t.violated]


# -- agent objects driven by the campaign loop --------------------------------


class RandomAgent:
    technique = "random"

    def reset(self, obs: tuple[float, ...]) -> None:
        pass

    def act(self, epsilon: float, rng: np.random.Generator) -> int:
        return random_select(rng)

    def learn(self, action: int, rewards: tuple[float, ...], violated: frozenset,
              next_obs: tuple[float, ...], done: bool) -> None:
        pass


class QAgent:
    """Single-objective tabular Q-learning on one requirement's reward."""

    technique = "q"

    def __init__(self, objective: Requirement = Requirement.R2_DV, decimals: int | None = None,
                 alpha: float = 0.1, gamma: float = 0.99, tie_break: str = "random") -> None:
        self.table = QTable()
        self.objective = Requirement(objective)
        self.decimals = decimals
        self.alpha = alpha
        self.gamma = gamma
        self.tie_break = tie_break
        self.key = ""

    def reset(self, obs: tuple[float, ...]) -> None:
        self.key = encode_state_key(obs, self.decimals)

    def act(self, epsilon: float, rng: np.random.Generator) -> int:
        return q_select(self.table, self.key, epsilon, rng, self.tie_break)

    def learn(self, action: int, rewards: tuple[float, ...], violated: frozenset,
              next_obs: tuple[float, ...], done: bool) -> None:
        next_key = encode_state_key(next_obs, self.decimals)
        q_update(self.table, self.key, action, rewards[self.objective], next_key, self.alpha, self.gamma)
        self.key = next_key

    def growth(self) -> list[int]:
        return [self.table.distinct_states]


class MorlotAgent:
    technique = "morlot"

    def __init__(self, decimals: int | None = None, alpha: float = 0.1, gamma: float = 0.99,
                 tie_break: str = "random") -> None:
        self.state = MorlotState()
        self.decimals = decimals
        self.alpha = alpha
        self.gamma = gamma
        self.tie_break = tie_break
        self.key = ""
        self.last_choice: Requirement | None = None

    def reset(self, obs: tuple[float, ...]) -> None:
        self.key = encode_state_key(obs, self.decimals)

    def act(self, epsilon: float, rng: np.random.Generator) -> int:
        if not self.state.uncovered:
            # everything covered: keep perturbing at random until the budget ends
            self.last_choice = None
            return random_select(rng)
        action, self.last_choice = morlot_select(self.state, self.key, epsilon, rng, self.tie_break)
        return action

    def learn(self, action: int, rewards: tuple[float, ...], violated: frozenset,
              next_obs: tuple[float, ...], done: bool) -> None:
        next_key = encode_state_key(next_obs, self.decimals)
        t = Transition(self.key, action, tuple(rewards), next_key, done=done, violated=frozenset(violated))
        morlot_update(self.state, t, self.alpha, self.gamma)
        self.key = next_key

    def growth(self) -> list[int]:
        return [t.distinct_states for t in self.state.tables]
