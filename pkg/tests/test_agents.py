from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from adsbench.actions import N_ACTIONS
from adsbench.agents import (
    OBS_SIZE,
    OBS_SLOTS,
    RELATIVE_SLOTS,
    MorlotAgent,
    MorlotState,
    QAgent,
    QTable,
    RandomAgent,
    Transition,
    encode_observation,
    encode_state_key,
    morlot_choose,
    morlot_select,
    morlot_update,
    parse_state_key,
    q_select,
    q_update,
    random_select,
)
from adsbench.microworld import reset_scenario, step
from adsbench.monitors import REQUIREMENTS, Requirement

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestObservation:
    def test_size(self, straight):
        w = reset_scenario(straight)
        assert len(encode_observation(w)) == OBS_SIZE == len(OBS_SLOTS) == len(RELATIVE_SLOTS)
        assert len(encode_observation(w, "relative")) == OBS_SIZE

    def test_absolute_values(self, straight):
        w = reset_scenario(straight)
        obs = dict(zip(OBS_SLOTS, encode_observation(w)))
        assert obs["ev_x"] == w.ev.pose.x and obs["vif_throttle"] == 0.5
        assert obs["sun_altitude"] == 60.0

    def test_relative_start(self, straight):
        w = reset_scenario(straight)
        obs = dict(zip(RELATIVE_SLOTS, encode_observation(w, "relative")))
        assert obs["ev_progress"] == pytest.approx(0.0)
        assert obs["vif_range"] == pytest.approx(math.hypot(w.vif.pose.x - w.ev.pose.x, w.vif.pose.y - w.ev.pose.y))
        assert obs["vif_bearing"] == pytest.approx(0.0, abs=1e-9)

    def test_unknown_frame(self, straight):
        with pytest.raises(ValueError):
            encode_observation(reset_scenario(straight), "polar")


class TestStateKey:
    def test_full_precision_roundtrip(self):
        obs = (0.1, 1 / 3, -2.5e-7, 1e300, 0.0)
        assert parse_state_key(encode_state_key(obs)) == obs

    def test_rounding(self):
        assert encode_state_key((1.26, -0.4, 3.0), 1) == "1.3|-0.4|3.0"
        assert encode_state_key((0.4, -0.4), 0) == "0|0"

    @given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3))
    def test_distinct_obs_distinct_keys(self, a, b):
        if a != b:
            assert encode_state_key(a) != encode_state_key(b)

    @given(st.lists(finite, min_size=19, max_size=19))
    def test_deterministic(self, obs):
        assert encode_state_key(obs) == encode_state_key(list(obs))

    def test_simulated_states_distinct(self, straight):
        w = reset_scenario(straight)
        keys = set()
        for _ in range(200):
            w = step(w)
            keys.add(encode_state_key(encode_observation(w)))
        assert len(keys) == 200


class TestRandomSelect:
    def test_one_draw(self):
        a, b = np.random.default_rng(5), np.random.default_rng(5)
        random_select(a)
        b.integers(N_ACTIONS)
        assert a.random() == b.random()

    def test_uniform_chi_square(self):
        rng = np.random.default_rng(11)
        counts = np.bincount([random_select(rng) for _ in range(17_000)], minlength=N_ACTIONS)
        assert sps.chisquare(counts).pvalue > 0.001


class TestQSelect:
    def test_argmax(self):
        t = QTable()
        t.row("s")[3] = 5.0
        assert q_select(t, "s", 0.0, np.random.default_rng(0)) == 3

    def test_tie_lowest(self):
        t = QTable()
        assert q_select(t, "new", 0.0, np.random.default_rng(0), tie_break="lowest") == 0
        assert t.distinct_states == 1

    def test_tie_random_among_maxima(self):
        t = QTable()
        row = t.row("s")
        row[2] = row[9] = 1.0
        rng = np.random.default_rng(1)
        picks = {q_select(t, "s", 0.0, rng) for _ in range(60)}
        assert picks == {2, 9}

    def test_eps_one_matches_random(self):
        t = QTable()
        t.row("s")[4] = 10.0
        a, b = np.random.default_rng(9), np.random.default_rng(9)
        assert [q_select(t, "s", 1.0, a) for _ in range(300)] == [random_select(b) for _ in range(300)]


class TestQUpdate:
    def test_formula(self):
        t = QTable()
        t.row("n")[:] = [0.0] * 16 + [4.0]
        v = q_update(t, "s", 2, 1.0, "n", alpha=0.5, gamma=0.5)
        assert v == 0.5 * (1.0 + 0.5 * 4.0)
        assert t.rows["s"] == [0.0, 0.0, 1.5] + [0.0] * 14

    def test_unseen_next_is_zero(self):
        t = QTable()
        q_update(t, "s", 0, 2.0, "never", 1.0, 0.9)
        assert t.rows["s"][0] == 2.0
        assert "never" not in t.rows

    def test_single_cell_changes(self):
        t = QTable()
        t.row("s")
        t.row("n")[5] = 1.0
        before = {k: list(v) for k, v in t.rows.items()}
        q_update(t, "s", 7, 3.0, "n", 0.1, 0.99)
        changed = [(k, i) for k in t.rows for i in range(N_ACTIONS) if t.rows[k][i] != before[k][i]]
        assert changed == [("s", 7)]

    @settings(max_examples=50)
    @given(st.floats(0.01, 1.0), st.floats(0.0, 0.99), st.floats(-100, 100), st.floats(-100, 100))
    def test_contraction_towards_target(self, alpha, gamma, r, q0):
        # next state is unseen, so the target is r and the error shrinks by (1 - alpha) per update
        t = QTable()
        t.row("s")[0] = q0
        for n in range(1, 11):
            q_update(t, "s", 0, r, "terminal", alpha, gamma)
            assert abs(t.rows["s"][0] - r) <= (1.0 - alpha) ** n * abs(q0 - r) + 1e-9


class TestMorlot:
    def test_choose_highest(self):
        m = MorlotState()
        m.last_reward = [0.0, 12.1, 1.0, 6.8, 2.0, 0.0]
        assert morlot_choose(m) is Requirement.R2_DV
        m.uncovered.remove(Requirement.R2_DV)
        assert morlot_choose(m) is Requirement.R4_DS

    def test_initial_tie_by_order(self):
        assert morlot_choose(MorlotState()) is Requirement.R1_DCL

    def test_empty_raises(self):
        m = MorlotState()
        m.uncovered = []
        with pytest.raises(ValueError):
            morlot_choose(m)

    def test_select_uses_chosen_table(self):
        m = MorlotState()
        m.last_reward = [0.0, 0.0, 0.0, 5.0, 0.0, 0.0]
        m.tables[Requirement.R4_DS].row("s")[11] = 1.0
        action, req = morlot_select(m, "s", 0.0, np.random.default_rng(0))
        assert (action, req) == (11, Requirement.R4_DS)

    def test_update_all_uncovered(self):
        m = MorlotState()
        t = Transition("s", 3, (1.0, 2.0, 3.0, 4.0, 5.0, 0.0), "n")
        morlot_update(m, t, alpha=1.0, gamma=0.0)
        assert [tab.rows["s"][3] for tab in m.tables] == [1.0, 2.0, 3.0, 4.0, 5.0, 0.0]
        assert m.last_reward == [1.0, 2.0, 3.0, 4.0, 5.0, 0.0]

    def test_violation_uncovers(self):
        m = MorlotState()
        t = Transition("s", 0, (0.0, 1e6, 0.0, 0.0, 0.0, 0.0), "n", violated=frozenset({Requirement.R2_DV}))
        morlot_update(m, t)
        assert Requirement.R2_DV not in m.uncovered
        assert len(m.uncovered) == 5
        # the covered table is frozen from now on
        morlot_update(m, Transition("s", 1, (1.0,) * 6, "n"), alpha=1.0, gamma=0.0)
        assert m.tables[Requirement.R2_DV].rows["s"][1] == 0.0
        assert m.tables[Requirement.R1_DCL].rows["s"][1] == 1.0


class TestAgents:
    def test_random_agent(self):
        a, b = np.random.default_rng(2), np.random.default_rng(2)
        agent = RandomAgent()
        agent.reset(())
        assert [agent.act(0.0, a) for _ in range(50)] == [random_select(b) for _ in range(50)]

    def test_q_agent_growth(self):
        agent = QAgent(decimals=None)
        rng = np.random.default_rng(0)
        agent.reset((0.0,) * OBS_SIZE)
        for i in range(10):
            a = agent.act(0.5, rng)
            agent.learn(a, (0.0,) * 6, frozenset(), (float(i + 1),) * OBS_SIZE, False)
        assert agent.growth() == [10]

    def test_morlot_agent_falls_back_when_covered(self):
        agent = MorlotAgent()
        agent.reset((0.0,) * OBS_SIZE)
        agent.learn(0, (1e6,) * 6, frozenset(REQUIREMENTS), (1.0,) * OBS_SIZE, False)
        a, b = np.random.default_rng(4), np.random.default_rng(4)
        assert agent.act(0.0, a) == random_select(b)
        assert agent.last_choice is None
