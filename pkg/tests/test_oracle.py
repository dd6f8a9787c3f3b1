import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandgen.feasibility import OPPOSITE, SAME, FeasibilityParams
from bandgen.geometry import KinematicState
from bandgen.oracle import (
    AVOIDABLE,
    UNAVOIDABLE,
    braking_oracle_1d,
    discrete_stop_travel,
    escape_oracle_2d,
    joint_contact_time,
    sample_2d_state,
    soundness_campaign_1d,
)
from bandgen.geometry import relative_frame

PARAMS = FeasibilityParams()


def state(x=0.0, y=0.0, yaw=0.0, v_lon=0.0, v_lat=0.0):
    return KinematicState(x, y, yaw, v_lon, v_lat, 2.4, 1.0)


class TestDiscreteStopTravel:
    @given(v=st.floats(0.0, 30.0), a=st.floats(0.5, 6.0))
    @settings(max_examples=200)
    def test_matches_simulation(self, v, a):
        dt = 0.01
        travel = 0.0
        vv = v
        while vv > 0.0:
            vv = max(0.0, vv - a * dt)
            travel += vv * dt
        assert discrete_stop_travel(v, a, dt) == pytest.approx(travel, abs=1e-9)

    def test_below_continuous(self):
        assert discrete_stop_travel(10.0, 4.0, 0.01) <= 10.0**2 / 8.0


class TestBrakingOracle1d:
    def test_head_on_below_limit(self):
        r = braking_oracle_1d(20.0, 10.0, 10.0, 4.0, 4.0, OPPOSITE)
        assert r.verdict == UNAVOIDABLE

    def test_head_on_above_limit(self):
        r = braking_oracle_1d(30.0, 10.0, 10.0, 4.0, 4.0, OPPOSITE)
        assert r.verdict == AVOIDABLE

    def test_touching_stationary(self):
        r = braking_oracle_1d(0.0, 0.0, 0.0, 4.0, 4.0, OPPOSITE)
        assert r.verdict == AVOIDABLE

    def test_same_direction_boundary(self):
        # closed-form limit is 25 for (20, 10, 4, 2)
        assert braking_oracle_1d(24.0, 20.0, 10.0, 4.0, 2.0, SAME).verdict == UNAVOIDABLE
        assert braking_oracle_1d(26.0, 20.0, 10.0, 4.0, 2.0, SAME).verdict == AVOIDABLE

    def test_front_ego_can_coast_clear(self):
        # searched front at equal speed never gets caught by a braking rear
        r = braking_oracle_1d(1.0, 10.0, 10.0, 4.0, 3.0, SAME, ego_role="front")
        assert r.verdict == AVOIDABLE

    def test_initial_penetration(self):
        assert braking_oracle_1d(-0.5, 5.0, 0.0, 4.0, 4.0, SAME).verdict == UNAVOIDABLE

    @given(
        gap=st.floats(0.5, 60.0),
        v_r=st.floats(0.0, 15.0),
        v_f=st.floats(0.0, 15.0),
        a_r=st.floats(2.0, 4.5),
        a_f=st.floats(2.0, 4.5),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_ego_capability(self, gap, v_r, v_f, a_r, a_f):
        # enlarging the searched vehicle's brake bound never flips
        # avoidable -> unavoidable
        weak = braking_oracle_1d(gap, v_r, v_f, a_r, a_f, OPPOSITE, dt=0.02)
        strong = braking_oracle_1d(gap, v_r, v_f, a_r * 1.5, a_f, OPPOSITE, dt=0.02)
        if weak.verdict == AVOIDABLE:
            assert strong.verdict == AVOIDABLE


class TestEscapeOracle2d:
    def test_far_receding_immediate(self):
        r = escape_oracle_2d(state(v_lon=10), state(x=200, v_lon=15), PARAMS)
        assert r.verdict == AVOIDABLE
        assert r.note in ("separation prune", "constant-plan witness")

    def test_head_on_below_braking_limit(self):
        # 15 m gap, limit is 25: no steering room in an aligned head-on
        adv = state(x=15 + 4.8, yaw=math.pi, v_lon=10)
        r = escape_oracle_2d(state(v_lon=10), adv, PARAMS)
        assert r.verdict == UNAVOIDABLE

    def test_head_on_with_room_to_brake(self):
        adv = state(x=40 + 4.8, yaw=math.pi, v_lon=10)
        r = escape_oracle_2d(state(v_lon=10), adv, PARAMS)
        assert r.verdict == AVOIDABLE

    def test_walled_corridor_reduces_to_1d(self):
        adv = state(x=15 + 4.8, yaw=math.pi, v_lon=10)
        r = escape_oracle_2d(state(v_lon=10), adv, PARAMS, corridor_half_width=0.0)
        assert r.verdict == UNAVOIDABLE
        r1d = braking_oracle_1d(15.0, 10.0, 10.0, 3.0, 4.0, OPPOSITE)
        assert r1d.verdict == UNAVOIDABLE

    def test_lateral_escape_with_room(self):
        # same head-on gap but the adversary is laterally offset enough that
        # steering away opens the pass
        adv = KinematicState(15 + 4.8, 3.5, math.pi, 10, 0, 2.4, 1.0)
        r = escape_oracle_2d(state(v_lon=10), adv, PARAMS)
        assert r.verdict == AVOIDABLE

    def test_initial_overlap(self):
        r = escape_oracle_2d(state(), state(x=1.0), PARAMS)
        assert r.verdict == UNAVOIDABLE
        assert r.note == "initial overlap"

    def test_frozen_vs_braking_adversary(self):
        # a braking adversary is easier to escape than a frozen one
        adv = state(x=30, yaw=math.pi, v_lon=12)
        frozen = escape_oracle_2d(state(v_lon=10), adv, PARAMS, adversary_model="frozen")
        braking = escape_oracle_2d(state(v_lon=10), adv, PARAMS, adversary_model="braking")
        if braking.verdict == UNAVOIDABLE:
            assert frozen.verdict == UNAVOIDABLE


class TestJointContactTime:
    def test_on_course_head_on(self):
        rel = relative_frame(state(v_lon=10), state(x=30, yaw=math.pi, v_lon=10))
        t = joint_contact_time(rel)
        assert t == pytest.approx((30 - 4.8) / 20.0)

    def test_passing_by_none(self):
        # adversary crossing ahead: windows never intersect
        rel = relative_frame(state(v_lon=1.0), state(x=8.0, y=-30.0, yaw=math.pi / 2, v_lon=20.0))
        assert joint_contact_time(rel) is None


class TestCampaign1d:
    def test_small_campaign_clean(self):
        report = soundness_campaign_1d(60, PARAMS, seed=7)
        assert report["unavoidable_but_oracle_avoids"] == 0
        assert report["agreement_rate"] >= 0.99


class TestSampler2d:
    def test_yields_approach_states_on_course(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            ego, adv = sample_2d_state(rng, PARAMS)
            rel = relative_frame(ego, adv)
            assert rel.clearance_x > 0 and rel.clearance_y > 0
            assert joint_contact_time(rel) is not None
            a = abs(math.degrees(rel.delta_psi))
            assert a <= 30.0 or a >= 150.0
