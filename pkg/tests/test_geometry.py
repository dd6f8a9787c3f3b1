import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandgen.geometry import (
    KinematicState,
    envelope,
    obb_overlap,
    relative_frame,
    to_ego_frame,
    wrap_angle,
)


def state(x=0.0, y=0.0, yaw=0.0, v_lon=0.0, v_lat=0.0, hl=2.4, hw=1.0):
    return KinematicState(x, y, yaw, v_lon, v_lat, hl, hw)


finite = st.floats(-100.0, 100.0, allow_nan=False)
angles = st.floats(-10.0, 10.0, allow_nan=False)
speeds = st.floats(-20.0, 20.0, allow_nan=False)


class TestToEgoFrame:
    def test_identity_rotation(self):
        assert to_ego_frame(state(), state(x=5, y=2)) == pytest.approx((5.0, 2.0))

    def test_quarter_turn(self):
        d = to_ego_frame(state(yaw=math.pi / 2), state(x=0, y=5))
        assert d == pytest.approx((5.0, 0.0))

    def test_hand_rotated_45deg(self):
        ego = state(x=1, y=1, yaw=math.pi / 4)
        adv = state(x=1 + math.sqrt(2), y=1)
        assert to_ego_frame(ego, adv) == pytest.approx((1.0, -1.0))

    @given(ex=finite, ey=finite, eyaw=angles, ax=finite, ay=finite)
    @settings(max_examples=200)
    def test_isometry(self, ex, ey, eyaw, ax, ay):
        ego, adv = state(ex, ey, eyaw), state(ax, ay)
        dx, dy = to_ego_frame(ego, adv)
        assert math.hypot(dx, dy) == pytest.approx(math.hypot(ax - ex, ay - ey), abs=1e-9)


class TestEnvelope:
    def test_aligned(self):
        s_x, s_y = envelope(state(), state(x=20))
        assert s_x == pytest.approx(4.8)
        assert s_y == pytest.approx(2.0)

    def test_quarter_yaw(self):
        s_x, s_y = envelope(state(), state(x=20, yaw=math.pi / 2))
        assert s_x == pytest.approx(3.4)
        assert s_y == pytest.approx(1.0 + 2.4)

    def test_pi_symmetry(self):
        assert envelope(state(), state(x=20, yaw=math.pi)) == pytest.approx((4.8, 2.0))

    @given(dpsi=angles)
    @settings(max_examples=200)
    def test_invariances(self, dpsi):
        base = envelope(state(), state(x=20, yaw=dpsi))
        assert envelope(state(), state(x=20, yaw=dpsi + math.pi)) == pytest.approx(base)
        assert envelope(state(), state(x=20, yaw=-dpsi)) == pytest.approx(base)

    @given(dpsi=angles)
    @settings(max_examples=100)
    def test_envelope_at_least_own_extent(self, dpsi):
        s_x, s_y = envelope(state(), state(x=20, yaw=dpsi))
        assert s_x >= 2.4 and s_y >= 1.0


class TestObbOverlap:
    def test_coincident(self):
        assert obb_overlap(state(), state())

    def test_far_apart(self):
        assert not obb_overlap(state(hl=1, hw=1), state(x=100, hl=1, hw=1))

    def test_unit_squares_interval_check(self):
        # half-extent-1 squares, centers 1.9 apart: 0.1 of interval overlap
        assert obb_overlap(state(hl=1, hw=1), state(x=1.9, hl=1, hw=1))
        assert not obb_overlap(state(hl=1, hw=1), state(x=2.1, hl=1, hw=1))

    @given(dx=finite, dy=finite)
    @settings(max_examples=300)
    def test_aligned_exactness(self, dx, dy):
        a, b = state(), state(x=dx, y=dy)
        rel = relative_frame(a, b)
        interval = abs(rel.d_x_actual) < rel.s_x and abs(rel.d_y_actual) < rel.s_y
        assert obb_overlap(a, b) == interval

    @given(dx=finite, dy=finite, dpsi=angles)
    @settings(max_examples=300)
    def test_envelope_is_conservative(self, dx, dy, dpsi):
        a, b = state(), state(x=dx, y=dy, yaw=dpsi)
        rel = relative_frame(a, b)
        if rel.clearance_x > 0 or rel.clearance_y > 0:
            assert not obb_overlap(a, b)


class TestRelativeFrame:
    def test_closing_speed_sign(self):
        # adversary dead ahead, ego driving at it: x gap closing at 10
        rel = relative_frame(state(v_lon=10), state(x=30))
        assert rel.dv_x == pytest.approx(10.0)
        assert rel.dv_y == pytest.approx(0.0)

    def test_receding_negative(self):
        rel = relative_frame(state(v_lon=5), state(x=30, v_lon=10))
        assert rel.dv_x == pytest.approx(-5.0)

    def test_clearances_exact(self):
        rel = relative_frame(state(), state(x=10, y=3))
        assert rel.clearance_x == pytest.approx(10 - 4.8)
        assert rel.clearance_y == pytest.approx(3 - 2.0)

    @given(eyaw=angles, v_lon=speeds, v_lat=speeds)
    @settings(max_examples=200)
    def test_world_velocity_magnitude(self, eyaw, v_lon, v_lat):
        s = state(yaw=eyaw, v_lon=v_lon, v_lat=v_lat)
        wx, wy = s.world_velocity()
        assert math.hypot(wx, wy) == pytest.approx(math.hypot(v_lon, v_lat), abs=1e-9)


class TestWrapAngle:
    @given(a=st.floats(-50, 50, allow_nan=False))
    @settings(max_examples=200)
    def test_range(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)

    def test_negative_pi_maps_to_pi(self):
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    def test_invalid_extents_raise(self):
        with pytest.raises(ValueError):
            KinematicState(0, 0, 0, 0, 0, -1.0, 1.0)
