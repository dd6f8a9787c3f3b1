import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandgen.feasibility import (
    AXIS_LAT,
    AXIS_LON,
    AXIS_NONE,
    CONSERVATIVE_RSS,
    OPPOSITE,
    PHYSICS_LIMIT,
    SAME,
    FeasibilityParams,
    axial_ttc,
    conservative_rss,
    limit_lat,
    limit_lon_opposite,
    limit_lon_same,
    orthogonal_compensation,
    sigma,
)
from bandgen.geometry import KinematicState, relative_frame

PARAMS = FeasibilityParams()


def state(x=0.0, y=0.0, yaw=0.0, v_lon=0.0, v_lat=0.0):
    return KinematicState(x, y, yaw, v_lon, v_lat, 2.4, 1.0)


speeds = st.floats(0.0, 25.0, allow_nan=False)
brakes = st.floats(0.5, 6.0, allow_nan=False)


class TestLimitLonOpposite:
    def test_symmetric(self):
        assert limit_lon_opposite(10, 10, 4, 4) == pytest.approx(25.0)

    def test_stationary(self):
        assert limit_lon_opposite(0, 0, 4, 4) == 0.0

    def test_single_stopping_distance(self):
        assert limit_lon_opposite(10, 0, 4, 4) == pytest.approx(12.5)


class TestLimitLonSame:
    def test_both_bounds_equal(self):
        assert limit_lon_same(20, 10, 4, 2) == pytest.approx(25.0)

    def test_equal_term_dominates(self):
        # stop term is -31; equalization bound is 1
        assert limit_lon_same(20, 18, 4, 2) == pytest.approx(1.0)

    def test_equal_speeds_clamp(self):
        assert limit_lon_same(10, 10, 4, 2) == 0.0

    def test_stopped_front_reverts_to_stop_term(self):
        # the equalization bound is only valid while the front still moves;
        # against a stopped front the boundary is the rear's stop distance
        assert limit_lon_same(10, 0, 4, 2) == pytest.approx(12.5)

    @given(v_r=speeds, v_f=speeds, a_r=brakes, a_f=brakes)
    @settings(max_examples=300)
    def test_never_negative(self, v_r, v_f, a_r, a_f):
        assert limit_lon_same(v_r, v_f, a_r, a_f) >= 0.0

    @given(v_r=speeds, v_f=speeds, a_r=brakes, a_f=brakes)
    @settings(max_examples=300)
    def test_slower_rear_is_stop_term_only(self, v_r, v_f, a_r, a_f):
        if v_r <= v_f:
            stop = v_r**2 / (2 * a_r) - v_f**2 / (2 * a_f)
            assert limit_lon_same(v_r, v_f, a_r, a_f) == pytest.approx(max(0.0, stop))


class TestLimitLat:
    def test_same_symmetric_cancel(self):
        assert limit_lat(2, 2, 2, 2, SAME) == 0.0

    def test_opposite_sum(self):
        assert limit_lat(2, 2, 2, 2, OPPOSITE) == pytest.approx(2.0)

    def test_receding_front_clamped(self):
        assert limit_lat(0, 3, 2, 2, SAME) == 0.0


class TestConservativeRss:
    def test_reduces_to_physics_limit(self):
        p = FeasibilityParams(
            rho=0.0,
            a_ego_lon_brake_max=4.0, a_npc_lon_brake_max=4.0,
            a_ego_lon_brake_min=4.0, a_npc_lon_brake_min=4.0,
        )
        assert conservative_rss(10, 10, AXIS_LON, OPPOSITE, p) == pytest.approx(25.0)

    def test_lon_same_hand_value(self):
        p = FeasibilityParams(rho=1.0, a_ego_lon_accel_max=2.0, a_ego_lon_brake_min=2.0)
        # 10*1 + 0.5*2*1 + 12^2/4 - 0 = 47
        assert conservative_rss(10, 0, AXIS_LON, SAME, p, rear_is_ego=True) == pytest.approx(47.0)

    def test_lat_buffer_only(self):
        p = FeasibilityParams(rho=0.0)
        assert conservative_rss(0, 0, AXIS_LAT, SAME, p) == pytest.approx(0.30)

    @given(v_r=speeds, v_f=speeds)
    @settings(max_examples=200)
    def test_dominates_physics_limit_lon(self, v_r, v_f):
        # default conservative parameters dominate on both lon directions
        for rear_is_ego in (True, False):
            a_r = PARAMS.a_ego_lon_brake_max if rear_is_ego else PARAMS.a_npc_lon_brake_max
            a_f = PARAMS.a_npc_lon_brake_max if rear_is_ego else PARAMS.a_ego_lon_brake_max
            cons = conservative_rss(v_r, v_f, AXIS_LON, SAME, PARAMS, rear_is_ego)
            assert cons >= limit_lon_same(v_r, v_f, a_r, a_f) - 1e-9
            cons_o = conservative_rss(v_r, v_f, AXIS_LON, OPPOSITE, PARAMS, rear_is_ego)
            assert cons_o >= limit_lon_opposite(v_r, v_f, a_r, a_f) - 1e-9


class TestAxialTtc:
    def test_direct_ratio(self):
        rel = relative_frame(state(v_lon=5), state(x=14.8))  # clearance 10, closing 5
        t_x, t_y, t, axis = axial_ttc(rel, PARAMS)
        assert t_x == pytest.approx(2.0)
        assert t == pytest.approx(2.0)
        assert axis == AXIS_LON

    def test_both_non_closing(self):
        rel = relative_frame(state(), state(x=30, v_lon=5))
        t_x, t_y, t, axis = axial_ttc(rel, PARAMS)
        assert t == PARAMS.far_cap
        assert axis == AXIS_NONE

    def test_touching_zero(self):
        rel = relative_frame(state(v_lon=1), state(x=4.8))
        t_x, _, t, axis = axial_ttc(rel, PARAMS)
        assert t_x == 0.0
        assert axis == AXIS_LON

    def test_tie_resolves_lon(self):
        # symmetric diagonal closing with equal per-axis TTC
        ego = state(v_lon=2.0)
        adv = KinematicState(4.8 + 2.0, 2.0 + 2.0, 0.0, 0.0, -2.0, 2.4, 1.0)
        rel = relative_frame(ego, adv)
        t_x, t_y, t, axis = axial_ttc(rel, PARAMS)
        assert t_x == pytest.approx(t_y)
        assert axis == AXIS_LON


class TestOrthogonalCompensation:
    def test_half_a_t_squared(self):
        p = FeasibilityParams(a_ego_lat_brake_max=1.0, a_npc_lat_brake_max=1.0)
        l_x, l_y = orthogonal_compensation(2.0, AXIS_LON, dv_n=1.0, params=p)
        assert (l_x, l_y) == (0.0, pytest.approx(4.0))

    def test_non_closing_orthogonal(self):
        assert orthogonal_compensation(2.0, AXIS_LON, dv_n=-0.5, params=PARAMS) == (0.0, 0.0)

    def test_no_imminent_event(self):
        assert orthogonal_compensation(2.0, AXIS_NONE, dv_n=1.0, params=PARAMS) == (0.0, 0.0)

    def test_colliding_axis_gets_zero(self):
        l_x, l_y = orthogonal_compensation(1.0, AXIS_LAT, dv_n=2.0, params=PARAMS)
        assert l_y == 0.0 and l_x > 0.0


class TestSigma:
    def test_safe_frame_is_one(self):
        rep = sigma(state(v_lon=5), state(x=500), PARAMS)
        assert rep.sigma == 1.0
        assert rep.colliding_axis in (AXIS_LON, AXIS_NONE)

    def test_single_axis_full_violation_is_zero(self):
        # head-on with the x clearance + compensation exactly zero: the lon
        # residual ratio is 1, the lat axis is quiescent (zero limit)
        ego = state(v_lon=10)
        adv = state(x=4.8, yaw=math.pi, v_lon=10)
        rep = sigma(ego, adv, PARAMS)
        assert rep.clearance_x == pytest.approx(0.0)
        assert rep.sigma == pytest.approx(0.0)
        assert rep.d_limit_y == 0.0

    def test_both_axes_fully_violated(self):
        # diagonal approach with both clearances + compensations zero
        ego = KinematicState(0, 0, 0, 3.0, 0.0, 2.4, 1.0)
        adv = KinematicState(4.8, 2.0, 0.0, 0.0, -2.0, 2.4, 1.0)
        rep = sigma(ego, adv, PARAMS)
        assert rep.clearance_x == pytest.approx(0.0)
        assert rep.clearance_y == pytest.approx(0.0)
        assert rep.sigma == pytest.approx(1.0 - math.sqrt(2.0))

    def test_coincident_centers_well_below_zero(self):
        rep = sigma(state(v_lon=10), state(v_lon=10, yaw=math.pi), PARAMS)
        assert rep.sigma < -0.1

    def test_receding_behind_is_one(self):
        # adversary behind and receding on both axes
        rep = sigma(state(v_lon=10), state(x=-20, y=3, v_lon=2), PARAMS)
        assert rep.sigma == 1.0

    def test_l_zero_on_colliding_axis(self):
        ego = state(v_lon=10)
        adv = state(x=15, yaw=math.pi, v_lon=10)
        rep = sigma(ego, adv, PARAMS)
        assert rep.colliding_axis == AXIS_LON
        assert rep.l_x == 0.0

    @given(gap=st.floats(5.0, 60.0))
    @settings(max_examples=100)
    def test_monotone_in_clearance(self, gap):
        ego = state(v_lon=12)
        s1 = sigma(ego, state(x=gap, yaw=math.pi, v_lon=8), PARAMS).sigma
        s2 = sigma(ego, state(x=gap + 2.0, yaw=math.pi, v_lon=8), PARAMS).sigma
        assert s2 >= s1 - 1e-12

    @given(
        gap=st.floats(5.0, 60.0),
        off=st.floats(0.0, 10.0),
        v_e=st.floats(0.0, 15.0),
        v_a=st.floats(0.0, 15.0),
        dpsi=st.floats(-math.pi, math.pi),
    )
    @settings(max_examples=300)
    def test_conservative_dominated_by_physics(self, gap, off, v_e, v_a, dpsi):
        # conservative distances dominate, so conservative sigma is lower,
        # on non-penetrating approach states
        ego = state(v_lon=v_e)
        adv = KinematicState(gap, off, dpsi, v_a, 0.0, 2.4, 1.0)
        rel = relative_frame(ego, adv)
        if rel.clearance_x <= 0 or rel.clearance_y <= 0:
            return
        s_phys = sigma(ego, adv, PARAMS, PHYSICS_LIMIT).sigma
        s_cons = sigma(ego, adv, PARAMS, CONSERVATIVE_RSS).sigma
        assert s_cons <= s_phys + 1e-9

    def test_mode_recorded(self):
        rep = sigma(state(v_lon=5), state(x=30), PARAMS, CONSERVATIVE_RSS)
        assert rep.mode == CONSERVATIVE_RSS

    def test_unknown_mode_raises(self):
        with pytest.raises(ValueError):
            sigma(state(), state(x=30), PARAMS, "bogus")


class TestParams:
    def test_defaults_match_reported_table(self):
        p = FeasibilityParams()
        assert p.dt == 0.1
        assert p.p_norm == 2
        assert p.ttc_floor == 1e-4
        assert p.far_cap == 10000.0
        assert p.min_lat_safe == 0.30
        assert p.same_dir_yaw_threshold == pytest.approx(math.radians(30.0))
        assert (p.a_ego_lon_brake_max, p.a_npc_lon_brake_max) == (3.0, 4.0)
        assert (p.a_ego_lat_brake_max, p.a_npc_lat_brake_max) == (2.0, 1.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            FeasibilityParams(a_ego_lon_brake_max=-1.0)
        with pytest.raises(ValueError):
            FeasibilityParams(p_norm=0)
        with pytest.raises(ValueError):
            FeasibilityParams(a_ego_lon_brake_min=5.0)
