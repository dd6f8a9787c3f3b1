"""Physical-feasibility scoring.

Per frame this module computes axis-wise braking-limit distances (either the
physics-limit variant with zero reaction time, or the conservative RSS form
with a reaction window), axial time-to-collision, the reachable orthogonal
compensation, and aggregates the normalized residual shortfalls into the
unified score sigma.  sigma >= 0 means the frame is physically solvable under
the decoupled-axis braking model; sigma < 0 means no admissible combination
of braking and steering (within the same model) prevents a collision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .geometry import KinematicState, RelativeFrame, relative_frame, wrap_angle

PHYSICS_LIMIT = "physics_limit"
CONSERVATIVE_RSS = "conservative_rss"

AXIS_LON = "lon"
AXIS_LAT = "lat"
AXIS_NONE = "none"

SAME = "same"
OPPOSITE = "opposite"

# Floor applied to d_limit before the normalizing division.
_DLIMIT_FLOOR = 1e-6


@dataclass(frozen=True)
class FeasibilityParams:
    """Constants of the feasibility model.

    Braking bounds are maximal feasible decelerations (positive magnitudes)
    per party and axis.  The conservative-RSS fields (reaction time ``rho``,
    reaction-window accelerations and minimum braking bounds) only matter in
    ``conservative_rss`` mode.
    """

    dt: float = 0.1
    a_ego_lon_brake_max: float = 3.0
    a_npc_lon_brake_max: float = 4.0
    a_ego_lat_brake_max: float = 2.0
    a_npc_lat_brake_max: float = 1.5
    p_norm: int = 2
    ttc_floor: float = 1e-4
    far_cap: float = 10000.0
    min_lat_safe: float = 0.30
    same_dir_yaw_threshold: float = math.radians(30.0)
    # conservative mode only
    rho: float = 0.5
    a_ego_lon_accel_max: float = 2.0
    a_npc_lon_accel_max: float = 2.0
    a_ego_lat_accel_max: float = 0.5
    a_npc_lat_accel_max: float = 0.5
    a_ego_lon_brake_min: float = 2.0
    a_npc_lon_brake_min: float = 2.0
    a_ego_lat_brake_min: float = 1.0
    a_npc_lat_brake_min: float = 1.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if f.name.startswith("a_") and getattr(self, f.name) <= 0.0:
                raise ValueError(f"{f.name} must be positive")
        if self.p_norm < 1:
            raise ValueError("p_norm must be >= 1")
        if self.ttc_floor <= 0.0:
            raise ValueError("ttc_floor must be positive")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        for axis in ("lon", "lat"):
            for party in ("ego", "npc"):
                mn = getattr(self, f"a_{party}_{axis}_brake_min")
                mx = getattr(self, f"a_{party}_{axis}_brake_max")
                if mn > mx:
                    raise ValueError(f"a_{party}_{axis}_brake_min exceeds its max bound")


@dataclass(frozen=True)
class FeasibilityReport:
    """sigma plus every intermediate quantity for one frame."""

    sigma: float
    d_limit_x: float
    d_limit_y: float
    clearance_x: float
    clearance_y: float
    t_x: float
    t_y: float
    t: float
    colliding_axis: str
    l_x: float
    l_y: float
    mode: str
    rel: RelativeFrame = field(repr=False, compare=False, default=None)


def limit_lon_opposite(v_r: float, v_f: float, a_r: float, a_f: float) -> float:
    """Head-on braking-limit distance: both stopping distances summed.

    Speeds are non-negative magnitudes along the axis toward each other.
    """
    return v_r * v_r / (2.0 * a_r) + v_f * v_f / (2.0 * a_f)


def limit_lon_same(v_r: float, v_f: float, a_r: float, a_f: float) -> float:
    """Same-direction braking-limit distance, rear behind front.

    Maximum of the two necessary lower bounds: the full-stop gap and, when a
    closing interaction occurs (v_r > v_f, a_r > a_f), the minimum gap at the
    speed-equalization instant.  The equalization bound only describes the
    trajectory while the front is still moving, so it applies only when the
    speeds equalize no later than the front stops (v_r * a_f <= v_f * a_r);
    past that point the binding constraint is the full-stop gap.  Clamped
    at zero.
    """
    stop = v_r * v_r / (2.0 * a_r) - v_f * v_f / (2.0 * a_f)
    d = stop
    if v_r > v_f and a_r > a_f and v_r * a_f <= v_f * a_r:
        dv = v_r - v_f
        d = max(d, dv * dv / (2.0 * (a_r - a_f)))
    return max(0.0, d)


def limit_lat(v_r: float, v_f: float, a_r: float, a_f: float, direction: str) -> float:
    """Lateral braking-limit distance (r = left vehicle, f = right vehicle).

    Speeds follow the toward-the-other convention of the longitudinal
    variants: non-negative components along left->right for ``same``, toward
    each other for ``opposite``.
    """
    if direction == SAME:
        return max(0.0, v_r * v_r / (2.0 * a_r) - v_f * v_f / (2.0 * a_f))
    if direction == OPPOSITE:
        return v_r * v_r / (2.0 * a_r) + v_f * v_f / (2.0 * a_f)
    raise ValueError(f"unknown direction {direction!r}")


def conservative_rss(
    v_r: float,
    v_f: float,
    axis: str,
    direction: str,
    params: FeasibilityParams,
    rear_is_ego: bool = True,
) -> float:
    """Conservative RSS safe distance with reaction window rho.

    Reaction-updated speeds use the maximal accelerations during the window
    and the *minimum* braking bounds afterwards; the lateral formula adds the
    fluctuation buffer mu and ignores ``direction`` (RSS has a single lateral
    form).  With rho = 0 and brake_min = brake_max this reduces to the
    physics-limit distances.
    """
    rho = params.rho
    r_party, f_party = ("ego", "npc") if rear_is_ego else ("npc", "ego")

    def p(name: str, party: str) -> float:
        return getattr(params, f"a_{party}_{name}")

    if axis == AXIS_LON:
        acc_r = p("lon_accel_max", r_party)
        acc_f = p("lon_accel_max", f_party)
        bmin_r = p("lon_brake_min", r_party)
        bmin_f = p("lon_brake_min", f_party)
        bmax_f = p("lon_brake_max", f_party)
        v_r_rho = v_r + rho * acc_r
        v_f_rho = v_f + rho * acc_f
        if direction == OPPOSITE:
            return (
                0.5 * (v_r + v_r_rho) * rho
                + v_r_rho * v_r_rho / (2.0 * bmin_r)
                + 0.5 * (abs(v_f) + abs(v_f_rho)) * rho
                + v_f_rho * v_f_rho / (2.0 * bmin_f)
            )
        if direction == SAME:
            return max(
                0.0,
                v_r * rho
                + 0.5 * acc_r * rho * rho
                + v_r_rho * v_r_rho / (2.0 * bmin_r)
                - v_f * v_f / (2.0 * bmax_f),
            )
        raise ValueError(f"unknown direction {direction!r}")

    if axis == AXIS_LAT:
        acc_r = p("lat_accel_max", r_party)
        acc_f = p("lat_accel_max", f_party)
        bmin_r = p("lat_brake_min", r_party)
        bmin_f = p("lat_brake_min", f_party)
        v_r_rho = v_r + rho * acc_r
        v_f_rho = v_f + rho * acc_f
        err = (
            0.5 * (v_r + v_r_rho) * rho
            + v_r_rho * v_r_rho / (2.0 * bmin_r)
            - (0.5 * (abs(v_f) + abs(v_f_rho)) * rho - v_f_rho * v_f_rho / (2.0 * bmin_f))
        )
        return params.min_lat_safe + max(0.0, err)

    raise ValueError(f"unknown axis {axis!r}")


def axial_ttc(rel: RelativeFrame, params: FeasibilityParams) -> tuple[float, float, float, str]:
    """Axial time to collision from clamped clearances and closing speeds.

    Non-closing axes get the far cap; ties between closing axes resolve to
    the longitudinal axis for determinism.
    """
    cap = params.far_cap

    def one(clearance: float, dv: float) -> float:
        if dv <= 0.0:
            return cap
        return min(cap, max(0.0, clearance) / max(dv, params.ttc_floor))

    t_x = one(rel.clearance_x, rel.dv_x)
    t_y = one(rel.clearance_y, rel.dv_y)

    closing_x = rel.dv_x > 0.0
    closing_y = rel.dv_y > 0.0
    if not closing_x and not closing_y:
        return (t_x, t_y, cap, AXIS_NONE)
    if closing_x and (not closing_y or t_x <= t_y):
        return (t_x, t_y, min(t_x, t_y), AXIS_LON)
    return (t_x, t_y, min(t_x, t_y), AXIS_LAT)


def orthogonal_compensation(
    t: float, colliding_axis: str, dv_n: float, params: FeasibilityParams
) -> tuple[float, float]:
    """Reachable displacement credited on the axis orthogonal to the
    imminent collision: (1/2) a_rel t^2, only while that axis is closing.

    a_rel on an axis is the sum of both parties' maximal feasible braking
    magnitudes there; t is capped before squaring.
    """
    if colliding_axis == AXIS_NONE:
        return (0.0, 0.0)
    t = min(t, params.far_cap)
    if dv_n <= 0.0:
        return (0.0, 0.0)
    if colliding_axis == AXIS_LON:
        a_rel = params.a_ego_lat_brake_max + params.a_npc_lat_brake_max
        return (0.0, 0.5 * a_rel * t * t)
    if colliding_axis == AXIS_LAT:
        a_rel = params.a_ego_lon_brake_max + params.a_npc_lon_brake_max
        return (0.5 * a_rel * t * t, 0.0)
    raise ValueError(f"unknown axis {colliding_axis!r}")


def _axis_roles(rel: RelativeFrame, ego: KinematicState, adv: KinematicState):
    """Per-axis (u_r, u_f, rear_is_ego) with speeds projected on the r->f direction.

    Longitudinal: r is the vehicle with the smaller body-frame x coordinate,
    direction +x.  Lateral: r is the left (larger y) vehicle, direction -y.
    """
    c, s = math.cos(rel.delta_psi), math.sin(rel.delta_psi)
    adv_vx = c * adv.v_lon - s * adv.v_lat
    adv_vy = s * adv.v_lon + c * adv.v_lat
    ego_vx, ego_vy = ego.v_lon, ego.v_lat

    if rel.d_x_actual >= 0.0:
        lon = (ego_vx, adv_vx, True)
    else:
        lon = (adv_vx, ego_vx, False)

    if rel.d_y_actual >= 0.0:
        lat = (-adv_vy, -ego_vy, False)
    else:
        lat = (-ego_vy, -adv_vy, True)
    return lon, lat


def _direction_class(delta_psi: float, threshold: float) -> str:
    a = abs(wrap_angle(delta_psi))
    if a <= threshold or a >= math.pi - threshold:
        return SAME
    return OPPOSITE


def _d_limit(
    axis: str,
    direction: str,
    u_r: float,
    u_f: float,
    rear_is_ego: bool,
    params: FeasibilityParams,
    mode: str,
) -> float:
    r_party, f_party = ("ego", "npc") if rear_is_ego else ("npc", "ego")
    a_r = getattr(params, f"a_{r_party}_{axis}_brake_max")
    a_f = getattr(params, f"a_{f_party}_{axis}_brake_max")

    if direction == SAME:
        v_r, v_f = max(0.0, u_r), max(0.0, u_f)
    else:
        v_r, v_f = max(0.0, u_r), max(0.0, -u_f)

    if mode == CONSERVATIVE_RSS:
        return conservative_rss(v_r, v_f, axis, direction, params, rear_is_ego)
    if mode != PHYSICS_LIMIT:
        raise ValueError(f"unknown mode {mode!r}")
    if axis == AXIS_LON:
        if direction == SAME:
            return limit_lon_same(v_r, v_f, a_r, a_f)
        return limit_lon_opposite(v_r, v_f, a_r, a_f)
    return limit_lat(v_r, v_f, a_r, a_f, direction)


def sigma(
    ego: KinematicState,
    adv: KinematicState,
    params: FeasibilityParams,
    mode: str = PHYSICS_LIMIT,
) -> FeasibilityReport:
    """Unified physical safety score for one ego-adversary frame.

    sigma = 1 - || [d_limit - (clearance + l)]_+ / d_limit ||_p over the two
    body axes.  An axis whose limit is zero cannot be violated and
    contributes a zero residual.  Degenerate inputs (coincident centers)
    produce strongly negative sigma rather than an error.
    """
    rel = relative_frame(ego, adv)
    direction = _direction_class(rel.delta_psi, params.same_dir_yaw_threshold)
    (lon_ur, lon_uf, lon_rear_ego), (lat_ur, lat_uf, lat_rear_ego) = _axis_roles(rel, ego, adv)

    d_lim_x = _d_limit(AXIS_LON, direction, lon_ur, lon_uf, lon_rear_ego, params, mode)
    d_lim_y = _d_limit(AXIS_LAT, direction, lat_ur, lat_uf, lat_rear_ego, params, mode)

    t_x, t_y, t, axis = axial_ttc(rel, params)
    dv_n = rel.dv_y if axis == AXIS_LON else rel.dv_x
    l_x, l_y = orthogonal_compensation(t, axis, dv_n, params)

    def residual(d_limit: float, clearance: float, l: float) -> float:
        if d_limit <= 0.0:
            return 0.0
        shortfall = max(0.0, d_limit - (clearance + l))
        return shortfall / max(d_limit, _DLIMIT_FLOOR)

    r_x = residual(d_lim_x, rel.clearance_x, l_x)
    r_y = residual(d_lim_y, rel.clearance_y, l_y)
    p = params.p_norm
    value = 1.0 - (r_x**p + r_y**p) ** (1.0 / p)

    return FeasibilityReport(
        sigma=value,
        d_limit_x=d_lim_x,
        d_limit_y=d_lim_y,
        clearance_x=rel.clearance_x,
        clearance_y=rel.clearance_y,
        t_x=t_x,
        t_y=t_y,
        t=t,
        colliding_axis=axis,
        l_x=l_x,
        l_y=l_y,
        mode=mode,
        rel=rel,
    )
