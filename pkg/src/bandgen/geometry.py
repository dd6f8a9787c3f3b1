"""Planar rigid-body geometry: body-frame transforms, yaw-dependent footprint
envelopes, edge-to-edge clearances, and exact oriented-box overlap tests.

All vehicles are rectangles described by a center pose and *half* extents:
``half_length`` along the body x axis (forward), ``half_width`` along body y
(left).  Every function here is pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = a - TWO_PI * math.floor((a + math.pi) / TWO_PI)
    # floor() maps the upper boundary to -pi; push it back to +pi
    if w <= -math.pi:
        w += TWO_PI
    return w


@dataclass(frozen=True)
class KinematicState:
    """Pose, body-frame velocity and footprint of one vehicle.

    ``v_lon``/``v_lat`` are the velocity components along the body x/y axes.
    ``half_length``/``half_width`` must be positive; yaw is normalized to
    (-pi, pi] at construction.
    """

    x: float
    y: float
    yaw: float
    v_lon: float
    v_lat: float
    half_length: float
    half_width: float

    def __post_init__(self) -> None:
        if not (self.half_length > 0.0 and self.half_width > 0.0):
            raise ValueError("half_length and half_width must be positive")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def world_velocity(self) -> tuple[float, float]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (c * self.v_lon - s * self.v_lat, s * self.v_lon + c * self.v_lat)

    def speed(self) -> float:
        return math.hypot(self.v_lon, self.v_lat)


@dataclass(frozen=True)
class RelativeFrame:
    """Adversary geometry expressed in the ego body frame.

    ``clearance_x/y`` are signed edge-to-edge clearances: the absolute
    center offset minus the projected envelope on that axis (negative means
    the envelopes overlap on that axis).  ``dv_x/y`` are closing speeds of
    those clearances; positive means the gap is shrinking.
    """

    d_x_actual: float
    d_y_actual: float
    delta_psi: float
    s_x: float
    s_y: float
    clearance_x: float
    clearance_y: float
    dv_x: float
    dv_y: float


def to_ego_frame(ego: KinematicState, adv: KinematicState) -> tuple[float, float]:
    """Rotate the adversary center into the ego body frame: R(-yaw_ego) (p_adv - p_ego)."""
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    dx, dy = adv.x - ego.x, adv.y - ego.y
    return (c * dx + s * dy, -s * dx + c * dy)


def envelope(ego: KinematicState, adv: KinematicState) -> tuple[float, float]:
    """Projected footprint envelope of the pair under the relative yaw.

    s_x = L_ego + |cos dpsi| L_adv + |sin dpsi| W_adv, and analogously for
    s_y with the adversary terms swapped.  Extents are half-extents, so
    |center offset| - s is a true edge-to-edge clearance.
    """
    dpsi = wrap_angle(adv.yaw - ego.yaw)
    ac, as_ = abs(math.cos(dpsi)), abs(math.sin(dpsi))
    s_x = ego.half_length + ac * adv.half_length + as_ * adv.half_width
    s_y = ego.half_width + ac * adv.half_width + as_ * adv.half_length
    return (s_x, s_y)


def _sign_or_one(v: float) -> float:
    return -1.0 if v < 0.0 else 1.0


def relative_frame(ego: KinematicState, adv: KinematicState) -> RelativeFrame:
    """Full relative-state summary used by the feasibility score.

    Closing speeds are -d/dt of |d_a_actual| with both world velocities
    projected into the ego frame at the current instant (frame treated as
    momentarily inertial).
    """
    d_x, d_y = to_ego_frame(ego, adv)
    s_x, s_y = envelope(ego, adv)
    dpsi = wrap_angle(adv.yaw - ego.yaw)

    evx, evy = ego.world_velocity()
    avx, avy = adv.world_velocity()
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    rvx_w, rvy_w = avx - evx, avy - evy
    rel_vx = c * rvx_w + s * rvy_w
    rel_vy = -s * rvx_w + c * rvy_w

    dv_x = -_sign_or_one(d_x) * rel_vx
    dv_y = -_sign_or_one(d_y) * rel_vy

    return RelativeFrame(
        d_x_actual=d_x,
        d_y_actual=d_y,
        delta_psi=dpsi,
        s_x=s_x,
        s_y=s_y,
        clearance_x=abs(d_x) - s_x,
        clearance_y=abs(d_y) - s_y,
        dv_x=dv_x,
        dv_y=dv_y,
    )


def obb_axes(state: KinematicState) -> tuple[tuple[float, float], tuple[float, float]]:
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    return ((c, s), (-s, c))


def obb_corners(state: KinematicState) -> list[tuple[float, float]]:
    (ux, uy), (vx, vy) = obb_axes(state)
    hl, hw = state.half_length, state.half_width
    return [
        (state.x + sx * hl * ux + sy * hw * vx, state.y + sx * hl * uy + sy * hw * vy)
        for sx, sy in ((1, 1), (1, -1), (-1, -1), (-1, 1))
    ]


def obb_overlap(a: KinematicState, b: KinematicState) -> bool:
    """Exact oriented-rectangle intersection via the separating-axis test.

    Touching boundaries do not count as overlap (open-interior semantics),
    which makes the aligned-box envelope check exact: for dpsi = 0,
    overlap iff |d_x| < s_x and |d_y| < s_y.
    """
    dx, dy = b.x - a.x, b.y - a.y
    axes = obb_axes(a) + obb_axes(b)
    ext_a = (a.half_length, a.half_width)
    ext_b = (b.half_length, b.half_width)
    a_axes, b_axes = obb_axes(a), obb_axes(b)
    for ax, ay in axes:
        ra = sum(e * abs(ax * ux + ay * uy) for e, (ux, uy) in zip(ext_a, a_axes))
        rb = sum(e * abs(ax * ux + ay * uy) for e, (ux, uy) in zip(ext_b, b_axes))
        if abs(ax * dx + ay * dy) >= ra + rb:
            return False
    return True
