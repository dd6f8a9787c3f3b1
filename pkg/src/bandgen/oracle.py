"""Independent brute-force collision-avoidability checkers.

These validate the feasibility score's semantics from below: exhaustive
search over discretized bounded control sequences, entirely separate from
the closed-form braking-limit formulas.

1-D: the adversary brakes at its bound; the searched vehicle re-chooses a
brake level from a uniform grid every step.  States with equal speed merge
(keeping the best gap), which makes the exhaustive search polynomial.

2-D: the adversary brakes both body-axis speeds toward zero at its bounds;
the ego is searched over an independent-axis (braking x steering) control
grid re-chosen every few steps, with translating fixed-yaw footprints.
Exceeding the search budget yields "unknown" rather than a verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .feasibility import (
    OPPOSITE,
    PHYSICS_LIMIT,
    SAME,
    FeasibilityParams,
    limit_lon_opposite,
    limit_lon_same,
    sigma,
)
from .geometry import KinematicState, to_ego_frame, wrap_angle

AVOIDABLE = "avoidable"
UNAVOIDABLE = "unavoidable"
UNKNOWN = "unknown"

EGO_REAR = "rear"
EGO_FRONT = "front"


@dataclass(frozen=True)
class OracleResult:
    verdict: str
    steps: int
    note: str = ""


def discrete_stop_travel(v: float, a: float, dt: float) -> float:
    """Exact travel of semi-implicit braking from speed v to rest."""
    if v <= 0.0 or a <= 0.0:
        return 0.0
    k = math.floor(v / (a * dt))
    return (k * v - a * dt * k * (k + 1) / 2.0) * dt


def braking_oracle_1d(
    gap: float,
    v_r: float,
    v_f: float,
    a_r_max: float,
    a_f_max: float,
    direction: str,
    ego_role: str = EGO_REAR,
    dt: float = 0.01,
    levels: int = 5,
    max_steps: int = 200_000,
) -> OracleResult:
    """Exhaustive per-step brake search for a 1-D two-vehicle configuration.

    The adversary holds its maximal deceleration throughout; the ego picks
    any of ``levels`` evenly spaced brake levels each step.  Collision means
    the gap goes negative.  Ego speeds with identical values merge, keeping
    the largest surviving gap, so the frontier is one gap per lattice speed.
    """
    if direction not in (SAME, OPPOSITE):
        raise ValueError(f"unknown direction {direction!r}")
    if ego_role not in (EGO_REAR, EGO_FRONT):
        raise ValueError(f"unknown ego_role {ego_role!r}")
    if min(v_r, v_f) < 0.0:
        raise ValueError("speeds must be non-negative magnitudes")
    if gap < 0.0:
        return OracleResult(UNAVOIDABLE, 0, "initial penetration")

    if ego_role == EGO_REAR:
        v_ego, a_ego = v_r, a_r_max
        v_adv, a_adv = v_f, a_f_max
    else:
        v_ego, a_ego = v_f, a_f_max
        v_adv, a_adv = v_r, a_r_max

    # Signed gap rate per unit velocity: how each vehicle's speed moves the gap.
    # same:     d(gap)/dt = v_front - v_rear;  opposite: d(gap)/dt = -(v_r + v_f)
    if direction == SAME:
        ego_sign = -1.0 if ego_role == EGO_REAR else +1.0
        adv_sign = -ego_sign
    else:
        ego_sign = -1.0
        adv_sign = -1.0

    q = a_ego * dt / (levels - 1)  # ego speed-lattice step
    if q <= 0.0:
        raise ValueError("ego brake bound must be positive")
    m_stop = int(math.ceil(v_ego / q)) if v_ego > 0.0 else 0

    # frontier[m] = best gap for ego speed max(0, v_ego - m q); -inf = dead/absent
    frontier = np.full(m_stop + 1, -np.inf)
    frontier[0] = gap
    ego_speed = np.maximum(0.0, v_ego - q * np.arange(m_stop + 1))

    adv_steps = int(math.ceil(v_adv / (a_adv * dt))) if v_adv > 0.0 else 0
    total_steps = adv_steps
    if total_steps > max_steps:
        return OracleResult(UNAVOIDABLE, total_steps, "horizon overflow")

    v_adv_t = v_adv
    for step in range(total_steps):
        v_adv_t = max(0.0, v_adv_t - a_adv * dt)
        # expand within the reachable window: level j shifts the lattice
        # index by j, with shifts past the rest index pooling at rest
        hi = min(m_stop, (levels - 1) * (step + 1))
        candidate = frontier[: hi + 1].copy()
        for j in range(1, levels):
            src_hi = hi - j
            if src_hi >= 0:
                np.maximum(candidate[j:], frontier[: src_hi + 1], out=candidate[j:])
            if hi == m_stop:
                tail = frontier[max(0, m_stop - j) : m_stop + 1].max()
                candidate[m_stop] = max(candidate[m_stop], tail)
        candidate += (ego_sign * ego_speed[: hi + 1] + adv_sign * v_adv_t) * dt
        candidate[candidate < 0.0] = -np.inf
        frontier[: hi + 1] = candidate
        if not np.isfinite(candidate).any():
            return OracleResult(UNAVOIDABLE, step + 1, "all branches collide")

    # adversary at rest: resolve the remaining 1-D problem in closed form
    alive = np.isfinite(frontier)
    if direction == SAME and ego_role == EGO_FRONT:
        # stopped rear, ego in front moving away or holding: any survivor avoids
        return OracleResult(AVOIDABLE if alive.any() else UNAVOIDABLE, total_steps)
    best = -np.inf
    for m in np.nonzero(alive)[0]:
        best = max(best, frontier[m] - discrete_stop_travel(float(ego_speed[m]), a_ego, dt))
    if best >= 0.0:
        return OracleResult(AVOIDABLE, total_steps)
    return OracleResult(UNAVOIDABLE, total_steps, "no surviving stop")


@dataclass(frozen=True)
class OracleResult2D:
    verdict: str
    stages: int
    states_explored: int
    exhaustive: bool
    note: str = ""


FROZEN_ADVERSARY = "frozen"
BRAKING_ADVERSARY = "braking"


def _adversary_trajectory(
    ego: KinematicState,
    adv: KinematicState,
    params: FeasibilityParams,
    dt: float,
    n_steps: int,
    model: str = FROZEN_ADVERSARY,
) -> tuple[np.ndarray, float]:
    """Adversary positions in the ego's initial frame.

    "frozen" holds the current velocities (the score's instantaneous-closing
    assumption); "braking" decays both body-axis speeds toward zero at the
    adversary's braking bounds.  Returns (positions, dpsi).
    """
    dpsi = wrap_angle(adv.yaw - ego.yaw)
    x0, y0 = to_ego_frame(ego, adv)
    v_lon, v_lat = adv.v_lon, adv.v_lat
    c, s = math.cos(dpsi), math.sin(dpsi)
    pos = np.empty((n_steps + 1, 2))
    pos[0] = (x0, y0)
    x, y = x0, y0
    for k in range(1, n_steps + 1):
        if model == BRAKING_ADVERSARY:
            v_lon = math.copysign(max(0.0, abs(v_lon) - params.a_npc_lon_brake_max * dt), v_lon)
            v_lat = math.copysign(max(0.0, abs(v_lat) - params.a_npc_lat_brake_max * dt), v_lat)
        elif model != FROZEN_ADVERSARY:
            raise ValueError(f"unknown adversary model {model!r}")
        x += (c * v_lon - s * v_lat) * dt
        y += (s * v_lon + c * v_lat) * dt
        pos[k] = (x, y)
    return pos, dpsi


OBB_MODEL = "obb"
ENVELOPE_MODEL = "envelope"


def escape_oracle_2d(
    ego: KinematicState,
    adv: KinematicState,
    params: FeasibilityParams,
    dt: float = 0.1,
    horizon_s: float = 5.0,
    grid: int = 5,
    stage_len: int = 5,
    max_states: int = 400_000,
    corridor_half_width: float | None = None,
    collision_model: str = OBB_MODEL,
    adversary_model: str = FROZEN_ADVERSARY,
    n_sub: int = 5,
) -> OracleResult2D:
    """Search for any ego braking+steering plan avoiding contact.

    Controls are independent-axis accelerations in the ego's initial body
    frame: longitudinal levels in [-lon_brake, 0] (braking only, forward
    speed clamped at zero) and lateral levels in [-lat_brake, +lat_brake],
    re-chosen every ``stage_len`` control steps of length ``dt``.  Kinematics
    and contact checks run on ``n_sub`` substeps per control step so fast
    crossings cannot tunnel between checks.  Footprints translate with
    frozen yaws.  ``corridor_half_width`` kills plans leaving a lateral
    corridor around the start position (0 models a walled lane).

    ``collision_model`` selects the contact test: exact oriented-box overlap
    ("obb"), or overlap of the per-axis projected envelopes ("envelope"),
    the geometric abstraction the feasibility score itself reasons in.
    ``adversary_model`` fixes the adversary's future: held velocities
    ("frozen", the score's instantaneous-closing reading) or braking to rest
    at its bounds ("braking").
    """
    dt_f = dt / n_sub
    n_fine = int(round(horizon_s / dt_f))
    stage_fine = stage_len * n_sub
    n_stages = (n_fine + stage_fine - 1) // stage_fine
    adv_pos, dpsi = _adversary_trajectory(ego, adv, params, dt_f, n_fine, adversary_model)

    ego_u = np.array([(1.0, 0.0), (0.0, 1.0)])
    adv_u = np.array([(math.cos(dpsi), math.sin(dpsi)), (-math.sin(dpsi), math.cos(dpsi))])
    ego_ext = np.array([ego.half_length, ego.half_width])
    adv_ext = np.array([adv.half_length, adv.half_width])
    if collision_model == OBB_MODEL:
        # SAT axes for the fixed pair of yaws, with combined projection radii
        axes = np.vstack([ego_u, adv_u])
        r_sum = np.abs(axes @ ego_u.T) @ ego_ext + np.abs(axes @ adv_u.T) @ adv_ext  # (4,)
    elif collision_model == ENVELOPE_MODEL:
        axes = ego_u.copy()
        r_sum = ego_ext + np.abs(ego_u @ adv_u.T) @ adv_ext  # (s_x, s_y)
    else:
        raise ValueError(f"unknown collision model {collision_model!r}")

    def overlapping(delta: np.ndarray) -> np.ndarray:
        """delta: (N, 2) adversary-minus-ego centers -> (N,) overlap mask."""
        proj = np.abs(delta @ axes.T)
        return (proj < r_sum).all(axis=1)

    contact_radius = float(np.hypot(r_sum[0], r_sum[1]))
    a_env = math.hypot(params.a_ego_lon_brake_max, params.a_ego_lat_brake_max) + math.hypot(
        params.a_npc_lon_brake_max, params.a_npc_lat_brake_max
    )

    def guaranteed_clear(state: np.ndarray, step: int) -> np.ndarray:
        """Sound early-success bound: no contact possible through the horizon."""
        t_rem = (n_fine - step) * dt_f
        delta = adv_pos[step] - state[:, :2]
        dist = np.hypot(delta[:, 0], delta[:, 1])
        avx = (adv_pos[min(step + 1, n_fine)] - adv_pos[step]) / dt_f
        v_rel = np.hypot(avx[0] - state[:, 2], avx[1] - state[:, 3])
        return dist - v_rel * t_rem - 0.5 * a_env * t_rem * t_rem > contact_radius

    lon_levels = np.linspace(-params.a_ego_lon_brake_max, 0.0, grid)
    lat_levels = np.linspace(-params.a_ego_lat_brake_max, params.a_ego_lat_brake_max, grid)
    controls = np.array([(ax, ay) for ax in lon_levels for ay in lat_levels])

    def advance(state: np.ndarray, alive: np.ndarray, ctrl: np.ndarray,
                k_from: int, k_to: int) -> None:
        """Integrate alive rows in place over fine steps [k_from, k_to)."""
        for k in range(k_from, k_to):
            state[alive, 2] = np.maximum(0.0, state[alive, 2] + ctrl[alive, 0] * dt_f)
            state[alive, 3] = state[alive, 3] + ctrl[alive, 1] * dt_f
            state[alive, 0] += state[alive, 2] * dt_f
            state[alive, 1] += state[alive, 3] * dt_f
            hit = overlapping(adv_pos[k + 1] - state[alive, :2])
            if corridor_half_width is not None:
                hit |= np.abs(state[alive, 1]) > corridor_half_width + 1e-12
            idx = np.nonzero(alive)[0]
            alive[idx[hit]] = False
            if not alive.any():
                return

    # state rows: x, y, vx, vy in the ego initial frame
    states = np.array([[0.0, 0.0, max(0.0, ego.v_lon), ego.v_lat]])
    if overlapping(adv_pos[0:1] - states[:, :2])[0]:
        return OracleResult2D(UNAVOIDABLE, 0, 1, True, "initial overlap")
    if guaranteed_clear(states, 0)[0]:
        return OracleResult2D(AVOIDABLE, 0, 1, True, "separation prune")

    # cheap witness pass: any constant control surviving the horizon proves
    # avoidability before the staged search expands
    cand = np.repeat(states, len(controls), axis=0)
    c_alive = np.ones(cand.shape[0], dtype=bool)
    advance(cand, c_alive, controls, 0, n_fine)
    if c_alive.any():
        return OracleResult2D(AVOIDABLE, 0, 1 + len(controls), True, "constant-plan witness")

    explored = 1 + len(controls)
    exhaustive = True
    step = 0
    for stage in range(n_stages):
        n = states.shape[0]
        children = np.repeat(states, len(controls), axis=0)
        ctrl = np.tile(controls, (n, 1))
        if children.shape[0] > max_states:
            children = children[:max_states]
            ctrl = ctrl[:max_states]
            exhaustive = False
        alive = np.ones(children.shape[0], dtype=bool)
        sub_end = min(step + stage_fine, n_fine)
        advance(children, alive, ctrl, step, sub_end)
        explored += children.shape[0]
        step = sub_end
        states = children[alive]
        if states.shape[0] == 0:
            if exhaustive:
                return OracleResult2D(UNAVOIDABLE, stage + 1, explored, True)
            return OracleResult2D(UNKNOWN, stage + 1, explored, False, "budget exceeded")
        if step >= n_fine:
            return OracleResult2D(AVOIDABLE, stage + 1, explored, exhaustive, "survived horizon")
        if guaranteed_clear(states, step).any():
            return OracleResult2D(AVOIDABLE, stage + 1, explored, exhaustive, "separation prune")

    return OracleResult2D(AVOIDABLE, n_stages, explored, exhaustive, "survived horizon")


# -- randomized soundness campaigns -------------------------------------------
#
# The 1-D campaign validates the sign of the longitudinal residual
# (d_limit - gap) against the braking search; the searched vehicle is the
# rear one, matching the semantics of the same-direction formula (the rear
# must be able to avoid given a worst-case braking front).  Configurations
# whose braking boundary is smaller than a few multiples of the oracle's
# per-step resolution are re-drawn, so the 5% tolerance band genuinely
# dominates time-discretization error.


def soundness_campaign_1d(
    cases: int,
    params: FeasibilityParams,
    seed: int = 0,
    band: float = 0.05,
    dt: float = 0.005,
) -> dict:
    rng = np.random.default_rng((seed, 11))
    agree = disagree = excluded = 0
    hard_violations = 0
    done = 0
    while done < cases:
        direction = SAME if rng.random() < 0.5 else OPPOSITE
        v_r = rng.uniform(2.0, 12.0)
        v_f = rng.uniform(0.0, 12.0)
        a_r = rng.uniform(2.0, 4.5)
        a_f = rng.uniform(2.0, 4.5)
        if direction == SAME:
            d_limit = limit_lon_same(v_r, v_f, a_r, a_f)
            closing = max(0.0, v_r - v_f)
        else:
            d_limit = limit_lon_opposite(v_r, v_f, a_r, a_f)
            closing = v_r + v_f
        if d_limit > 0.0 and d_limit < max(0.25, 30.0 * closing * dt):
            continue
        done += 1

        gap = d_limit * rng.uniform(0.3, 1.9) if d_limit > 0.0 else rng.uniform(0.2, 30.0)
        residual = d_limit - gap
        normalized = residual / max(d_limit, 1e-6)
        result = braking_oracle_1d(gap, v_r, v_f, a_r, a_f, direction, EGO_REAR, dt=dt)

        if abs(normalized) < band:
            excluded += 1
            continue
        says_unavoidable = residual > 0.0
        if says_unavoidable == (result.verdict == UNAVOIDABLE):
            agree += 1
        else:
            disagree += 1
            if says_unavoidable and result.verdict == AVOIDABLE:
                hard_violations += 1
    counted = agree + disagree
    return {
        "cases": cases,
        "band_excluded": excluded,
        "counted": counted,
        "agreements": agree,
        "disagreements": disagree,
        "agreement_rate": agree / counted if counted else 1.0,
        "unavoidable_but_oracle_avoids": hard_violations,
    }


def joint_contact_time(rel) -> float | None:
    """Earliest instant both axis envelopes are simultaneously engaged under
    held closing speeds, or None when the per-axis engagement intervals never
    intersect (the pair passes by under current motion)."""
    windows = []
    for d, s, dv in (
        (rel.d_x_actual, rel.s_x, rel.dv_x),
        (rel.d_y_actual, rel.s_y, rel.dv_y),
    ):
        ad = abs(d)
        if dv > 1e-12:
            t_in = max(0.0, (ad - s) / dv)
            t_out = (ad + s) / dv
        elif ad < s:
            t_in = 0.0
            t_out = (s - ad) / (-dv) if dv < -1e-12 else math.inf
        else:
            return None
        windows.append((t_in, t_out))
    t_c = max(windows[0][0], windows[1][0])
    t_e = min(windows[0][1], windows[1][1])
    return t_c if t_c < t_e else None


def sample_2d_state(
    rng: np.random.Generator, params: FeasibilityParams
) -> tuple[KinematicState, KinematicState]:
    """Random adversary-approaches-ego configuration for the soundness
    campaign.

    Draws are scoped to the domain the distance formulas are defined for:
    the adversary sits in the ego's frontal sector (d_x >= 0) with a
    relative yaw in the same- or opposite-direction regime, both envelope
    clearances positive (a pre-contact approach state), and the pair on a
    joint collision course under held closing speeds.  Half the draws are
    biased to close range so deeply infeasible frames occur.
    """
    from .geometry import relative_frame

    while True:
        ego = KinematicState(
            0.0, 0.0, 0.0,
            v_lon=rng.uniform(2.0, 12.0), v_lat=rng.uniform(-1.0, 1.0),
            half_length=2.4, half_width=1.0,
        )
        if rng.random() < 0.5:
            dpsi = rng.uniform(-math.radians(30.0), math.radians(30.0))
        else:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            dpsi = sign * rng.uniform(math.radians(150.0), math.pi)
        theta = rng.uniform(-1.3, 1.3)
        r = rng.uniform(3.0, 12.0) if rng.random() < 0.5 else rng.uniform(8.0, 35.0)
        adv = KinematicState(
            r * math.cos(theta), r * math.sin(theta), dpsi,
            v_lon=rng.uniform(0.0, 12.0), v_lat=rng.uniform(-1.0, 1.0),
            half_length=2.4, half_width=1.0,
        )
        rel = relative_frame(ego, adv)
        if rel.clearance_x <= 0.0 or rel.clearance_y <= 0.0:
            continue
        if joint_contact_time(rel) is None:
            continue
        return ego, adv


def soundness_campaign_2d(
    cases: int,
    params: FeasibilityParams,
    seed: int = 0,
    band: float = 0.05,
    dt: float = 0.1,
    horizon_s: float = 5.0,
) -> dict:
    rng = np.random.default_rng((seed, 22))
    flagged = confirmed = unknowns = violations = 0
    feasible_unavoidable = 0
    for _ in range(cases):
        ego, adv = sample_2d_state(rng, params)
        report = sigma(ego, adv, params, PHYSICS_LIMIT)
        result = escape_oracle_2d(ego, adv, params, dt=dt, horizon_s=horizon_s)
        if report.sigma < -band:
            flagged += 1
            if result.verdict == UNAVOIDABLE:
                confirmed += 1
            elif result.verdict == UNKNOWN:
                unknowns += 1
            else:
                violations += 1
        elif report.sigma >= 0.0 and result.verdict == UNAVOIDABLE:
            feasible_unavoidable += 1
        elif result.verdict == UNKNOWN:
            unknowns += 1
    return {
        "cases": cases,
        "sigma_below_band": flagged,
        "confirmed_unavoidable": confirmed,
        "unknowns": unknowns,
        "unknown_rate": unknowns / cases if cases else 0.0,
        "unavoidable_but_oracle_avoids": violations,
        "feasible_but_unavoidable": feasible_unavoidable,
    }
