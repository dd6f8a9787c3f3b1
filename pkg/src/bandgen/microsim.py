"""Deterministic fixed-step 2D kinematic world.

Point-mass body-frame dynamics (decoupled longitudinal/lateral accelerations,
yaw following the velocity heading) so that the vehicle model matches the
axis-decoupled feasibility model.  One scripted ego and one controllable
adversary per episode; termination on exact box overlap, route completion,
or the step cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from .episode_log import FORMAT_NAME, FORMAT_VERSION, EpisodeLog, Frame
from .feasibility import PHYSICS_LIMIT, FeasibilityParams, FeasibilityReport, sigma
from .geometry import KinematicState, obb_overlap, relative_frame, to_ego_frame, wrap_angle
from .risk import RiskCritic, center_distance, risk_features


class ConfigError(ValueError):
    """Invalid world/run configuration."""


@dataclass(frozen=True)
class ControlBounds:
    """Acceleration box for one vehicle: lon in [lon_min, lon_max], |lat| <= lat_abs.

    ``v_max`` is a sanity cap on forward speed; lon_min must equal the
    negative of the party's feasibility braking bound.
    """

    lon_min: float
    lon_max: float
    lat_abs: float
    v_max: float = 20.0

    def clamp(self, lon: float, lat: float) -> tuple[float, float, bool]:
        c_lon = min(max(lon, self.lon_min), self.lon_max)
        c_lat = min(max(lat, -self.lat_abs), self.lat_abs)
        return c_lon, c_lat, (c_lon != lon or c_lat != lat)


@dataclass(frozen=True)
class WorldConfig:
    template: str
    dt: float = 0.1
    max_episode_steps: int = 200
    ego_controller: str = "idm_pursuit"
    ego_target_speed: float = 8.0
    ego_route: tuple[tuple[float, float], ...] = ()
    ego_spawn: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 8.0)  # x, y, yaw, speed
    adv_spawn: tuple[float, float, float, float] = (0.0, 50.0, math.pi, 8.0)
    ego_bounds: ControlBounds = field(default_factory=lambda: ControlBounds(-3.0, 2.0, 2.0))
    adv_bounds: ControlBounds = field(default_factory=lambda: ControlBounds(-4.0, 3.0, 1.5))
    ego_half_length: float = 2.4
    ego_half_width: float = 1.0
    adv_half_length: float = 2.4
    adv_half_width: float = 1.0
    adv_pos_jitter: float = 4.0
    adv_speed_jitter: float = 1.0
    route_complete_dist: float = 2.0

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")
        if len(self.ego_route) < 2:
            raise ConfigError("ego_route needs at least two waypoints")
        if self.max_episode_steps < 1:
            raise ConfigError("max_episode_steps must be >= 1")

    def validate_against(self, params: FeasibilityParams) -> None:
        """Control bounds must agree with the feasibility braking bounds."""
        checks = [
            (-self.ego_bounds.lon_min, params.a_ego_lon_brake_max, "ego lon brake"),
            (self.ego_bounds.lat_abs, params.a_ego_lat_brake_max, "ego lat bound"),
            (-self.adv_bounds.lon_min, params.a_npc_lon_brake_max, "adversary lon brake"),
            (self.adv_bounds.lat_abs, params.a_npc_lat_brake_max, "adversary lat bound"),
        ]
        for have, want, what in checks:
            if abs(have - want) > 1e-9:
                raise ConfigError(
                    f"{what} bound {have} disagrees with feasibility parameter {want}"
                )


def step_vehicle(
    state: KinematicState,
    lon_accel: float,
    lat_accel: float,
    dt: float,
    bounds: ControlBounds | None = None,
) -> tuple[KinematicState, bool]:
    """Semi-implicit point-mass update.

    Velocities integrate the (clamped) accelerations first, the pose then
    integrates the new body-frame velocity, and yaw realigns with the world
    velocity heading above 0.1 m/s.  Forward speed never goes negative.
    Returns the new state and whether the accelerations were clamped.
    """
    clamped = False
    if bounds is not None:
        lon_accel, lat_accel, clamped = bounds.clamp(lon_accel, lat_accel)
    v_lon = max(0.0, state.v_lon + lon_accel * dt)
    if bounds is not None and v_lon > bounds.v_max:
        v_lon = bounds.v_max
    v_lat = state.v_lat + lat_accel * dt

    c, s = math.cos(state.yaw), math.sin(state.yaw)
    wx = c * v_lon - s * v_lat
    wy = s * v_lon + c * v_lat
    x = state.x + wx * dt
    y = state.y + wy * dt

    speed = math.hypot(wx, wy)
    if speed > 0.1:
        yaw = math.atan2(wy, wx)
        v_lon_n, v_lat_n = speed, 0.0
    else:
        yaw = state.yaw
        v_lon_n, v_lat_n = v_lon, v_lat

    return (
        replace(state, x=x, y=y, yaw=yaw, v_lon=v_lon_n, v_lat=v_lat_n),
        clamped,
    )


class Route:
    """Polyline route with arc-length projection and lookahead queries."""

    def __init__(self, waypoints: tuple[tuple[float, float], ...]):
        pts = np.asarray(waypoints, dtype=np.float64)
        if pts.shape[0] < 2:
            raise ConfigError("route needs at least two waypoints")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if (seg_len <= 1e-9).any():
            raise ConfigError("route has degenerate segments")
        self.points = pts
        self.seg = seg
        self.seg_len = seg_len
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum[-1])

    def project(self, x: float, y: float, s_min: float = 0.0) -> float:
        """Arc-length of the closest route point, monotonically >= s_min."""
        p = np.array([x, y])
        rel = p - self.points[:-1]
        t = np.clip((rel * self.seg).sum(axis=1) / (self.seg_len**2), 0.0, 1.0)
        proj = self.points[:-1] + t[:, None] * self.seg
        d2 = ((proj - p) ** 2).sum(axis=1)
        i = int(np.argmin(d2))
        s = float(self.cum[i] + t[i] * self.seg_len[i])
        return max(s, s_min)

    def point_at(self, s: float) -> tuple[float, float]:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum[1:], s, side="right"))
        i = min(i, len(self.seg_len) - 1)
        t = (s - self.cum[i]) / self.seg_len[i]
        p = self.points[i] + t * self.seg[i]
        return float(p[0]), float(p[1])

    def tangent_at(self, s: float) -> tuple[float, float]:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum[1:], s, side="right"))
        i = min(i, len(self.seg_len) - 1)
        return float(self.seg[i, 0] / self.seg_len[i]), float(self.seg[i, 1] / self.seg_len[i])

    def next_waypoint_index(self, s: float) -> int:
        i = int(np.searchsorted(self.cum, s + 1e-9, side="right"))
        return min(i, len(self.points) - 1)


@dataclass
class EgoObservation:
    """Scripted-controller input, mirroring a 4-D waypoint/speed/yaw-rate/front
    interface plus the privileged quantities the gap laws need."""

    dist_next_waypoint: float
    v_lon: float
    yaw_rate: float
    front_vehicle: bool
    gap_lon: float
    closing_lon: float
    ttc_frontal: float
    lookahead_local: tuple[float, float]
    lateral_offset: float
    target_speed: float


FRONT_SENSE_RANGE = 40.0
FRONT_CORRIDOR_HALF = 2.0


class EgoController:
    kind = "base"

    def __init__(self, bounds: ControlBounds, target_speed: float):
        self.bounds = bounds
        self.target_speed = target_speed

    def reset(self) -> None:
        pass

    def act(self, obs: EgoObservation) -> tuple[float, float]:
        raise NotImplementedError

    def _pursuit_lat(self, obs: EgoObservation) -> float:
        """Pure-pursuit lateral acceleration toward the lookahead point."""
        lx, ly = obs.lookahead_local
        ld2 = max(lx * lx + ly * ly, 1.0)
        curvature = 2.0 * ly / ld2
        v = max(obs.v_lon, 1.0)
        return min(max(curvature * v * v, -self.bounds.lat_abs), self.bounds.lat_abs)


class RouteFollowerBrake(EgoController):
    """Tracks the target speed and slams the brakes on low frontal TTC."""

    kind = "route_follower_brake"
    ttc_brake = 1.5
    kp = 1.2

    def act(self, obs: EgoObservation) -> tuple[float, float]:
        if obs.front_vehicle and obs.ttc_frontal < self.ttc_brake:
            return self.bounds.lon_min, self._pursuit_lat(obs)
        lon = self.kp * (obs.target_speed - obs.v_lon)
        return lon, self._pursuit_lat(obs)


class IdmPursuit(EgoController):
    """IDM longitudinal gap law plus pure-pursuit lateral tracking."""

    kind = "idm_pursuit"
    headway = 1.5
    min_gap = 2.0
    comfort_brake = 2.0
    delta = 4.0

    def act(self, obs: EgoObservation) -> tuple[float, float]:
        a_max = self.bounds.lon_max
        v = obs.v_lon
        free = 1.0 - (v / max(obs.target_speed, 0.1)) ** self.delta
        interaction = 0.0
        if obs.front_vehicle:
            s = max(obs.gap_lon, 0.1)
            s_star = self.min_gap + max(
                0.0,
                v * self.headway
                + v * obs.closing_lon / (2.0 * math.sqrt(a_max * self.comfort_brake)),
            )
            interaction = (s_star / s) ** 2
        lon = a_max * (free - interaction)
        return lon, self._pursuit_lat(obs)


class AggressivePursuit(IdmPursuit):
    """IDM pursuit with halved headway."""

    kind = "aggressive_variant"
    headway = IdmPursuit.headway / 2.0


_CONTROLLERS: dict[str, type[EgoController]] = {
    c.kind: c for c in (RouteFollowerBrake, IdmPursuit, AggressivePursuit)
}


def make_ego_controller(kind: str, bounds: ControlBounds, target_speed: float) -> EgoController:
    if kind not in _CONTROLLERS:
        raise ConfigError(f"unknown ego controller {kind!r} (have {sorted(_CONTROLLERS)})")
    return _CONTROLLERS[kind](bounds, target_speed)


@dataclass
class StepContext:
    """Everything an adversary driver may look at before choosing a control."""

    step: int
    ego: KinematicState
    adv: KinematicState
    report: FeasibilityReport
    eps: float
    ego_heading_error: float
    bounds: ControlBounds


@dataclass
class AdvDecision:
    control: tuple[float, float]
    raw: tuple[float, float] | None = None
    log_prob: float | None = None


class AdversaryDriver(Protocol):
    def begin_episode(self, rng: np.random.Generator) -> None: ...

    def act(self, ctx: StepContext, rng: np.random.Generator) -> AdvDecision: ...


class ScriptedAdversary:
    """Fixed control law, e.g. for tests and baselines."""

    def __init__(self, fn: Callable[[StepContext], tuple[float, float]]):
        self.fn = fn

    def begin_episode(self, rng: np.random.Generator) -> None:
        pass

    def act(self, ctx: StepContext, rng: np.random.Generator) -> AdvDecision:
        return AdvDecision(control=self.fn(ctx))


class RandomAdversary:
    """Uniform controls over the adversary's bounds."""

    def begin_episode(self, rng: np.random.Generator) -> None:
        pass

    def act(self, ctx: StepContext, rng: np.random.Generator) -> AdvDecision:
        b = ctx.bounds
        lon = rng.uniform(b.lon_min, b.lon_max)
        lat = rng.uniform(-b.lat_abs, b.lat_abs)
        return AdvDecision(control=(lon, lat))


class ReplayAdversary:
    """Open-loop replay of a logged adversary action sequence."""

    def __init__(self, actions: list[tuple[float, float]]):
        self.actions = actions

    def begin_episode(self, rng: np.random.Generator) -> None:
        pass

    def act(self, ctx: StepContext, rng: np.random.Generator) -> AdvDecision:
        if ctx.step < len(self.actions):
            return AdvDecision(control=tuple(self.actions[ctx.step]))
        return AdvDecision(control=(0.0, 0.0))


@dataclass
class RolloutTrace:
    """Training-side per-step record aligned with the episode log frames."""

    raw_actions: list[tuple[float, float]] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    contexts: list[StepContext] = field(default_factory=list)
    terminal_context: StepContext | None = None
    termination: str = ""


class World:
    """One simulation instance; shares nothing mutable with other instances."""

    def __init__(
        self,
        config: WorldConfig,
        feas_params: FeasibilityParams,
        sigma_mode: str = PHYSICS_LIMIT,
    ):
        config.validate_against(feas_params)
        self.config = config
        self.params = feas_params
        self.sigma_mode = sigma_mode
        self.route = Route(config.ego_route)
        self.controller = make_ego_controller(
            config.ego_controller, config.ego_bounds, config.ego_target_speed
        )
        self.clamp_count = 0

    def spawn(self, rng: np.random.Generator) -> tuple[KinematicState, KinematicState]:
        c = self.config
        ex, ey, eyaw, ev = c.ego_spawn
        ego = KinematicState(ex, ey, eyaw, ev, 0.0, c.ego_half_length, c.ego_half_width)
        ax, ay, ayaw, av = c.adv_spawn
        along = rng.uniform(-c.adv_pos_jitter, c.adv_pos_jitter)
        ax += math.cos(ayaw) * along
        ay += math.sin(ayaw) * along
        av = max(0.0, av + rng.uniform(-c.adv_speed_jitter, c.adv_speed_jitter))
        adv = KinematicState(ax, ay, ayaw, av, 0.0, c.adv_half_length, c.adv_half_width)
        return ego, adv

    def ego_observation(
        self, ego: KinematicState, adv: KinematicState, prev_yaw: float
    ) -> EgoObservation:
        c = self.config
        rel = relative_frame(ego, adv)
        front = (
            0.0 < rel.d_x_actual < FRONT_SENSE_RANGE
            and abs(rel.d_y_actual) < FRONT_CORRIDOR_HALF + adv.half_width
        )
        if front and rel.dv_x > 0.0:
            ttc = max(rel.clearance_x, 0.0) / max(rel.dv_x, self.params.ttc_floor)
        else:
            ttc = math.inf

        s = self.route.project(ego.x, ego.y, self._progress)
        self._progress = s
        wp = self.route.points[self.route.next_waypoint_index(s)]
        dist_wp = math.hypot(wp[0] - ego.x, wp[1] - ego.y)

        lookahead = max(3.0, 0.8 * ego.v_lon)
        lp = self.route.point_at(s + lookahead)
        ce, se = math.cos(ego.yaw), math.sin(ego.yaw)
        lx = ce * (lp[0] - ego.x) + se * (lp[1] - ego.y)
        ly = -se * (lp[0] - ego.x) + ce * (lp[1] - ego.y)
        rp = self.route.point_at(s)
        off = -se * (rp[0] - ego.x) + ce * (rp[1] - ego.y)

        return EgoObservation(
            dist_next_waypoint=dist_wp,
            v_lon=ego.v_lon,
            yaw_rate=wrap_angle(ego.yaw - prev_yaw) / c.dt,
            front_vehicle=front,
            gap_lon=rel.clearance_x,
            closing_lon=rel.dv_x,
            ttc_frontal=ttc,
            lookahead_local=(lx, ly),
            lateral_offset=off,
            target_speed=c.ego_target_speed,
        )

    def heading_error(self, ego: KinematicState) -> float:
        tx, ty = self.route.tangent_at(self._progress)
        return wrap_angle(math.atan2(ty, tx) - ego.yaw)

    def route_complete(self, ego: KinematicState) -> bool:
        gx, gy = self.route.points[-1]
        return math.hypot(gx - ego.x, gy - ego.y) <= self.config.route_complete_dist

    def run_episode(
        self,
        adversary: AdversaryDriver,
        rng: np.random.Generator,
        critic: RiskCritic | None = None,
        eps_active: float = 0.0,
        header_extra: dict | None = None,
        initial_states: tuple[KinematicState, KinematicState] | None = None,
    ) -> tuple[EpisodeLog, RolloutTrace]:
        """Roll one episode to termination, returning the persistent log and
        the training-side trace.

        sigma and phi are computed per frame from the frame's states, so a
        persisted log can be re-scored offline to the same values (given the
        same critic parameters).  ``initial_states`` bypasses the jittered
        spawn, e.g. for replays.
        """
        c = self.config
        self._progress = 0.0
        self.controller.reset()
        adversary.begin_episode(rng)

        ego, adv = initial_states if initial_states is not None else self.spawn(rng)
        prev_ego_yaw = ego.yaw

        log = EpisodeLog()
        log.header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "template": c.template,
            "dt": c.dt,
            "eps_active": eps_active,
            "ego_controller": c.ego_controller,
            **(header_extra or {}),
        }
        trace = RolloutTrace()

        termination = "step_cap"
        fault = False
        step = 0
        while True:
            report = sigma(ego, adv, self.params, self.sigma_mode)
            if critic is not None:
                feats = risk_features(ego, adv, self.params)
                phi = float(critic.recover_phi_from_distance(feats[None, :], center_distance(ego, adv))[0])
            else:
                phi = 0.0
            collided_now = obb_overlap(ego, adv)
            ctx = StepContext(
                step=step,
                ego=ego,
                adv=adv,
                report=report,
                eps=eps_active,
                ego_heading_error=self.heading_error(ego),
                bounds=c.adv_bounds,
            )

            terminal = (
                collided_now
                or self.route_complete(ego)
                or step >= c.max_episode_steps
                or fault
            )
            if terminal:
                if collided_now:
                    termination = "collision"
                elif fault:
                    termination = "fault"
                elif self.route_complete(ego):
                    termination = "route_complete"
                log.frames.append(
                    Frame(step, ego, adv, None, report.sigma, phi, eps_active, collided_now)
                )
                trace.terminal_context = ctx
                break

            decision = adversary.act(ctx, rng)
            a_lon, a_lat, clamped = c.adv_bounds.clamp(*decision.control)
            if clamped:
                self.clamp_count += 1

            log.frames.append(
                Frame(step, ego, adv, (a_lon, a_lat), report.sigma, phi, eps_active, False)
            )
            trace.contexts.append(ctx)
            trace.raw_actions.append(decision.raw if decision.raw is not None else (a_lon, a_lat))
            trace.log_probs.append(decision.log_prob if decision.log_prob is not None else 0.0)

            obs = self.ego_observation(ego, adv, prev_ego_yaw)
            e_lon, e_lat = self.controller.act(obs)
            prev_ego_yaw = ego.yaw

            ego, _ = step_vehicle(ego, e_lon, e_lat, c.dt, c.ego_bounds)
            adv, _ = step_vehicle(adv, a_lon, a_lat, c.dt, c.adv_bounds)
            step += 1

            vals = (ego.x, ego.y, ego.v_lon, ego.v_lat, adv.x, adv.y, adv.v_lon, adv.v_lat)
            if not all(math.isfinite(v) for v in vals):
                fault = True

        trace.termination = termination
        log.summary = {
            "collided": termination == "collision",
            "steps": step,
            "seed": int(log.header.get("seed", -1)),
            "fault": fault,
            "termination": termination,
            "eps_active": eps_active,
        }
        return log, trace


def rescore_log(
    log: EpisodeLog, feas_params: FeasibilityParams, critic: RiskCritic | None,
    sigma_mode: str = PHYSICS_LIMIT,
) -> tuple[np.ndarray, np.ndarray]:
    """Recompute (sigma, phi) for every frame of a persisted log from its
    stored states alone."""
    sig = np.empty(len(log.frames))
    phi = np.empty(len(log.frames))
    for i, f in enumerate(log.frames):
        sig[i] = sigma(f.ego, f.adv, feas_params, sigma_mode).sigma
        if critic is None:
            phi[i] = 0.0
        else:
            feats = risk_features(f.ego, f.adv, feas_params)
            phi[i] = float(critic.recover_phi_from_distance(feats[None, :], center_distance(f.ego, f.adv))[0])
    return sig, phi


def _left_turn() -> WorldConfig:
    # ego turns left across the adversary's oncoming straight lane
    route = (
        (1.75, -40.0),
        (1.75, -8.0),
        (1.2, -3.0),
        (-1.0, 0.8),
        (-5.0, 1.75),
        (-40.0, 1.75),
    )
    return WorldConfig(
        template="left_turn",
        ego_route=route,
        ego_spawn=(1.75, -40.0, math.pi / 2.0, 8.0),
        adv_spawn=(-1.75, 52.0, -math.pi / 2.0, 7.0),
        ego_target_speed=8.0,
        max_episode_steps=160,
    )


def _straight_obstacle() -> WorldConfig:
    route = ((0.0, 0.0), (120.0, 0.0))
    return WorldConfig(
        template="straight_obstacle",
        ego_route=route,
        ego_spawn=(0.0, 0.0, 0.0, 10.0),
        adv_spawn=(45.0, 0.0, 0.0, 3.0),
        ego_target_speed=10.0,
        max_episode_steps=160,
    )


def _cut_in() -> WorldConfig:
    route = ((0.0, 0.0), (140.0, 0.0))
    return WorldConfig(
        template="cut_in",
        ego_route=route,
        ego_spawn=(0.0, 0.0, 0.0, 10.0),
        adv_spawn=(18.0, 3.5, 0.0, 9.0),
        ego_target_speed=10.0,
        max_episode_steps=160,
        adv_pos_jitter=3.0,
    )


def _crossing() -> WorldConfig:
    route = ((-45.0, -1.75), (45.0, -1.75))
    return WorldConfig(
        template="crossing",
        ego_route=route,
        ego_spawn=(-45.0, -1.75, 0.0, 9.0),
        adv_spawn=(1.75, -48.0, math.pi / 2.0, 8.0),
        ego_target_speed=9.0,
        max_episode_steps=160,
    )


_TEMPLATES: dict[str, Callable[[], WorldConfig]] = {
    "left_turn": _left_turn,
    "straight_obstacle": _straight_obstacle,
    "cut_in": _cut_in,
    "crossing": _crossing,
}


def scenario_templates() -> list[str]:
    return sorted(_TEMPLATES)


def template_config(name: str) -> WorldConfig:
    if name not in _TEMPLATES:
        raise ConfigError(f"unknown scenario template {name!r} (have {scenario_templates()})")
    return _TEMPLATES[name]()
