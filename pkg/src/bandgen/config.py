"""Run configuration: a strict human-readable key-value tree.

Every hyperparameter is surfaced with its default; unknown keys are hard
errors so typos cannot silently fall back to defaults.  ``to_dict`` always
materializes the full tree, which makes serialize(parse(text)) semantically
idempotent and gives the run manifest a stable content hash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .feasibility import CONSERVATIVE_RSS, PHYSICS_LIMIT, FeasibilityParams
from .microsim import ConfigError, ControlBounds, WorldConfig, template_config
from .policy import PolicyConfig
from .risk import RiskConfig
from .schedule import EpsSchedule

OBJECTIVE_LEARNED_PHI = "learned_phi"
OBJECTIVE_TTC_PROXY = "ttc_proxy"


@dataclass(frozen=True)
class TrainSettings:
    seed: int = 0
    episodes: int = 3000
    num_workers: int = 1
    objective: str = OBJECTIVE_LEARNED_PHI
    shielding: bool = True
    risk_warmup_episodes: int = 0
    risk_updates_per_episode: int = 1
    ttc_proxy_horizon: float = 5.0
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.objective not in (OBJECTIVE_LEARNED_PHI, OBJECTIVE_TTC_PROXY):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.num_workers < 1:
            raise ConfigError("num_workers must be >= 1")


def _check_keys(data: dict, allowed: set[str], path: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config key(s) under '{path}': {sorted(unknown)}")


def _build_dataclass(cls, data: dict, path: str, converters: dict | None = None):
    converters = converters or {}
    names = {f.name for f in fields(cls)}
    _check_keys(data, names, path)
    kwargs = {}
    for key, value in data.items():
        if key in converters:
            value = converters[key](value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config under '{path}': {exc}") from exc


def _bounds_from(value) -> ControlBounds:
    if isinstance(value, dict):
        return _build_dataclass(ControlBounds, value, "bounds")
    if isinstance(value, (list, tuple)) and len(value) in (3, 4):
        return ControlBounds(*[float(v) for v in value])
    raise ConfigError(f"control bounds must be a mapping or [lon_min, lon_max, lat_abs, v_max]")


def _bounds_to(b: ControlBounds) -> list[float]:
    return [b.lon_min, b.lon_max, b.lat_abs, b.v_max]


_WORLD_CONVERTERS = {
    "ego_route": lambda v: tuple(tuple(float(c) for c in p) for p in v),
    "ego_spawn": lambda v: tuple(float(c) for c in v),
    "adv_spawn": lambda v: tuple(float(c) for c in v),
    "ego_bounds": _bounds_from,
    "adv_bounds": _bounds_from,
}


@dataclass(frozen=True)
class RunConfig:
    """Top-level experiment configuration."""

    train: TrainSettings = field(default_factory=TrainSettings)
    world: WorldConfig = field(default_factory=lambda: template_config("left_turn"))
    feasibility: FeasibilityParams = field(default_factory=FeasibilityParams)
    sigma_mode: str = PHYSICS_LIMIT
    risk: RiskConfig = field(default_factory=RiskConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    schedule: EpsSchedule = field(default_factory=EpsSchedule)

    def __post_init__(self) -> None:
        if self.sigma_mode not in (PHYSICS_LIMIT, CONSERVATIVE_RSS):
            raise ConfigError(f"unknown sigma mode {self.sigma_mode!r}")
        self.world.validate_against(self.feasibility)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data or {})
        _check_keys(
            data, {"train", "world", "feasibility", "sigma_mode", "risk", "policy", "schedule"},
            "<root>",
        )
        train = _build_dataclass(TrainSettings, data.get("train", {}), "train")

        world_data = dict(data.get("world", {}))
        template = world_data.pop("template", None)
        if template is None:
            raise ConfigError("world.template is required")
        base = template_config(template)
        names = {f.name for f in fields(WorldConfig)} - {"template"}
        _check_keys(world_data, names, "world")
        overrides = {
            k: (_WORLD_CONVERTERS[k](v) if k in _WORLD_CONVERTERS else v)
            for k, v in world_data.items()
        }
        try:
            world = replace(base, **overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config under 'world': {exc}") from exc

        feas = _build_dataclass(FeasibilityParams, data.get("feasibility", {}), "feasibility")
        risk = _build_dataclass(
            RiskConfig, data.get("risk", {}), "risk", {"hidden": lambda v: tuple(int(x) for x in v)}
        )
        policy = _build_dataclass(
            PolicyConfig, data.get("policy", {}), "policy",
            {"hidden": lambda v: tuple(int(x) for x in v)},
        )
        schedule = _build_dataclass(EpsSchedule, data.get("schedule", {}), "schedule")
        return cls(
            train=train,
            world=world,
            feasibility=feas,
            sigma_mode=data.get("sigma_mode", PHYSICS_LIMIT),
            risk=risk,
            policy=policy,
            schedule=schedule,
        )

    def to_dict(self) -> dict:
        world = dataclasses.asdict(self.world)
        world["ego_bounds"] = _bounds_to(self.world.ego_bounds)
        world["adv_bounds"] = _bounds_to(self.world.adv_bounds)
        world["ego_route"] = [list(p) for p in self.world.ego_route]
        world["ego_spawn"] = list(self.world.ego_spawn)
        world["adv_spawn"] = list(self.world.adv_spawn)
        risk = dataclasses.asdict(self.risk)
        risk["hidden"] = list(self.risk.hidden)
        policy = dataclasses.asdict(self.policy)
        policy["hidden"] = list(self.policy.hidden)
        sched = {
            k: getattr(self.schedule, k)
            for k in ("n_levels", "eps_max", "u_min", "u_max", "switch_every")
        }
        return {
            "train": dataclasses.asdict(self.train),
            "world": world,
            "feasibility": dataclasses.asdict(self.feasibility),
            "sigma_mode": self.sigma_mode,
            "risk": risk,
            "policy": policy,
            "schedule": sched,
        }

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
        return cls.from_dict(data)

    def to_yaml(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    def content_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()
