"""Episode persistence: line-delimited JSON records, one frame per line.

File layout (field order frozen):
  line 1: header   {"kind": "header", "format": "bandgen.episode", "version": 1, ...}
  lines : frames   {"kind": "frame", "t", "ego", "adv", "a", "sigma", "phi", "eps", "col"}
  last  : summary  {"kind": "summary", "collided", "steps", "seed", "fault", ...}

"ego"/"adv" are [x, y, yaw, v_lon, v_lat, half_length, half_width]; "a" is the
applied adversary control [lon_accel, lat_accel] or null on the terminal
frame.  Serialization uses shortest-roundtrip float repr, so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import KinematicState

FORMAT_NAME = "bandgen.episode"
FORMAT_VERSION = 1

_JSON_SEP = (",", ":")


def _state_to_list(s: KinematicState) -> list[float]:
    return [s.x, s.y, s.yaw, s.v_lon, s.v_lat, s.half_length, s.half_width]


def _state_from_list(v: list[float]) -> KinematicState:
    return KinematicState(*v)


@dataclass
class Frame:
    step: int
    ego: KinematicState
    adv: KinematicState
    action: tuple[float, float] | None
    sigma: float
    phi: float
    eps: float
    collision: bool


@dataclass
class EpisodeLog:
    """Per-frame record of one episode plus its terminal summary."""

    header: dict = field(default_factory=dict)
    frames: list[Frame] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def collided(self) -> bool:
        return bool(self.summary.get("collided", False))

    @property
    def fault(self) -> bool:
        return bool(self.summary.get("fault", False))

    @property
    def steps(self) -> int:
        return int(self.summary.get("steps", max(0, len(self.frames) - 1)))

    @property
    def dt(self) -> float:
        return float(self.header.get("dt", 0.1))

    def sigmas(self) -> np.ndarray:
        return np.array([f.sigma for f in self.frames])

    def phis(self) -> np.ndarray:
        return np.array([f.phi for f in self.frames])

    def actions(self) -> list[tuple[float, float]]:
        return [f.action for f in self.frames if f.action is not None]

    def collision_frame(self) -> int | None:
        for f in self.frames:
            if f.collision:
                return f.step
        return None

    def to_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"kind": "header", **self.header}, separators=_JSON_SEP)]
        for f in self.frames:
            rec = {
                "kind": "frame",
                "t": f.step,
                "ego": _state_to_list(f.ego),
                "adv": _state_to_list(f.adv),
                "a": list(f.action) if f.action is not None else None,
                "sigma": f.sigma,
                "phi": f.phi,
                "eps": f.eps,
                "col": int(f.collision),
            }
            lines.append(json.dumps(rec, separators=_JSON_SEP))
        lines.append(json.dumps({"kind": "summary", **self.summary}, separators=_JSON_SEP))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "EpisodeLog":
        path = Path(path)
        log = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                kind = rec.pop("kind", None)
                if kind == "header":
                    if rec.get("format") != FORMAT_NAME:
                        raise ValueError(f"{path}: not an episode log")
                    log.header = rec
                elif kind == "frame":
                    log.frames.append(
                        Frame(
                            step=rec["t"],
                            ego=_state_from_list(rec["ego"]),
                            adv=_state_from_list(rec["adv"]),
                            action=tuple(rec["a"]) if rec["a"] is not None else None,
                            sigma=rec["sigma"],
                            phi=rec["phi"],
                            eps=rec["eps"],
                            collision=bool(rec["col"]),
                        )
                    )
                elif kind == "summary":
                    log.summary = rec
                else:
                    raise ValueError(f"{path}: unknown record kind {kind!r}")
        if not log.header or not log.summary:
            raise ValueError(f"{path}: incomplete episode log")
        return log


def load_logs(paths: list[str | Path]) -> list[EpisodeLog]:
    return [EpisodeLog.from_jsonl(p) for p in paths]


def run_log_paths(run_dir: str | Path) -> list[Path]:
    return sorted(Path(run_dir, "logs").glob("ep*.jsonl"))
