"""Replay-based evaluation and safety-critical episode selection.

Replay is open-loop on the adversary side: the logged action sequence is
re-applied verbatim while the chosen ego controller closes its own loop.
Replaying against the generating controller therefore reproduces the logged
trajectory exactly; other controllers yield counterfactual outcomes.
"""

from __future__ import annotations

import math
import shutil
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .episode_log import EpisodeLog, run_log_paths
from .metrics import MetricsSummary, summarize
from .microsim import ReplayAdversary, World
from .risk import RiskCritic


def replay_episode(
    log: EpisodeLog,
    config: RunConfig,
    ego_controller: str,
    critic: RiskCritic | None = None,
) -> EpisodeLog:
    """Re-simulate one logged episode under a (possibly different) ego."""
    world_cfg = replace(config.world, ego_controller=ego_controller)
    world = World(world_cfg, config.feasibility, config.sigma_mode)
    adversary = ReplayAdversary(log.actions())
    initial = (log.frames[0].ego, log.frames[0].adv)
    rng = np.random.default_rng(0)  # replay draws nothing from it
    new_log, _ = world.run_episode(
        adversary,
        rng,
        critic=critic,
        eps_active=float(log.header.get("eps_active", 0.0)),
        header_extra={"replayed_from": int(log.header.get("episode", -1))},
        initial_states=initial,
    )
    return new_log


@dataclass
class EvalReport:
    controller: str
    metrics: MetricsSummary


def evaluate_logs(
    logs: list[EpisodeLog],
    config: RunConfig,
    controllers: list[str],
    critic: RiskCritic | None = None,
) -> list[EvalReport]:
    if not logs:
        raise ValueError("no episode logs to evaluate")
    reports = []
    for ctrl in controllers:
        replayed = [replay_episode(l, config, ctrl, critic) for l in logs]
        reports.append(EvalReport(controller=ctrl, metrics=summarize(replayed)))
    return reports


def criticality_key(log: EpisodeLog, tail_s: float = 2.0) -> tuple:
    """Ranking key: collisions first, then high recent risk, then smallest
    positive feasibility margin; episode index breaks remaining ties."""
    phis = log.phis()
    sigmas = log.sigmas()
    tail = max(1, math.ceil(tail_s / log.dt))
    mean_phi_tail = float(phis[-tail:].mean()) if phis.size else 0.0
    pos = sigmas[sigmas > 0.0]
    min_pos_sigma = float(pos.min()) if pos.size else float("inf")
    episode = int(log.header.get("episode", 0))
    return (-int(log.collided), -mean_phi_tail, min_pos_sigma, episode)


def sample_topk(run_dir: str | Path, k: int = 10) -> list[Path]:
    """Copy the k most safety-critical episode logs into <run>/topk/."""
    run_dir = Path(run_dir)
    paths = run_log_paths(run_dir)
    if not paths:
        raise FileNotFoundError(f"{run_dir}: no episode logs found")
    scored = sorted(paths, key=lambda p: criticality_key(EpisodeLog.from_jsonl(p)))
    selected = scored[: max(0, k)]
    out_dir = run_dir / "topk"
    out_dir.mkdir(parents=True, exist_ok=True)
    out_paths = []
    for p in selected:
        dst = out_dir / p.name
        shutil.copyfile(p, dst)
        out_paths.append(dst)
    return out_paths
