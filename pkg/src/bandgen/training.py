"""Training orchestration: rollout collection, online risk-critic updates,
shielded PPO iterations, and the cyclic feasibility-threshold sweep with
per-threshold checkpoint resume.

Determinism: every episode draws its randomness from an RNG seeded by
(run seed, episode index), so results do not depend on worker count and a
run can resume exactly at any level-block boundary.  Episode logs, metric
CSV rows and checkpoints are byte-stable across identical runs.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import OBJECTIVE_TTC_PROXY, RunConfig
from .episode_log import EpisodeLog
from .microsim import RandomAdversary, RolloutTrace, World
from .policy import (
    PolicyAdversary,
    ScenarioPolicy,
    build_policy_state,
    dual_gae,
    normalize_advantages,
    ppo_update,
    shield,
    vector_returns_and_deltas,
)
from .risk import RiskCritic, center_distance, risk_features, shaped_reward, td_target

log = logging.getLogger(__name__)

EPISODE_COLS = (
    "episode", "level", "eps", "steps", "collided", "termination",
    "min_sigma", "mean_phi", "invalid_frames",
)
METRIC_COLS = (
    "update", "episode", "level", "eps", "batch_steps", "policy_loss",
    "value_loss", "entropy", "clip_fraction", "mask_rate", "cr_recent",
)


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng((seed, episode))


@dataclass
class _Buffer:
    states: list[np.ndarray] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)
    log_probs: list[np.ndarray] = field(default_factory=list)
    advantages: list[np.ndarray] = field(default_factory=list)
    returns: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)

    def size(self) -> int:
        return sum(s.shape[0] for s in self.states)

    def clear(self) -> None:
        for f in (self.states, self.actions, self.log_probs, self.advantages,
                  self.returns, self.masks):
            f.clear()


class Trainer:
    """Owns one full training run inside a run directory."""

    def __init__(self, config: RunConfig, run_dir: str | Path, write_logs: bool = True,
                 echo: bool = True):
        self.config = config
        self.run_dir = Path(run_dir)
        self.write_logs = write_logs
        self.echo = echo
        tr = config.train

        self.worlds = [
            World(config.world, config.feasibility, config.sigma_mode)
            for _ in range(tr.num_workers)
        ]
        self.policy = ScenarioPolicy(config.policy, np.random.default_rng((tr.seed, 90001)))
        self.critic = RiskCritic(config.risk, np.random.default_rng((tr.seed, 90002)))
        self.buffer = _Buffer()
        self.ppo_updates = 0
        self.recent_collisions: deque[bool] = deque(maxlen=100)
        self.kept_logs: list[EpisodeLog] = []
        self.current_level = 0  # 1-based once training starts
        self.next_episode = 0

    # -- paths ----------------------------------------------------------------

    def _ckpt(self, name: str) -> Path:
        return self.run_dir / "checkpoints" / name

    def level_ckpt_path(self, level: int) -> Path:
        return self._ckpt(f"policy_level_{level}.ckpt")

    # -- setup / persistence ---------------------------------------------------

    def _write_manifest(self) -> None:
        manifest = {
            "config_hash": self.config.content_hash(),
            "seed": self.config.train.seed,
            "episodes": self.config.train.episodes,
            "template": self.config.world.template,
            "bandgen_version": __version__,
            "numpy_version": np.__version__,
            "python_version": sys.version.split()[0],
        }
        (self.run_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _save_run_state(self) -> None:
        state = {
            "next_episode": self.next_episode,
            "last_saved_level": self.current_level,
            "ppo_updates": self.ppo_updates,
            "recent_collisions": [bool(c) for c in self.recent_collisions],
            "completed": self.next_episode >= self.config.train.episodes,
        }
        (self.run_dir / "run_state.json").write_text(
            json.dumps(state, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _append_csv(self, name: str, cols: tuple[str, ...], row: dict) -> None:
        path = self.run_dir / name
        new = not path.exists()
        with open(path, "a", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            if new:
                w.writeheader()
            w.writerow(row)

    # -- episode post-processing -----------------------------------------------

    def _risk_update(self, log_rec: EpisodeLog, trace: RolloutTrace) -> float:
        """One (or a few) critic steps on this episode's transitions."""
        frames = log_rec.frames
        n = len(frames) - 1
        if n < 1:
            return float("nan")
        feats = np.stack(
            [risk_features(f.ego, f.adv, self.config.feasibility) for f in frames]
        )
        dists = np.array([center_distance(f.ego, f.adv) for f in frames])
        pots = self.config.risk.kappa / np.maximum(dists, self.config.risk.dist_floor)
        collided_next = np.array([frames[t + 1].collision for t in range(n)])
        done = np.zeros(n, dtype=bool)
        if trace.termination in ("collision", "route_complete"):
            done[-1] = True

        gamma = self.config.risk.gamma
        loss = float("nan")
        for _ in range(self.config.train.risk_updates_per_episode):
            phi_tgt_next = self.critic.phi_hat_target(feats[1 : n + 1])
            targets = np.array(
                [
                    td_target(
                        shaped_reward(bool(collided_next[t]), pots[t], pots[t + 1], gamma),
                        bool(done[t]),
                        float(phi_tgt_next[t]),
                        gamma,
                    )
                    for t in range(n)
                ]
            )
            loss = self.critic.train_step(feats[:n], targets, collided_next)
        return loss

    def _risk_rewards(self, log_rec: EpisodeLog, trace: RolloutTrace) -> np.ndarray:
        """Per-step risk reward: the recovered phi, or the TTC proxy ablation."""
        n = len(trace.contexts)
        if self.config.train.objective == OBJECTIVE_TTC_PROXY:
            h = self.config.train.ttc_proxy_horizon
            return np.array([1.0 - min(c.report.t, h) / h for c in trace.contexts])
        return np.array([f.phi for f in log_rec.frames[:n]])

    def _accumulate(self, log_rec: EpisodeLog, trace: RolloutTrace) -> None:
        """Turn one episode into shielded PPO batch rows."""
        n = len(trace.contexts)
        if n < 1:
            return
        states = np.stack([build_policy_state(c) for c in trace.contexts])
        actions = np.array(trace.raw_actions)
        log_probs = np.array(trace.log_probs)
        sigmas = log_rec.sigmas()
        rewards = np.column_stack([self._risk_rewards(log_rec, trace), sigmas[:n]])

        values = self.policy.values(states)
        if trace.termination == "collision":
            v_boot = np.zeros(2)
        else:
            term_state = build_policy_state(trace.terminal_context)
            v_boot = self.policy.values(term_state[None, :])[0]

        cfg = self.config.policy
        returns, deltas = vector_returns_and_deltas(rewards, values, v_boot, cfg.gamma)
        gae = dual_gae(deltas, cfg.gamma, cfg.gae_lambda)
        if self.config.train.shielding:
            eps = log_rec.header["eps_active"]
            routed, mask = shield(gae[:, 0], gae[:, 1], sigmas[:n], sigmas[1 : n + 1], eps)
        else:
            routed, mask = gae[:, 0].copy(), np.zeros(n)

        self.buffer.states.append(states)
        self.buffer.actions.append(actions)
        self.buffer.log_probs.append(log_probs)
        self.buffer.advantages.append(routed)
        self.buffer.returns.append(returns)
        self.buffer.masks.append(mask)

    def _flush_updates(self, episode: int, level: int, eps: float, force: bool) -> None:
        size = self.buffer.size()
        if size == 0:
            return
        if not force and size < self.config.policy.batch_size:
            return
        if force and size < 2:
            self.buffer.clear()
            return
        states = np.concatenate(self.buffer.states)
        actions = np.concatenate(self.buffer.actions)
        log_probs = np.concatenate(self.buffer.log_probs)
        advantages = normalize_advantages(np.concatenate(self.buffer.advantages))
        returns = np.concatenate(self.buffer.returns)
        mask_rate = float(np.concatenate(self.buffer.masks).mean())
        self.buffer.clear()

        stats = ppo_update(self.policy, states, actions, log_probs, advantages, returns)
        self.ppo_updates += 1
        cr = (
            sum(self.recent_collisions) / len(self.recent_collisions)
            if self.recent_collisions
            else 0.0
        )
        self._append_csv(
            "metrics.csv",
            METRIC_COLS,
            {
                "update": self.ppo_updates,
                "episode": episode,
                "level": level,
                "eps": eps,
                "batch_steps": states.shape[0],
                "policy_loss": stats.policy_loss,
                "value_loss": stats.value_loss,
                "entropy": stats.entropy,
                "clip_fraction": stats.clip_fraction,
                "mask_rate": mask_rate,
                "cr_recent": cr,
            },
        )

    # -- level sweep -----------------------------------------------------------

    def _enter_level(self, level: int) -> None:
        """Save the outgoing level's checkpoint, then resume the incoming
        level from its previously saved checkpoint when one exists."""
        if self.current_level and self.current_level != level:
            self.policy.save(
                self.level_ckpt_path(self.current_level),
                {"level": self.current_level, "episode": self.next_episode,
                 "config_hash": self.config.content_hash()},
            )
            self.critic.save(
                self._ckpt("risk_critic.ckpt"),
                {"config_hash": self.config.content_hash()},
            )
            self._save_run_state()
        if self.current_level != level:
            path = self.level_ckpt_path(level)
            if path.exists():
                self.policy.load(path)
            self.current_level = level

    # -- main loop ---------------------------------------------------------------

    def resume(self) -> None:
        state_path = self.run_dir / "run_state.json"
        if not state_path.exists():
            raise FileNotFoundError(f"{state_path}: nothing to resume from")
        state = json.loads(state_path.read_text(encoding="utf-8"))
        self.next_episode = int(state["next_episode"])
        self.ppo_updates = int(state["ppo_updates"])
        self.recent_collisions.extend(state.get("recent_collisions", []))
        last_level = int(state["last_saved_level"])
        if last_level:
            self.policy.load(self.level_ckpt_path(last_level))
            self.current_level = last_level
        risk_path = self._ckpt("risk_critic.ckpt")
        if risk_path.exists():
            self.critic.load(risk_path)

    def train(self, resume: bool = False) -> Path:
        cfg = self.config
        tr = cfg.train
        self.run_dir.mkdir(parents=True, exist_ok=True)
        if resume:
            self.resume()
        else:
            cfg.to_yaml(self.run_dir / "config.yaml")
            self._write_manifest()

        adversary = PolicyAdversary(self.policy)
        sched = cfg.schedule
        for episode in range(self.next_episode, tr.episodes):
            eps, level = sched.active(episode)
            if episode % sched.switch_every == 0:
                self._flush_updates(episode, self.current_level or level, eps, force=True)
                self._enter_level(level)
            self.next_episode = episode

            rng = episode_rng(tr.seed, episode)
            world = self.worlds[episode % tr.num_workers]
            log_rec, trace = world.run_episode(
                adversary,
                rng,
                critic=self.critic,
                eps_active=eps,
                header_extra={
                    "episode": episode,
                    "level": level,
                    "seed": tr.seed,
                    "critic_version": self.critic.update_count,
                },
            )
            log_rec.summary["seed"] = tr.seed
            log_rec.summary["episode"] = episode

            self.recent_collisions.append(log_rec.collided)
            if not log_rec.fault:
                self._risk_update(log_rec, trace)
                if episode >= tr.risk_warmup_episodes:
                    self._accumulate(log_rec, trace)
                    self._flush_updates(episode, level, eps, force=False)

            sig = log_rec.sigmas()
            self._append_csv(
                "episodes.csv",
                EPISODE_COLS,
                {
                    "episode": episode,
                    "level": level,
                    "eps": eps,
                    "steps": log_rec.steps,
                    "collided": int(log_rec.collided),
                    "termination": trace.termination,
                    "min_sigma": float(sig.min()) if sig.size else 0.0,
                    "mean_phi": float(log_rec.phis().mean()) if sig.size else 0.0,
                    "invalid_frames": int((sig < 0.0).sum()),
                },
            )
            if self.write_logs:
                log_rec.to_jsonl(self.run_dir / "logs" / f"ep{episode:05d}.jsonl")
            else:
                self.kept_logs.append(log_rec)

            if self.echo and (episode + 1) % tr.log_every == 0:
                cr = sum(self.recent_collisions) / len(self.recent_collisions)
                print(
                    f"[bandgen] episode {episode + 1}/{tr.episodes} "
                    f"level {level} eps {eps:.4f} cr_recent {cr:.2f}",
                    flush=True,
                )

        self.next_episode = tr.episodes
        self._flush_updates(tr.episodes - 1, self.current_level, eps, force=True)
        if self.current_level:
            self.policy.save(
                self.level_ckpt_path(self.current_level),
                {"level": self.current_level, "episode": tr.episodes,
                 "config_hash": self.config.content_hash()},
            )
        self.policy.save(self._ckpt("policy_final.ckpt"), {"episode": tr.episodes})
        self.critic.save(self._ckpt("risk_critic.ckpt"), {"config_hash": cfg.content_hash()})
        self._save_run_state()
        return self.run_dir


def train_run(config: RunConfig, run_dir: str | Path, resume: bool = False,
              write_logs: bool = True, echo: bool = True) -> Trainer:
    trainer = Trainer(config, run_dir, write_logs=write_logs, echo=echo)
    trainer.train(resume=resume)
    return trainer


def rollout_random(config: RunConfig, episodes: int, critic: RiskCritic | None = None,
                   seed_offset: int = 500_000) -> list[EpisodeLog]:
    """Uniform-random adversary baseline rollouts (no learning)."""
    world = World(config.world, config.feasibility, config.sigma_mode)
    adversary = RandomAdversary()
    logs = []
    for episode in range(episodes):
        rng = episode_rng(config.train.seed, seed_offset + episode)
        log_rec, _ = world.run_episode(adversary, rng, critic=critic, eps_active=0.0)
        logs.append(log_rec)
    return logs
