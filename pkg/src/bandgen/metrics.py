"""Post-hoc metrics over episode logs: collision rate, physically-invalid
frame rate, Gap Coverage Score, and the risk-feasibility coverage grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .episode_log import EpisodeLog


def collision_rate(logs: list[EpisodeLog]) -> float:
    """Fraction of episodes that ended in a collision."""
    if not logs:
        raise ValueError("collision_rate needs at least one episode log")
    return sum(1 for l in logs if l.collided) / len(logs)


def phys_invalid_rate(logs: list[EpisodeLog], exclude_tail_s: float = 0.8) -> float:
    """Fraction of frames with sigma < 0 among pre-collision frames.

    For collided episodes the final ``exclude_tail_s`` worth of frames before
    (and including) the impact frame is dropped as the unavoidable collision
    phase; episodes shorter than the window contribute no frames.  Frames of
    non-collided episodes all count.  Pooled over all logs.
    """
    total = 0
    invalid = 0
    for logrec in logs:
        sig = logrec.sigmas()
        cf = logrec.collision_frame()
        if cf is None:
            counted = sig
        else:
            window = math.ceil(exclude_tail_s / logrec.dt)
            counted = sig[: max(0, cf - window + 1)]
        total += counted.size
        invalid += int((counted < 0.0).sum())
    if total == 0:
        return 0.0
    return invalid / total


def _cell_index(v: float, k: int) -> int:
    """Grid cell of a value in [0, 1]: boundaries belong to the lower cell,
    the top edge to the top cell."""
    idx = math.ceil(v * k) - 1
    return min(k - 1, max(0, idx))


def gap_coverage_score(
    phis: np.ndarray, sigmas: np.ndarray, episode_collided: np.ndarray, k: int = 40
) -> float:
    """Occupied fraction of the K x K grid over (phi, sigma) restricted to
    gap frames: physically feasible (sigma > 0) frames of collided episodes.

    sigma is clipped to [0, 1] for binning; phi is assumed in [0, 1].
    """
    phis = np.asarray(phis, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    mask = np.asarray(episode_collided, dtype=bool) & (sigmas > 0.0)
    occupied: set[tuple[int, int]] = set()
    for p, s in zip(phis[mask], np.clip(sigmas[mask], 0.0, 1.0)):
        occupied.add((_cell_index(float(p), k), _cell_index(float(s), k)))
    return len(occupied) / (k * k)


def gcs_from_logs(logs: list[EpisodeLog], k: int = 40) -> float:
    phis, sigmas, col = frame_arrays(logs)
    return gap_coverage_score(phis, sigmas, col, k)


def frame_arrays(logs: list[EpisodeLog]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pool per-frame (phi, sigma, episode-collided flag) over a log set."""
    phis, sigmas, col = [], [], []
    for logrec in logs:
        phis.append(logrec.phis())
        sigmas.append(logrec.sigmas())
        col.append(np.full(len(logrec.frames), logrec.collided, dtype=bool))
    if not phis:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool)
    return np.concatenate(phis), np.concatenate(sigmas), np.concatenate(col)


def coverage_grid(
    phis: np.ndarray,
    sigmas: np.ndarray,
    phi_thresholds: np.ndarray,
    sigma_thresholds: np.ndarray,
) -> np.ndarray:
    """Entry (i, j): fraction of frames with phi >= phi_i and sigma >= sigma_j.

    Monotone non-increasing along both threshold axes.
    """
    phis = np.asarray(phis, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    n = max(phis.size, 1)
    out = np.empty((len(phi_thresholds), len(sigma_thresholds)))
    for i, pt in enumerate(phi_thresholds):
        pm = phis >= pt
        for j, st in enumerate(sigma_thresholds):
            out[i, j] = float((pm & (sigmas >= st)).sum()) / n
    return out


@dataclass
class MetricsSummary:
    episodes: int
    collision_rate: float
    phys_invalid_rate: float
    gap_coverage_score: float

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("episodes", float(self.episodes)),
            ("collision_rate", self.collision_rate),
            ("phys_invalid_rate", self.phys_invalid_rate),
            ("gap_coverage_score", self.gap_coverage_score),
        ]


def summarize(logs: list[EpisodeLog], k: int = 40, exclude_tail_s: float = 0.8) -> MetricsSummary:
    if not logs:
        raise ValueError("no episode logs to summarize")
    return MetricsSummary(
        episodes=len(logs),
        collision_rate=collision_rate(logs),
        phys_invalid_rate=phys_invalid_rate(logs, exclude_tail_s),
        gap_coverage_score=gcs_from_logs(logs, k),
    )
