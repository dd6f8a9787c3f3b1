"""Gaussian-shaped feasibility-threshold schedule with a cyclic sweep.

Levels are evenly spaced points on a truncated standard-normal axis mapped
through the normal CDF onto [0, eps_max], which packs the thresholds densely
near the feasibility boundary (eps = 0) and sparsely near eps_max.  The
active threshold switches every fixed number of episodes and cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def normal_cdf(u: float) -> float:
    return 0.5 * (1.0 + math.erf(u / math.sqrt(2.0)))


def levels(n: int, eps_max: float, u_min: float, u_max: float) -> list[float]:
    """eps_i = eps_max (F(u_i) - F(u_min)) / (F(u_max) - F(u_min)), u_i even."""
    if n < 2:
        raise ValueError("need at least 2 levels")
    if not u_min < u_max:
        raise ValueError("u_min must be below u_max")
    lo, hi = normal_cdf(u_min), normal_cdf(u_max)
    span = hi - lo
    out = []
    for i in range(1, n + 1):
        u_i = u_min + (i - 1) / (n - 1) * (u_max - u_min)
        out.append(eps_max * (normal_cdf(u_i) - lo) / span)
    out[0] = 0.0
    out[-1] = eps_max
    return out


@dataclass(frozen=True)
class EpsSchedule:
    """Threshold table plus the episode-indexed cyclic sweep."""

    n_levels: int = 8
    eps_max: float = 0.35
    u_min: float = -3.0
    u_max: float = 0.0
    switch_every: int = 100
    values: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        if self.switch_every < 1:
            raise ValueError("switch_every must be >= 1")
        object.__setattr__(
            self, "values", tuple(levels(self.n_levels, self.eps_max, self.u_min, self.u_max))
        )

    def active(self, episode_index: int) -> tuple[float, int]:
        """Active threshold for an episode as (eps, level), level 1-based.

        Cycles eps_1 -> ... -> eps_N -> eps_1 -> ..., switching every
        ``switch_every`` episodes.
        """
        if episode_index < 0:
            raise ValueError("episode_index must be >= 0")
        idx = (episode_index // self.switch_every) % self.n_levels
        return self.values[idx], idx + 1

    def cycle_length(self) -> int:
        return self.n_levels * self.switch_every
