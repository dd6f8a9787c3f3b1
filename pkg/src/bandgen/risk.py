"""Online-learned per-frame AV-risk predictor.

The critic regresses a sigmoid-output MLP to a potential-shaped TD target
built from sparse collision events, using weighted binary cross-entropy and a
Polyak-averaged target network.  Because the potential F(s) = kappa / d(s)
shifts the learned value, the unshifted risk is recovered at inference as
clip(net(s) + F(s), 0, 1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .feasibility import FeasibilityParams
from .geometry import KinematicState, relative_frame, wrap_angle
from .nn import MLP, Adam, bce_with_logits, polyak_update, sigmoid

log = logging.getLogger(__name__)

N_FEATURES = 6

WEIGHT_BY_TARGET = "target"      # up-weight targets above the high-risk threshold
WEIGHT_BY_COLLISION = "collision"  # up-weight frames whose transition collided


@dataclass(frozen=True)
class RiskConfig:
    gamma: float = 0.95
    lr: float = 1e-3
    hidden: tuple[int, ...] = (128, 128)
    w_plus: float = 50.0
    high_risk_threshold: float = 0.85
    weight_rule: str = WEIGHT_BY_TARGET
    kappa: float = 1.0
    dist_floor: float = 0.5
    tau: float = 0.01
    output_bias_init: float = -3.0

    def __post_init__(self) -> None:
        if self.weight_rule not in (WEIGHT_BY_TARGET, WEIGHT_BY_COLLISION):
            raise ValueError(f"unknown weight_rule {self.weight_rule!r}")


def risk_features(
    ego: KinematicState, adv: KinematicState, params: FeasibilityParams
) -> np.ndarray:
    """6-D interaction feature vector: clearances, closing speeds, inverse
    center distance (floored) and the relative-yaw cosine."""
    rel = relative_frame(ego, adv)
    d = math.hypot(adv.x - ego.x, adv.y - ego.y)
    return np.array(
        [
            min(rel.clearance_x, params.far_cap),
            min(rel.clearance_y, params.far_cap),
            rel.dv_x,
            rel.dv_y,
            1.0 / max(d, 0.5),
            math.cos(wrap_angle(adv.yaw - ego.yaw)),
        ],
        dtype=np.float64,
    )


def center_distance(ego: KinematicState, adv: KinematicState) -> float:
    return math.hypot(adv.x - ego.x, adv.y - ego.y)


def td_target(r_shaped: float, done: bool, phi_tgt_next: float, gamma: float) -> float:
    """clip(r_shaped + (1 - done) gamma Phi_tgt(s'), 0, 1)."""
    y = r_shaped + (0.0 if done else gamma * phi_tgt_next)
    return min(1.0, max(0.0, y))


def shaped_reward(collided: bool, f_s: float, f_s_next: float, gamma: float) -> float:
    """Collision indicator plus the potential-shaping term gamma F(s') - F(s)."""
    return (1.0 if collided else 0.0) + gamma * f_s_next - f_s


class RiskCritic:
    """Sigmoid-output value network with target copy and Adam state."""

    def __init__(self, config: RiskConfig, rng: np.random.Generator):
        self.config = config
        sizes = (N_FEATURES, *config.hidden, 1)
        self.net = MLP(sizes, rng)
        self.net.params[-1][...] = config.output_bias_init
        self.target_params = self.net.copy_params()
        self.opt = Adam(self.net.params, lr=config.lr)
        self.update_count = 0
        self.nan_skips = 0

    # -- inference -----------------------------------------------------------

    def potential(self, distance: float) -> float:
        """F(s) = kappa / d(s), with d floored to keep the potential bounded."""
        return self.config.kappa / max(distance, self.config.dist_floor)

    def phi_hat(self, features: np.ndarray) -> np.ndarray:
        z, _ = self.net.forward(features)
        return sigmoid(z[:, 0])

    def phi_hat_target(self, features: np.ndarray) -> np.ndarray:
        saved = self.net.copy_params()
        self.net.set_params(self.target_params)
        z, _ = self.net.forward(features)
        self.net.set_params(saved)
        return sigmoid(z[:, 0])

    def recover_phi(self, features: np.ndarray, potential: np.ndarray | float) -> np.ndarray:
        """Unshifted AV risk: clip(Phi_hat(s) + F(s), 0, 1)."""
        f = np.atleast_1d(np.asarray(potential, dtype=np.float64))
        return np.clip(self.phi_hat(features) + f, 0.0, 1.0)

    def recover_phi_from_distance(
        self, features: np.ndarray, distance: np.ndarray | float
    ) -> np.ndarray:
        d = np.atleast_1d(np.asarray(distance, dtype=np.float64))
        return self.recover_phi(features, self.config.kappa / np.maximum(d, self.config.dist_floor))

    # -- training ------------------------------------------------------------

    def sample_weights(self, targets: np.ndarray, collided: np.ndarray) -> np.ndarray:
        if self.config.weight_rule == WEIGHT_BY_TARGET:
            high = targets > self.config.high_risk_threshold
        else:
            high = collided.astype(bool)
        return np.where(high, self.config.w_plus, 1.0)

    def train_step(self, features: np.ndarray, targets: np.ndarray, collided: np.ndarray) -> float:
        """One weighted-BCE gradient step plus the Polyak target update.

        Returns the batch loss.  A non-finite gradient aborts the step and
        leaves all parameters untouched.
        """
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        y = np.asarray(targets, dtype=np.float64)
        col = np.asarray(collided)
        n = x.shape[0]
        w = self.sample_weights(y, col)

        z, acts = self.net.forward(x)
        z = z[:, 0]
        loss = float(np.mean(w * bce_with_logits(z, y)))
        grad_z = (w * (sigmoid(z) - y) / n)[:, None]
        grads, _ = self.net.backward(acts, grad_z)

        if not all(np.isfinite(g).all() for g in grads) or not math.isfinite(loss):
            self.nan_skips += 1
            log.warning("risk critic: non-finite gradient, skipping update %d", self.update_count)
            return loss

        self.opt.step(self.net.params, grads)
        polyak_update(self.target_params, self.net.params, self.config.tau)
        self.update_count += 1
        return loss

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path, extra_meta: dict | None = None) -> None:
        arrays = {f"online_{i}": p for i, p in enumerate(self.net.params)}
        arrays.update({f"target_{i}": p for i, p in enumerate(self.target_params)})
        for i, a in enumerate(self.opt.state_arrays()):
            arrays[f"adam_{i}"] = a
        meta = {
            "kind": "risk_critic",
            "update_count": self.update_count,
            "hidden": list(self.config.hidden),
        }
        meta.update(extra_meta or {})
        checkpoint.save_checkpoint(path, arrays, meta)

    def load(self, path: str | Path) -> dict:
        arrays, meta = checkpoint.load_checkpoint(path)
        if meta.get("kind") != "risk_critic":
            raise ValueError(f"{path}: not a risk-critic checkpoint")
        n = len(self.net.params)
        self.net.set_params([arrays[f"online_{i}"] for i in range(n)])
        self.target_params = [arrays[f"target_{i}"] for i in range(n)]
        self.opt.load_state_arrays([arrays[f"adam_{i}"] for i in range(2 * n + 1)])
        self.update_count = int(meta.get("update_count", 0))
        return meta
