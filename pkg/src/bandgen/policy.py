"""Scenario-policy actor-critic with step-level feasibility shielding.

A diagonal-Gaussian actor over the adversary's (lon, lat) accelerations and a
two-headed value critic estimating the discounted (risk, feasibility) return
vector.  Advantages are computed per head with GAE, routed step-wise by the
shielding mask, normalized, and fed to a clipped policy-gradient update.

All gradients are analytic (hand backprop over the small MLPs), which keeps
updates deterministic and lets the tests check them against central finite
differences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .microsim import AdvDecision, ControlBounds, StepContext
from .nn import MLP, Adam, clip_global_norm

log = logging.getLogger(__name__)

STATE_DIM = 12
ACTION_DIM = 2

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

# fixed input scaling applied inside both networks; TTC is clipped to a
# sane horizon before scaling (the raw feature itself is capped at far_cap)
_TTC_CLIP = 20.0
_INPUT_SCALE = np.array(
    [20.0, 20.0, 10.0, 10.0, 10.0, math.pi, 10.0, math.pi, 20.0, 20.0, 10.0, 1.0]
)

_LOG_2PI = math.log(2.0 * math.pi)


def build_policy_state(ctx: StepContext) -> np.ndarray:
    """12-D deterministic featurization of one simulator step.

    [adv position in ego frame (2), relative velocity in ego frame (2),
     ego speed, ego heading error to route, adversary speed, relative yaw,
     lon/lat clearances (2), min axial TTC (capped), active eps]
    """
    rel = ctx.report.rel
    rel_vx = -math.copysign(1.0, rel.d_x_actual) * rel.dv_x if rel.d_x_actual != 0 else -rel.dv_x
    rel_vy = -math.copysign(1.0, rel.d_y_actual) * rel.dv_y if rel.d_y_actual != 0 else -rel.dv_y
    return np.array(
        [
            rel.d_x_actual,
            rel.d_y_actual,
            rel_vx,
            rel_vy,
            ctx.ego.speed(),
            ctx.ego_heading_error,
            ctx.adv.speed(),
            rel.delta_psi,
            rel.clearance_x,
            rel.clearance_y,
            min(ctx.report.t, 10000.0),
            ctx.eps,
        ],
        dtype=np.float64,
    )


def _scale_input(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64)).copy()
    x[:, 10] = np.minimum(x[:, 10], _TTC_CLIP)
    return x / _INPUT_SCALE


@dataclass(frozen=True)
class PolicyConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eta: float = 0.25
    batch_size: int = 2048
    update_epochs: int = 1
    entropy_coeff: float = 0.03
    lr: float = 1e-4
    grad_clip: float = 0.5
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = -0.2


class ScenarioPolicy:
    """Actor (state -> mean, log-std) and two-headed critic (state -> V_phi, V_sigma)."""

    def __init__(self, config: PolicyConfig, rng: np.random.Generator):
        self.config = config
        self.actor = MLP((STATE_DIM, *config.hidden, 2 * ACTION_DIM), rng, out_scale=0.1)
        self.critic = MLP((STATE_DIM, *config.hidden, 2), rng)
        # bias the raw log-std head so the bounded value starts at log_std_init
        mid = 0.5 * (LOG_STD_MIN + LOG_STD_MAX)
        half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
        raw0 = math.atanh(min(max((config.log_std_init - mid) / half, -0.999), 0.999))
        self.actor.params[-1][ACTION_DIM:] = raw0
        self.actor_opt = Adam(self.actor.params, lr=config.lr)
        self.critic_opt = Adam(self.critic.params, lr=config.lr)
        self.skipped_updates = 0

    # -- distribution ---------------------------------------------------------

    def dist(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out, _ = self.actor.forward(_scale_input(states))
        mu = out[:, :ACTION_DIM]
        log_std = self._bounded_log_std(out[:, ACTION_DIM:])
        return mu, log_std

    @staticmethod
    def _bounded_log_std(raw: np.ndarray) -> np.ndarray:
        mid = 0.5 * (LOG_STD_MIN + LOG_STD_MAX)
        half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
        return mid + half * np.tanh(raw)

    @staticmethod
    def log_prob(mu: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
        z = (actions - mu) / np.exp(log_std)
        return (-0.5 * z * z - log_std - 0.5 * _LOG_2PI).sum(axis=1)

    @staticmethod
    def entropy(log_std: np.ndarray) -> np.ndarray:
        return (log_std + 0.5 * (_LOG_2PI + 1.0)).sum(axis=1)

    def sample(self, state: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        mu, log_std = self.dist(state[None, :])
        a = mu[0] + np.exp(log_std[0]) * rng.standard_normal(ACTION_DIM)
        lp = float(self.log_prob(mu, log_std, a[None, :])[0])
        return a, lp

    def values(self, states: np.ndarray) -> np.ndarray:
        v, _ = self.critic.forward(_scale_input(states))
        return v

    # -- persistence -----------------------------------------------------------

    def save(self, path: str | Path, extra_meta: dict | None = None) -> None:
        arrays = {f"actor_{i}": p for i, p in enumerate(self.actor.params)}
        arrays.update({f"critic_{i}": p for i, p in enumerate(self.critic.params)})
        for i, a in enumerate(self.actor_opt.state_arrays()):
            arrays[f"actor_adam_{i}"] = a
        for i, a in enumerate(self.critic_opt.state_arrays()):
            arrays[f"critic_adam_{i}"] = a
        meta = {"kind": "scenario_policy", "hidden": list(self.config.hidden)}
        meta.update(extra_meta or {})
        checkpoint.save_checkpoint(path, arrays, meta)

    def load(self, path: str | Path) -> dict:
        arrays, meta = checkpoint.load_checkpoint(path)
        if meta.get("kind") != "scenario_policy":
            raise ValueError(f"{path}: not a scenario-policy checkpoint")
        na, nc = len(self.actor.params), len(self.critic.params)
        self.actor.set_params([arrays[f"actor_{i}"] for i in range(na)])
        self.critic.set_params([arrays[f"critic_{i}"] for i in range(nc)])
        self.actor_opt.load_state_arrays([arrays[f"actor_adam_{i}"] for i in range(2 * na + 1)])
        self.critic_opt.load_state_arrays([arrays[f"critic_adam_{i}"] for i in range(2 * nc + 1)])
        return meta


def map_control(raw: np.ndarray, bounds: ControlBounds) -> tuple[float, float]:
    """Squash a raw Gaussian action onto the adversary's acceleration box."""
    lon_mid = 0.5 * (bounds.lon_min + bounds.lon_max)
    lon_half = 0.5 * (bounds.lon_max - bounds.lon_min)
    lon = lon_mid + lon_half * math.tanh(float(raw[0]))
    lat = bounds.lat_abs * math.tanh(float(raw[1]))
    return lon, lat


class PolicyAdversary:
    """Adversary driver sampling from a scenario policy."""

    def __init__(self, policy: ScenarioPolicy, deterministic: bool = False):
        self.policy = policy
        self.deterministic = deterministic

    def begin_episode(self, rng: np.random.Generator) -> None:
        pass

    def act(self, ctx: StepContext, rng: np.random.Generator) -> AdvDecision:
        state = build_policy_state(ctx)
        if self.deterministic:
            mu, log_std = self.policy.dist(state[None, :])
            raw = mu[0]
            lp = float(self.policy.log_prob(mu, log_std, raw[None, :])[0])
        else:
            raw, lp = self.policy.sample(state, rng)
        return AdvDecision(control=map_control(raw, ctx.bounds), raw=tuple(raw), log_prob=lp)


# -- returns, advantages, shielding ----------------------------------------


def vector_returns_and_deltas(
    rewards: np.ndarray, values: np.ndarray, v_boot: np.ndarray, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise discounted returns and TD residuals for one episode.

    ``v_boot`` is the bootstrap value of the state after the last step: zero
    at collision/terminal states, V(s_T) at truncation.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    t_len = rewards.shape[0]
    if values.shape[0] != t_len:
        raise ValueError("values must align with rewards")
    g = np.empty_like(rewards)
    nxt = np.asarray(v_boot, dtype=np.float64)
    running = nxt.copy()
    for t in range(t_len - 1, -1, -1):
        running = rewards[t] + gamma * running
        g[t] = running
    v_next = np.vstack([values[1:], np.asarray(v_boot)[None, :]])
    deltas = rewards + gamma * v_next - values
    return g, deltas


def dual_gae(deltas: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """GAE(gamma, lambda) applied componentwise to one episode's residuals."""
    deltas = np.asarray(deltas, dtype=np.float64)
    out = np.empty_like(deltas)
    acc = np.zeros(deltas.shape[1])
    for t in range(deltas.shape[0] - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        out[t] = acc
    return out


def shield(
    a_phi: np.ndarray,
    a_sigma: np.ndarray,
    sigma_t: np.ndarray,
    sigma_next: np.ndarray,
    eps: np.ndarray | float,
) -> tuple[np.ndarray, np.ndarray]:
    """Step-level shielded advantage.

    m_t = 1[h_t > 0 or h_{t+1} > 0] with h = [eps - sigma]_+; the routed
    advantage is m A_sigma + (1 - m) A_phi.
    """
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), np.shape(sigma_t))
    h_t = np.maximum(0.0, eps - np.asarray(sigma_t))
    h_n = np.maximum(0.0, eps - np.asarray(sigma_next))
    m = ((h_t > 0.0) | (h_n > 0.0)).astype(np.float64)
    return m * np.asarray(a_sigma) + (1.0 - m) * np.asarray(a_phi), m


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# -- PPO update --------------------------------------------------------------


@dataclass
class PPOStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    skipped: bool = False


def policy_loss_and_grads(
    policy: ScenarioPolicy,
    states: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
) -> tuple[float, float, float, list[np.ndarray]]:
    """Clipped-surrogate + entropy loss with analytic actor gradients.

    Returns (loss, mean entropy, clip fraction, grads).
    """
    cfg = policy.config
    x = _scale_input(states)
    n = x.shape[0]
    out, acts = policy.actor.forward(x)
    mu = out[:, :ACTION_DIM]
    raw_ls = out[:, ACTION_DIM:]
    half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
    tanh_raw = np.tanh(raw_ls)
    log_std = 0.5 * (LOG_STD_MIN + LOG_STD_MAX) + half * tanh_raw

    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mu
    logp = (-0.5 * diff * diff * inv_var - log_std - 0.5 * _LOG_2PI).sum(axis=1)
    rho = np.exp(logp - old_log_probs)
    rho_bar = np.clip(rho, 1.0 - cfg.clip_eta, 1.0 + cfg.clip_eta)
    adv = advantages
    unclipped = rho * adv
    clipped = rho_bar * adv
    use_unclipped = unclipped <= clipped
    surrogate = np.where(use_unclipped, unclipped, clipped)
    entropy = (log_std + 0.5 * (_LOG_2PI + 1.0)).sum(axis=1)
    loss = float(-surrogate.mean() - cfg.entropy_coeff * entropy.mean())

    # d loss / d logp: gradient flows through the unclipped branch only
    dl_dlogp = -(use_unclipped * rho * adv) / n
    dl_dmu = dl_dlogp[:, None] * (diff * inv_var)
    dl_dlogstd = dl_dlogp[:, None] * (diff * diff * inv_var - 1.0)
    dl_dlogstd += -cfg.entropy_coeff / n  # entropy term: dH/dlog_std = 1
    dl_draw = dl_dlogstd * half * (1.0 - tanh_raw * tanh_raw)
    grad_out = np.concatenate([dl_dmu, dl_draw], axis=1)
    grads, _ = policy.actor.backward(acts, grad_out)
    clip_fraction = float(np.mean(~use_unclipped & (np.abs(rho - 1.0) > cfg.clip_eta)))
    return loss, float(entropy.mean()), clip_fraction, grads


def value_loss_and_grads(
    policy: ScenarioPolicy, states: np.ndarray, returns: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Vector regression loss E ||V(s) - G||^2 with analytic critic gradients."""
    x = _scale_input(states)
    n = x.shape[0]
    v, acts = policy.critic.forward(x)
    err = v - returns
    loss = float((err * err).sum(axis=1).mean())
    grads, _ = policy.critic.backward(acts, 2.0 * err / n)
    return loss, grads


def ppo_update(
    policy: ScenarioPolicy,
    states: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
) -> PPOStats:
    """One update epoch over a collected batch (policy then critic).

    Non-finite losses or gradients skip the whole update and report a
    diagnostic instead of corrupting the parameters.
    """
    cfg = policy.config
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    old_log_probs = np.asarray(old_log_probs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    returns = np.atleast_2d(np.asarray(returns, dtype=np.float64))

    p_loss, ent, clip_frac, a_grads = policy_loss_and_grads(
        policy, states, actions, old_log_probs, advantages
    )
    v_loss, c_grads = value_loss_and_grads(policy, states, returns)

    finite = (
        math.isfinite(p_loss)
        and math.isfinite(v_loss)
        and all(np.isfinite(g).all() for g in a_grads)
        and all(np.isfinite(g).all() for g in c_grads)
    )
    if not finite:
        policy.skipped_updates += 1
        log.warning("ppo_update: non-finite loss/gradient, skipping update")
        return PPOStats(p_loss, v_loss, ent, clip_frac, skipped=True)

    clip_global_norm(a_grads, cfg.grad_clip)
    clip_global_norm(c_grads, cfg.grad_clip)
    policy.actor_opt.step(policy.actor.params, a_grads)
    policy.critic_opt.step(policy.critic.params, c_grads)
    return PPOStats(p_loss, v_loss, ent, clip_frac)
