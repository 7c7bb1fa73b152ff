"""Hypernetwork-generated actor trained with twin vector critics (TD3 style).

Only the actor is generated; the two critics are plain MLPs on ``concat(s, a, w)``
returning an m-vector. Critic and actor losses carry a directional-angle term that
pulls Q toward the (interpolated) preference direction.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .hypernet import Composition, backprop_composition, generate_params, make_hypernetwork
from .nn import (
    Gradients,
    OptimizerState,
    batched_backward,
    batched_forward,
    flat_vector,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mlp_spec,
    optimizer_step,
    soft_update_,
)
from .preference import Interpolator, cosine_rows, interpolate_preference
from .replay import HerConfig
from .training import LoopConfig, run_training

COS_GUARD = 1.0 - 1e-9


@dataclass
class Td3Config:
    gamma: float = 0.995               # "Discount factor"
    tau: float = 0.005                 # "Soft update coefficient"
    batch_size: int = 256              # "Minibatch size"
    total_steps: int = 1_000_000       # "Total number of steps"
    workers: int = 10                  # "Number of child processes"
    her: int = 3                       # "Number of preferences sampled for HER"
    critic_lr: float = 3e-4            # "Learning rate - Critic"
    actor_lr: float = 3e-4             # "Learning rate - Actor"
    critic_hidden: tuple = (400,)      # "Number of hidden layers/neurons - Critic"
    actor_hidden: tuple = (400,)       # "Number of hidden layers/neurons - Actor"
    policy_delay: int = 10             # "Policy update delay"
    fusion_alpha: float = 0.01         # "Parameter fusion coefficient"
    expl_noise: float = 0.1            # "Exploration noise std."
    target_noise: float = 0.2          # "Target policy's smoothing noise std."
    noise_clip: float = 0.5            # "Noise clipping limit"
    c_angle: float = 10.0              # "Loss coefficient"
    buffer_size: int = 2_000_000       # "Buffer size"
    angle_in_critic_scaled: bool = True
    hyper_hidden: tuple = (256, 256)
    hyper_out_scale: float = 0.01
    mode: str = "fusion"
    preference_resample: str = "episode"
    regions: bool = True
    eval_interval: int = 10_000
    eval_episodes: int = 1
    warmup: int | None = None
    updates_per_round: int = 1         # learner updates after each round of K worker steps
    deterministic: bool = True
    seed: int = 0
    interpolator: dict | None = None

    def __post_init__(self):
        self.critic_hidden = tuple(self.critic_hidden)
        self.actor_hidden = tuple(self.actor_hidden)
        self.hyper_hidden = tuple(self.hyper_hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.noise_clip <= 0 or self.expl_noise < 0 or self.target_noise < 0:
            raise ValueError("noise settings must satisfy c > 0, sigma >= 0, sigma' >= 0")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        Composition(self.mode, self.fusion_alpha)

    def loop(self, ref=None) -> LoopConfig:
        return LoopConfig(
            total_steps=self.total_steps, workers=self.workers, eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes, warmup=self.warmup or self.batch_size,
            buffer_size=self.buffer_size, preference_resample=self.preference_resample,
            regions=self.regions, deterministic=self.deterministic, seed=self.seed, ref=ref,
            updates_per_round=self.updates_per_round,
        )


class Td3Agent:
    def __init__(self, obs_dim: int, action_dim: int, m: int, cfg: Td3Config, rng: np.random.Generator):
        self.obs_dim, self.action_dim, self.m, self.cfg = obs_dim, action_dim, m, cfg
        self.actor_spec = mlp_spec([obs_dim + m, *cfg.actor_hidden, action_dim], output="tanh")
        self.critic_spec = mlp_spec([obs_dim + action_dim + m, *cfg.critic_hidden, m])
        self.theta1 = init_mlp(self.actor_spec, rng)
        self.target_theta1 = self.theta1.copy()
        self.hyper = make_hypernetwork(m, self.actor_spec, rng, cfg.hyper_hidden, cfg.hyper_out_scale)
        self.critics = [init_mlp(self.critic_spec, rng), init_mlp(self.critic_spec, rng)]
        self.target_critics = [c.copy() for c in self.critics]
        self.comp = Composition(cfg.mode, cfg.fusion_alpha)
        self.opt_theta = OptimizerState("adam", cfg.actor_lr)
        self.opt_phi = OptimizerState("adam", cfg.actor_lr)
        self.opt_critics = [OptimizerState("adam", cfg.critic_lr), OptimizerState("adam", cfg.critic_lr)]
        self.interp = Interpolator.from_config(cfg.interpolator)
        self.her = HerConfig(cfg.her)
        self.lock = threading.Lock()
        self.n = 0
        self.actor_updates = 0
        self._last = {}

    def composed(self, W, base=None):
        W = np.atleast_2d(W)
        theta2, tape = generate_params(self.hyper, W)
        base = flat_vector(self.theta1 if base is None else base)
        return self.comp.compose(base, theta2), tape

    def policy_params(self, w):
        theta, _ = self.composed(w)
        return theta[0] if np.ndim(w) == 1 else theta

    def actions(self, thetas, S, W):
        out, _ = batched_forward(np.atleast_2d(thetas), self.actor_spec,
                                 np.hstack([np.atleast_2d(S), np.atleast_2d(W)]))
        return out

    def act(self, theta, obs, w, rng, env_step):
        a = self.actions(theta, obs, w)[0]
        if self.cfg.expl_noise > 0:
            a = a + rng.normal(0.0, self.cfg.expl_noise, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def greedy_batch(self, thetas, obs, W):
        return self.actions(thetas, obs, W)

    def exploration(self, env_step):
        return {"sigma": self.cfg.expl_noise}

    def update(self, buffer, rng):
        return td3_update(self, buffer.sample(rng, self.cfg.batch_size, self.her), rng)

    def diagnostics(self):
        return dict(self._last)


def critic_q(critic, S, A, W):
    return mlp_forward(critic, np.hstack([np.atleast_2d(S), np.atleast_2d(A), np.atleast_2d(W)]))


def target_action(agent: Td3Agent, target_thetas, S2, W, sigma, clip, rng) -> np.ndarray:
    """pi(s', w; theta') plus clipped Gaussian smoothing noise, clamped to [-1, 1]."""
    a = agent.actions(target_thetas, S2, W)
    if sigma > 0:
        a = a + np.clip(rng.normal(0.0, sigma, size=a.shape), -clip, clip)
    return np.clip(a, -1.0, 1.0)


def select_min_scalarized(Q1, Q2, W):
    """Row-wise pick of the critic output with the smaller w^T Q (ties -> critic 1)."""
    s1 = np.sum(W * Q1, axis=-1)
    s2 = np.sum(W * Q2, axis=-1)
    use2 = s2 < s1
    return np.where(use2[:, None], Q2, Q1), use2


def td3_target(agent: Td3Agent, S2, R, done, W, gamma, rng, target_thetas=None):
    """y = r + gamma * Q_j'(s', a', w) where j minimizes the scalarized value."""
    R = np.atleast_2d(R)
    done = np.atleast_1d(done).astype(bool)
    if gamma == 0.0 or done.all():
        return R.copy()
    W = np.atleast_2d(W)
    if target_thetas is None:
        target_thetas, _ = agent.composed(W, base=agent.target_theta1)
    a2 = target_action(agent, target_thetas, S2, W, agent.cfg.target_noise, agent.cfg.noise_clip, rng)
    Q1, _ = critic_q(agent.target_critics[0], S2, a2, W)
    Q2, _ = critic_q(agent.target_critics[1], S2, a2, W)
    Qsel, _ = select_min_scalarized(Q1, Q2, W)
    return R + gamma * (~done)[:, None] * Qsel


def angle_and_grad(Wp, Q):
    """Per-row angle arccos(cos(w_p, Q)) and its gradient w.r.t. Q.

    The gradient is set to zero where |cos| > 1 - 1e-9 or Q is (near) zero.
    """
    c = cosine_rows(Wp, Q)
    g = np.arccos(c)
    nq = np.linalg.norm(Q, axis=-1, keepdims=True)
    nw = np.linalg.norm(Wp, axis=-1, keepdims=True)
    ok = (np.abs(c) <= COS_GUARD) & (nq[:, 0] > 1e-12) & (nw[:, 0] > 1e-12)
    safe_q = np.where(nq > 1e-12, nq, 1.0)
    safe_w = np.where(nw > 1e-12, nw, 1.0)
    dc = Wp / (safe_w * safe_q) - c[:, None] * Q / safe_q ** 2
    coef = np.zeros_like(c)
    coef[ok] = -1.0 / np.sqrt(1.0 - c[ok] ** 2)
    return g, coef[:, None] * dc


def critic_loss(agent: Td3Agent, critic, S, A, W, Wp, y):
    """Mean of |y - Q|^2 / m + k * angle(w_p, Q); returns ``(loss, Gradients)``."""
    Q, tape = critic_q(critic, S, A, W)
    B, m = Q.shape
    diff = Q - y
    k = agent.cfg.c_angle if agent.cfg.angle_in_critic_scaled else 1.0
    ang, dang = angle_and_grad(Wp, Q)
    loss = float(np.sum(diff * diff) / (m * B) + k * np.mean(ang))
    dQ = 2.0 * diff / (m * B) + k * dang / B
    grads, _ = mlp_backward(critic, tape, dQ)
    return loss, grads


def actor_loss(agent: Td3Agent, S, W, Wp):
    """Mean of -w^T Q_1(s, pi(s, w), w) + c_angle * angle(w_p, Q_1).

    Differentiated through the action into the composed actor parameters and split
    into ``(loss, grad_theta1 (flat), grad_phi)``. Critic parameters are not touched.
    """
    S, W, Wp = np.atleast_2d(S), np.atleast_2d(W), np.atleast_2d(Wp)
    thetas, htape = agent.composed(W)
    a, atape = batched_forward(thetas, agent.actor_spec, np.hstack([S, W]))
    critic = agent.critics[0]
    Q, ctape = critic_q(critic, S, a, W)
    B = len(S)
    ang, dang = angle_and_grad(Wp, Q)
    loss = float(np.mean(-np.sum(W * Q, axis=1) + agent.cfg.c_angle * ang))
    dQ = (-W + agent.cfg.c_angle * dang) / B
    _, dx = mlp_backward(critic, ctape, dQ)
    da = dx[:, agent.obs_dim:agent.obs_dim + agent.action_dim]
    g_rows, _ = batched_backward(thetas, agent.actor_spec, atape, da)
    g1, gphi = backprop_composition(g_rows, agent.comp, agent.hyper, htape)
    return loss, g1, gphi


def td3_update(agent: Td3Agent, batch, rng):
    cfg = agent.cfg
    W = batch.w
    Wp = interpolate_preference(agent.interp, W)
    y = td3_target(agent, batch.s2, batch.r, batch.done, W, cfg.gamma, rng)
    losses = []
    for critic, opt in zip(agent.critics, agent.opt_critics):
        loss, grads = critic_loss(agent, critic, batch.s, batch.a, W, Wp, y)
        losses.append(loss)
        if np.isfinite(loss):
            optimizer_step(opt, critic, grads)
    for tgt, src in zip(agent.target_critics, agent.critics):
        soft_update_(tgt, src, cfg.tau)
    agent.n += 1
    info = {"loss": float(np.mean(losses)), "critic_loss": losses}
    if agent.n % cfg.policy_delay == 0 and all(np.isfinite(losses)):
        a_loss, g1, gphi = actor_loss(agent, batch.s, W, Wp)
        optimizer_step(agent.opt_theta, agent.theta1, Gradients.from_flat(g1, agent.actor_spec))
        optimizer_step(agent.opt_phi, agent.hyper.net, gphi)
        soft_update_(agent.target_theta1, agent.theta1, cfg.tau)
        agent.actor_updates += 1
        agent._last = {
            "actor_loss": a_loss,
            "grad_norm_theta1": float(np.linalg.norm(g1)),
            "grad_norm_phi": gphi.norm(),
            "actor_updates": agent.actor_updates,
        }
        info.update(agent._last)
    return info


def train_td3(cfg: Td3Config, env_factory, eval_grid, ref=None, log_path=None, checkpoint_fn=None):
    probe = env_factory()
    rng = np.random.default_rng(cfg.seed)
    agent = Td3Agent(probe.obs_dim, probe.action_dim, probe.m, cfg, rng)
    result = run_training(agent, env_factory, cfg.loop(ref), eval_grid, log_path,
                          (lambda step, res: checkpoint_fn(agent, step, res)) if checkpoint_fn else None)
    return agent, result
