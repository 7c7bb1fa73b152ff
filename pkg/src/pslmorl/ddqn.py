"""Hypernetwork-conditioned double DQN with vector-valued Q heads.

The Q-network maps ``concat(state, w)`` to an ``n_actions x m`` matrix. Its acting
parameters are composed per preference from the base network theta_1 and the
hypernetwork output phi(w). Targets decouple selection (online composed network,
cosine-weighted scalarized score) from evaluation (target network theta_1').
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .hypernet import Composition, backprop_composition, generate_params, make_hypernetwork
from .nn import (
    Gradients,
    OptimizerState,
    batched_backward,
    batched_forward,
    flat_vector,
    init_mlp,
    mlp_forward,
    mlp_spec,
    optimizer_step,
    soft_update_,
)
from .preference import Interpolator, cosine_rows, interpolate_preference
from .replay import Batch, HerConfig
from .training import LoopConfig, evaluate_grid, run_training


@dataclass
class DdqnConfig:
    gamma: float = 0.99              # "Discount factor"
    tau: float = 0.005               # "Soft update coefficient"
    batch_size: int = 32             # "Minibatch size"
    total_steps: int = 100_000       # "Total number of steps"
    workers: int = 10                # "Number of child processes"
    her: int = 3                     # "Number of preferences sampled for HER"
    fusion_alpha: float = 0.05       # "Parameter fusion coefficient"
    learning_rate: float = 3e-4      # "Learning rate"
    hidden: tuple = (512, 512, 512)  # "Number of hidden layers" x "Number of hidden neurons"
    buffer_size: int = 10_000        # "Buffer size"
    hyper_hidden: tuple = (256, 256)
    hyper_out_scale: float = 0.01
    mode: str = "fusion"
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.3
    target_fusion: bool = False
    preference_resample: str = "episode"
    regions: bool = True
    eval_interval: int = 5_000
    eval_episodes: int = 1
    warmup: int | None = None
    updates_per_round: int = 1         # learner updates after each round of K worker steps
    deterministic: bool = True
    seed: int = 0
    interpolator: dict | None = None

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        self.hyper_hidden = tuple(self.hyper_hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        Composition(self.mode, self.fusion_alpha)

    def loop(self, ref=None) -> LoopConfig:
        return LoopConfig(
            total_steps=self.total_steps, workers=self.workers, eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes, warmup=self.warmup or self.batch_size,
            buffer_size=self.buffer_size, preference_resample=self.preference_resample,
            regions=self.regions, deterministic=self.deterministic, seed=self.seed, ref=ref,
            updates_per_round=self.updates_per_round,
        )


class DdqnAgent:
    def __init__(self, obs_dim: int, n_actions: int, m: int, cfg: DdqnConfig, rng: np.random.Generator):
        self.obs_dim, self.n_actions, self.m, self.cfg = obs_dim, n_actions, m, cfg
        self.action_dim = None
        self.q_spec = mlp_spec([obs_dim + m, *cfg.hidden, n_actions * m])
        self.theta1 = init_mlp(self.q_spec, rng)
        self.target = self.theta1.copy()
        self.hyper = make_hypernetwork(m, self.q_spec, rng, cfg.hyper_hidden, cfg.hyper_out_scale)
        self.comp = Composition(cfg.mode, cfg.fusion_alpha)
        self.opt_theta = OptimizerState("adam", cfg.learning_rate)
        self.opt_phi = OptimizerState("adam", cfg.learning_rate)
        self.interp = Interpolator.from_config(cfg.interpolator)
        self.her = HerConfig(cfg.her)
        self.lock = threading.Lock()
        self._last = {}

    # -- parameter composition --------------------------------------------

    def composed(self, W, base=None):
        """Per-row acting parameters ``(B, P)`` and the hypernetwork tape."""
        W = np.atleast_2d(W)
        theta2, tape = generate_params(self.hyper, W)
        base = flat_vector(self.theta1 if base is None else base)
        return self.comp.compose(base, theta2), tape

    def policy_params(self, w):
        theta, _ = self.composed(w)
        return theta[0] if np.ndim(w) == 1 else theta

    # -- acting -----------------------------------------------------------

    def epsilon(self, env_step: int) -> float:
        c = self.cfg
        horizon = max(1.0, c.eps_decay_frac * c.total_steps)
        frac = min(1.0, env_step / horizon)
        return c.eps_start + frac * (c.eps_end - c.eps_start)

    def exploration(self, env_step):
        return {"epsilon": self.epsilon(env_step)}

    def act(self, theta, obs, w, rng, env_step):
        w_p = interpolate_preference(self.interp, w)
        return behavior_action(self, theta, obs, w, w_p, self.epsilon(env_step), rng)

    def greedy_batch(self, thetas, obs, W):
        Q, _ = q_batch(self, thetas, obs, W)
        return greedy_from_q(Q, W, interpolate_preference(self.interp, W))

    # -- learning -----------------------------------------------------------

    def update(self, buffer, rng):
        batch = buffer.sample(rng, self.cfg.batch_size, self.her)
        loss, g1, gphi = ddqn_loss(self, batch)
        if np.isfinite(loss):
            optimizer_step(self.opt_theta, self.theta1, Gradients.from_flat(g1, self.q_spec))
            optimizer_step(self.opt_phi, self.hyper.net, gphi)
            soft_update(self.target, self.theta1, self.cfg.tau)
        self._last = {"grad_norm_theta1": float(np.linalg.norm(g1)), "grad_norm_phi": gphi.norm()}
        return {"loss": loss, **self._last}

    def diagnostics(self):
        return dict(self._last)


# -- network evaluation helpers ------------------------------------------------

def q_batch(agent: DdqnAgent, thetas, S, W):
    """Vector Q-values ``(B, n_actions, m)`` with per-row parameters."""
    thetas = np.atleast_2d(thetas)
    x = np.hstack([np.atleast_2d(S), np.atleast_2d(W)])
    out, tape = batched_forward(thetas, agent.q_spec, x)
    return out.reshape(len(x), agent.n_actions, agent.m), tape


def q_values(agent: DdqnAgent, theta, s, w) -> np.ndarray:
    """Q(s, ., w; theta) as an ``n_actions x m`` matrix for one flat parameter vector."""
    Q, _ = q_batch(agent, np.asarray(theta)[None], np.asarray(s)[None], np.asarray(w)[None])
    return Q[0]


def greedy_from_q(Q, W, Wp) -> np.ndarray:
    """argmax_a S_c(w_p, Q[a]) * w^T Q[a]; ``np.argmax`` breaks ties toward index 0."""
    Q = np.asarray(Q, dtype=float)
    W, Wp = np.asarray(W, dtype=float), np.asarray(Wp, dtype=float)
    score = cosine_rows(Wp[..., None, :], Q) * np.sum(W[..., None, :] * Q, axis=-1)
    return np.argmax(score, axis=-1)


def greedy_action(agent: DdqnAgent, theta, s, w, w_p) -> int:
    return int(greedy_from_q(q_values(agent, theta, s, w), w, w_p))


def behavior_action(agent: DdqnAgent, theta, s, w, w_p, eps: float, rng: np.random.Generator) -> int:
    if rng.random() < eps:
        return int(rng.integers(agent.n_actions))
    return greedy_action(agent, theta, s, w, w_p)


def _target_params(agent: DdqnAgent, W):
    """Evaluation-side parameters: theta_1' alone, or composed with phi(w) when configured.

    The ``gen`` and ``add`` ablations always compose, since theta_1' alone is not
    the network they act with.
    """
    if agent.cfg.target_fusion or agent.comp.mode != "fusion":
        theta, _ = agent.composed(W, base=agent.target)
        return theta
    return None


def target_values(agent: DdqnAgent, S2, R, done, W, Wp, gamma, online_thetas=None) -> np.ndarray:
    """Vector targets y = r + gamma * Q'(s', a*, w) with a* chosen by the online composed net."""
    S2, R = np.atleast_2d(S2), np.atleast_2d(R)
    W, Wp = np.atleast_2d(W), np.atleast_2d(Wp)
    done = np.atleast_1d(done).astype(bool)
    if gamma == 0.0 or done.all():
        return R.copy()
    if online_thetas is None:
        online_thetas, _ = agent.composed(W)
    Q_online, _ = q_batch(agent, online_thetas, S2, W)
    a_star = greedy_from_q(Q_online, W, Wp)
    tgt = _target_params(agent, W)
    if tgt is None:
        out, _ = mlp_forward(agent.target, np.hstack([S2, W]))
        Q_t = out.reshape(len(S2), agent.n_actions, agent.m)
    else:
        Q_t, _ = q_batch(agent, tgt, S2, W)
    boot = Q_t[np.arange(len(S2)), a_star]
    return R + gamma * (~done)[:, None] * boot


def target_value(agent: DdqnAgent, s2, r, done, w, w_p, gamma) -> np.ndarray:
    return target_values(agent, s2, r, done, w, w_p, gamma)[0]


def ddqn_loss(agent: DdqnAgent, batch: Batch, targets=None):
    """Mean over the batch of |y - Q(s, a, w; theta)|^2 / m.

    Returns ``(loss, grad_theta1 (flat), grad_phi (Gradients))``; targets are constants.
    """
    W = batch.w
    Wp = interpolate_preference(agent.interp, W)
    thetas, htape = agent.composed(W)
    if targets is None:
        targets = target_values(agent, batch.s2, batch.r, batch.done, W, Wp, agent.cfg.gamma, thetas)
    Q, qtape = q_batch(agent, thetas, batch.s, W)
    B, m = len(W), agent.m
    rows = np.arange(B)
    a = np.asarray(batch.a, dtype=np.int64)
    diff = Q[rows, a] - targets
    loss = float(np.sum(diff * diff) / (m * B))
    dQ = np.zeros_like(Q)
    dQ[rows, a] = 2.0 * diff / (m * B)
    g_rows, _ = batched_backward(thetas, agent.q_spec, qtape, dQ.reshape(B, -1))
    g1, gphi = backprop_composition(g_rows, agent.comp, agent.hyper, htape)
    return loss, g1, gphi


def soft_update(target, source, tau: float):
    """target <- tau * source + (1 - tau) * target."""
    return soft_update_(target, source, tau)


def evaluate_policy(agent: DdqnAgent, w, env_factory, episodes: int = 1) -> np.ndarray:
    """Mean undiscounted return vector of the greedy composed policy for preference ``w``."""
    return evaluate_grid(agent, env_factory, np.atleast_2d(w), episodes)[0]


def train_ddqn(cfg: DdqnConfig, env_factory, eval_grid, ref=None, log_path=None, checkpoint_fn=None):
    """Returns ``(agent, TrainResult)``; the agent carries phi, theta_1 and theta_1'."""
    probe = env_factory()
    rng = np.random.default_rng(cfg.seed)
    agent = DdqnAgent(probe.obs_dim, probe.n_actions, probe.m, cfg, rng)
    result = run_training(agent, env_factory, cfg.loop(ref), eval_grid, log_path,
                          (lambda step, res: checkpoint_fn(agent, step, res)) if checkpoint_fn else None)
    return agent, result
