"""Radial Algorithm baseline: one independent scalarized DDQN per fixed weight."""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .ddqn import soft_update
from .nn import (
    OptimizerState,
    batched_forward,
    flat_vector,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mlp_spec,
    optimizer_step,
)
from .pareto import pareto_filter
from .preference import check_preference, simplex_lattice
from .training import LoopConfig, evaluate_grid, run_training


@dataclass
class RaConfig:
    n_weights: int = 11
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 32
    learning_rate: float = 3e-4
    hidden: tuple = (32, 32, 32)
    buffer_size: int = 10_000
    total_steps: int = 20_000  # per weight
    workers: int = 10
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.3
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.n_weights < 1:
            raise ValueError("n_weights must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")


def radial_weights(m: int, n: int) -> np.ndarray:
    """``n`` evenly spaced weights; for m > 2 an evenly strided subset of the smallest simplex lattice holding ``n`` points."""
    if n == 1:
        return np.full((1, m), 1.0 / m)
    if m == 2:
        t = np.linspace(0.0, 1.0, n)
        return np.stack([t, 1.0 - t], axis=1)
    H = 1
    while len(simplex_lattice(m, H)) < n:
        H += 1
    grid = simplex_lattice(m, H)
    pick = np.linspace(0, len(grid) - 1, n).round().astype(int)
    return grid[pick]


class ScalarDdqn:
    """Plain DDQN on the scalar reward w^T r for one fixed w. Learner-protocol compatible."""

    def __init__(self, obs_dim, n_actions, m, w, cfg: RaConfig, rng):
        self.obs_dim, self.n_actions, self.m = obs_dim, n_actions, m
        self.action_dim = None
        self.w = check_preference(w)
        self.cfg = cfg
        self.spec = mlp_spec([obs_dim, *cfg.hidden, n_actions])
        self.net = init_mlp(self.spec, rng)
        self.target = self.net.copy()
        self.opt = OptimizerState("adam", cfg.learning_rate)
        self.lock = threading.Lock()
        self._last = {}

    def policy_params(self, w):
        theta = flat_vector(self.net)
        return theta if np.ndim(w) == 1 else np.tile(theta, (len(w), 1))

    def epsilon(self, env_step):
        c = self.cfg
        frac = min(1.0, env_step / max(1.0, c.eps_decay_frac * c.total_steps))
        return c.eps_start + frac * (c.eps_end - c.eps_start)

    def exploration(self, env_step):
        return {"epsilon": self.epsilon(env_step)}

    def act(self, theta, obs, w, rng, env_step):
        if rng.random() < self.epsilon(env_step):
            return int(rng.integers(self.n_actions))
        out, _ = batched_forward(np.asarray(theta)[None], self.spec, np.asarray(obs)[None])
        return int(np.argmax(out[0]))

    def greedy_batch(self, thetas, obs, W):
        out, _ = batched_forward(np.atleast_2d(thetas), self.spec, np.atleast_2d(obs))
        return np.argmax(out, axis=1)

    def update(self, buffer, rng):
        b = buffer.sample(rng, self.cfg.batch_size)
        r = b.r @ self.w
        q_next, _ = mlp_forward(self.net, b.s2)
        q_tgt, _ = mlp_forward(self.target, b.s2)
        a_star = np.argmax(q_next, axis=1)
        rows = np.arange(len(r))
        y = r + self.cfg.gamma * (~b.done) * q_tgt[rows, a_star]
        q, tape = mlp_forward(self.net, b.s)
        diff = q[rows, b.a] - y
        loss = float(np.mean(diff ** 2))
        dq = np.zeros_like(q)
        dq[rows, b.a] = 2.0 * diff / len(r)
        grads, _ = mlp_backward(self.net, tape, dq)
        optimizer_step(self.opt, self.net, grads)
        soft_update(self.target, self.net, self.cfg.tau)
        self._last = {"loss_scalar": loss}
        return {"loss": loss}

    def diagnostics(self):
        return dict(self._last)


def train_radial(cfg: RaConfig, env_factory, log_path=None):
    """Train one scalarized learner per weight; returns ``(weights, returns, front)``."""
    probe = env_factory()
    W = radial_weights(probe.m, cfg.n_weights)
    returns = []
    for i, w in enumerate(W):
        seed = cfg.seed + 7919 * i
        agent = ScalarDdqn(probe.obs_dim, probe.n_actions, probe.m, w, cfg, np.random.default_rng(seed))
        loop = LoopConfig(total_steps=cfg.total_steps, workers=cfg.workers,
                          eval_interval=max(1, cfg.total_steps), warmup=cfg.batch_size,
                          buffer_size=cfg.buffer_size, regions=False, seed=seed)
        run_training(agent, env_factory, loop, w[None], log_path)
        returns.append(evaluate_grid(agent, env_factory, w[None])[0])
    returns = np.array(returns)
    return W, returns, pareto_filter(returns)
