"""Worker/learner loop shared by the DDQN and TD3 instantiations.

Workers own an environment, an RNG and a preference region. At the start of each
episode a worker draws a preference and asks the learner for the composed policy
parameters; those parameters stay fixed for the episode. Transitions go to the
learner, which owns the replay buffer, the networks and the archive.

Two drivers exist. The deterministic driver steps the workers round-robin in the
calling thread. The threaded driver runs each worker in its own thread and feeds
transitions through a queue; it is not reproducible.
"""
from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from .envs import Transition
from .pareto import ObjectivePoint, ParetoArchive, hypervolume, pareto_filter, sparsity
from .preference import PreferenceRegion, sample_preference
from .replay import ReplayBuffer

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class LoopConfig:
    total_steps: int = 100_000
    workers: int = 10
    eval_interval: int = 5_000
    eval_episodes: int = 1
    warmup: int = 32
    buffer_size: int = 10_000
    preference_resample: str = "episode"
    regions: bool = True
    deterministic: bool = True
    seed: int = 0
    ref: tuple | None = None
    updates_per_round: int = 1

    def __post_init__(self):
        if self.updates_per_round < 1:
            raise ValueError("updates_per_round must be >= 1")
        if self.preference_resample not in ("episode", "step"):
            raise ValueError("preference_resample must be 'episode' or 'step'")
        if self.workers < 1 or self.total_steps < 0 or self.eval_interval < 1:
            raise ValueError("invalid loop configuration")


@dataclass
class TrainResult:
    archive: ParetoArchive
    log: list = field(default_factory=list)
    env_steps: int = 0
    updates: int = 0


class RolloutWorker:
    def __init__(self, index: int, env, rng: np.random.Generator, m: int,
                 region: PreferenceRegion | None, resample: str = "episode"):
        self.index = index
        self.env = env
        self.rng = rng
        self.m = m
        self.region = region
        self.resample = resample
        self.obs = None
        self.w = None
        self.theta = None
        self.episodes = 0

    def step(self, learner, env_step: int) -> Transition:
        if self.obs is None:
            self.obs = self.env.reset()
            self.w = sample_preference(self.rng, self.m, self.region)
            self.theta = learner.policy_params(self.w)
        elif self.resample == "step":
            self.w = sample_preference(self.rng, self.m, self.region)
            self.theta = learner.policy_params(self.w)
        a = learner.act(self.theta, self.obs, self.w, self.rng, env_step)
        s2, r, done = self.env.step(a)
        t = Transition(self.obs, a, r, s2, done, self.w)
        if done:
            self.obs = None
            self.episodes += 1
        else:
            self.obs = s2
        return t


def evaluate_grid(learner, env_factory, grid, episodes: int = 1) -> np.ndarray:
    """Undiscounted mean return vector of the greedy policy for each preference in ``grid``."""
    grid = np.asarray(grid, dtype=float)
    G = len(grid)
    thetas = learner.policy_params(grid)
    totals = np.zeros((G, learner.m))
    for _ in range(episodes):
        envs = [env_factory() for _ in range(G)]
        obs = np.array([e.reset() for e in envs])
        active = np.ones(G, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            acts = learner.greedy_batch(thetas[idx], obs[idx], grid[idx])
            for j, i in enumerate(idx):
                s2, r, done = envs[i].step(acts[j])
                totals[i] += r
                obs[i] = s2
                if done:
                    active[i] = False
    return totals / episodes


def _front_metrics(J, ref):
    front = pareto_filter(J)
    sp = sparsity(front)
    return hypervolume(front, ref), sp


def run_training(learner, env_factory, cfg: LoopConfig, eval_grid, log_path=None,
                 checkpoint_fn=None) -> TrainResult:
    m = learner.m
    ref = np.zeros(m) if cfg.ref is None else np.asarray(cfg.ref, dtype=float)
    base = np.random.default_rng(cfg.seed)
    learn_rng = np.random.default_rng(base.integers(2 ** 63))
    workers = []
    for k in range(cfg.workers):
        region = PreferenceRegion(k, cfg.workers) if cfg.regions and cfg.workers > 1 else None
        workers.append(RolloutWorker(k, env_factory(), np.random.default_rng(cfg.seed + 1000 + k), m,
                                     region, cfg.preference_resample))
    buffer = ReplayBuffer(cfg.buffer_size, learner.obs_dim, m, learner.action_dim)
    result = TrainResult(ParetoArchive())
    log_file = open(log_path, "a") if log_path else None
    losses: list[float] = []

    def evaluate(step):
        J = evaluate_grid(learner, env_factory, eval_grid, cfg.eval_episodes)
        for w, j in zip(eval_grid, J):
            result.archive.insert(ObjectivePoint(j, {"preference": np.array(w), "step": step}))
        hv, sp = _front_metrics(J, ref)
        rec = {
            "step": step,
            "updates": result.updates,
            "loss": float(np.mean(losses)) if losses else None,
            "exploration": learner.exploration(step),
            "eval_hv": hv,
            "eval_sp": sp,
            "archive_hv": result.archive.hypervolume(ref),
            "archive_size": len(result.archive),
            "buffer": buffer.stats(),
        }
        rec.update(learner.diagnostics())
        losses.clear()
        result.log.append(rec)
        if log_file:
            log_file.write(json.dumps(rec) + "\n")
            log_file.flush()
        log.info("step %d hv %.4g archive %d", step, hv, len(result.archive))
        if checkpoint_fn:
            checkpoint_fn(step, result)

    def learn():
        for _ in range(cfg.updates_per_round):
            learn_once()

    def learn_once():
        if buffer.size >= max(cfg.warmup, 1):
            info = learner.update(buffer, learn_rng)
            result.updates += 1
            loss = info["loss"]
            if not np.isfinite(loss):
                if checkpoint_fn:
                    checkpoint_fn(result.env_steps, result)
                raise TrainingDiverged(f"non-finite loss {loss} at env step {result.env_steps}")
            losses.append(loss)

    try:
        evaluate(0)
        next_eval = cfg.eval_interval
        if cfg.deterministic or cfg.workers == 1:
            while result.env_steps < cfg.total_steps:
                for w in workers:
                    if result.env_steps >= cfg.total_steps:
                        break
                    buffer.push(w.step(learner, result.env_steps))
                    result.env_steps += 1
                learn()
                if result.env_steps >= next_eval:
                    evaluate(result.env_steps)
                    next_eval += cfg.eval_interval
        else:
            _run_threaded(learner, workers, buffer, cfg, result, learn, evaluate)
        if not result.log or result.log[-1]["step"] != result.env_steps:
            evaluate(result.env_steps)
    finally:
        if log_file:
            log_file.close()
    return result


def _run_threaded(learner, workers, buffer, cfg, result, learn, evaluate):
    q: queue.Queue = queue.Queue(maxsize=4 * len(workers))
    stop = threading.Event()

    def work(w):
        while not stop.is_set():
            with learner.lock:
                t = None if stop.is_set() else w.step(learner, result.env_steps)
            if t is None:
                return
            while not stop.is_set():
                try:
                    q.put(t, timeout=0.1)
                    break
                except queue.Full:
                    continue

    threads = [threading.Thread(target=work, args=(w,), daemon=True) for w in workers]
    for th in threads:
        th.start()
    next_eval = cfg.eval_interval
    try:
        while result.env_steps < cfg.total_steps:
            buffer.push(q.get())
            result.env_steps += 1
            if result.env_steps % len(workers) == 0:
                with learner.lock:
                    learn()
            if result.env_steps >= next_eval:
                with learner.lock:
                    evaluate(result.env_steps)
                next_eval += cfg.eval_interval
    finally:
        stop.set()
        for th in threads:
            th.join(timeout=5)
