"""Ring replay buffer with hindsight preference relabeling at sample time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import Transition
from .nn import ContractError
from .preference import sample_preferences


@dataclass(frozen=True)
class HerConfig:
    extra_preferences: int = 3

    def __post_init__(self):
        if self.extra_preferences < 0:
            raise ValueError("extra_preferences must be >= 0")


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray
    w: np.ndarray
    index: np.ndarray  # buffer slot each row came from

    def __len__(self):
        return len(self.r)

    def __iter__(self):
        for i in range(len(self)):
            yield Transition(self.s[i], self.a[i], self.r[i], self.s2[i], bool(self.done[i]), self.w[i])


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, m: int, action_dim: int | None = None):
        """``action_dim=None`` stores discrete (integer) actions."""
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.m = m
        self.s = np.zeros((capacity, obs_dim))
        self.s2 = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.int64) if action_dim is None else np.zeros((capacity, action_dim))
        self.r = np.zeros((capacity, m))
        self.done = np.zeros(capacity, dtype=bool)
        self.w = np.zeros((capacity, m))
        self.cursor = 0
        self.size = 0
        self.pushed = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        i = self.cursor
        self.s[i], self.a[i], self.r[i] = t.s, t.a, t.r
        self.s2[i], self.done[i], self.w[i] = t.s2, t.done, t.w
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def stats(self) -> dict:
        return {"size": self.size, "pushed": self.pushed, "overwritten": max(0, self.pushed - self.capacity)}

    def sample(self, rng: np.random.Generator, n: int, her: HerConfig = HerConfig(0)) -> Batch:
        """``n`` uniform draws with replacement; each is emitted once with its stored preference
        followed by ``her.extra_preferences`` copies carrying fresh uniform preferences."""
        if self.size == 0:
            raise ContractError("cannot sample from an empty buffer")
        k = 1 + her.extra_preferences
        idx = np.repeat(rng.integers(0, self.size, size=n), k)
        w = self.w[idx].copy()
        if her.extra_preferences:
            relabel = np.arange(n * k) % k != 0
            w[relabel] = sample_preferences(rng, self.m, int(relabel.sum()))
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx], w, idx)
