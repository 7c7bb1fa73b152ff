"""Multi-objective environments: Fruit Tree Navigation, a continuous point-navigation task,
and small explicit MOMDPs used as brute-force oracles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ContractError
from .pareto import pareto_filter

FTN_OBJECTIVES = ("protein", "carbs", "fats", "vitamins", "minerals", "water")


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class MomdpDescriptor:
    m: int
    state_dim: int
    action_dim: int
    discrete: bool
    discount: tuple
    episode_limit: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("a MOMDP needs m >= 2 objectives")
        if len(self.discount) != self.m or not all(0.0 <= g < 1.0 for g in self.discount):
            raise ValueError(f"discounts must be m values in [0, 1), got {self.discount}")


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: object
    r: np.ndarray
    s2: np.ndarray
    done: bool
    w: np.ndarray


# -- Fruit Tree Navigation ----------------------------------------------------

def gen_leaf_rewards(seed: int, depth: int, radius: float = 10.0) -> np.ndarray:
    """Uniform points on the nonnegative orthant of the radius-``radius`` sphere in R^6."""
    rng = np.random.default_rng(seed)
    g = np.abs(rng.standard_normal((2 ** depth, 6)))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def load_leaf_rewards(path, depth: int) -> np.ndarray:
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 6:
                raise IngestionError(f"{path}:{lineno}: expected 6 values, got {len(parts)}")
            try:
                vals = [float(x) for x in parts]
            except ValueError as e:
                raise IngestionError(f"{path}:{lineno}: {e}") from None
            if not all(np.isfinite(vals)):
                raise IngestionError(f"{path}:{lineno}: non-finite reward")
            rows.append(vals)
    if len(rows) != 2 ** depth:
        raise IngestionError(f"{path}: expected {2 ** depth} rows for depth {depth}, got {len(rows)}")
    return np.array(rows)


class FtnEnv:
    """Binary tree of depth ``d``; action 0 goes left, 1 goes right; the leaf pays its reward row."""

    n_actions = 2
    m = 6

    def __init__(self, depth: int = 5, leaf_rewards=None, seed: int = 0, level_onehot: bool = False,
                 gamma: float = 0.99):
        self.depth = depth
        self.leaf_rewards = gen_leaf_rewards(seed, depth) if leaf_rewards is None else np.asarray(leaf_rewards, dtype=float)
        if self.leaf_rewards.shape != (2 ** depth, 6):
            raise ValueError(f"leaf rewards must be {(2 ** depth, 6)}, got {self.leaf_rewards.shape}")
        if np.any(self.leaf_rewards < 0) or not np.all(np.isfinite(self.leaf_rewards)):
            raise ValueError("leaf rewards must be finite and nonnegative")
        self.level_onehot = level_onehot
        self.descriptor = MomdpDescriptor(6, self.obs_dim, 2, True, (gamma,) * 6, depth)
        self.level, self.index, self.done = 0, 0, False

    @property
    def obs_dim(self) -> int:
        return 2 + (self.depth + 1 if self.level_onehot else 0)

    def encode(self, level, index) -> np.ndarray:
        base = [level / self.depth, index / 2 ** level]
        if self.level_onehot:
            oh = np.zeros(self.depth + 1)
            oh[level] = 1.0
            return np.concatenate([base, oh])
        return np.array(base)

    def reset(self) -> np.ndarray:
        self.level, self.index, self.done = 0, 0, False
        return self.encode(0, 0)

    def step(self, action):
        if self.done:
            raise ContractError("step() called on a finished episode")
        a = int(action)
        if a not in (0, 1):
            raise ValueError(f"FTN action must be 0 (left) or 1 (right), got {action}")
        self.level += 1
        self.index = 2 * self.index + a
        r = np.zeros(6)
        if self.level == self.depth:
            self.done = True
            r = self.leaf_rewards[self.index].copy()
        return self.encode(self.level, self.index), r, self.done


def ftn_oracle_front(env: FtnEnv) -> np.ndarray:
    return pareto_filter(env.leaf_rewards)


# -- continuous point navigation --------------------------------------------------

class PointNavEnv:
    """Planar point mass: objective 1 is forward (x) velocity, objective 2 is 1 - |a|^2 / 2."""

    m = 2
    action_dim = 2
    obs_dim = 5

    def __init__(self, dt: float = 0.1, damping: float = 0.1, episode_limit: int = 50, gamma: float = 0.99):
        if not 0 < damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        self.dt, self.damping, self.episode_limit = dt, damping, episode_limit
        self.descriptor = MomdpDescriptor(2, 5, 2, False, (gamma, gamma), episode_limit)
        self.reset()

    def _obs(self):
        return np.concatenate([self.position, self.velocity, [self.timer / self.episode_limit]])

    def reset(self):
        self.position = np.zeros(2)
        self.velocity = np.zeros(2)
        self.timer = 0
        return self._obs()

    def step(self, action):
        if self.timer >= self.episode_limit:
            raise ContractError("step() called on a finished episode")
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        self.velocity = (1.0 - self.damping) * self.velocity + self.dt * a
        self.position = self.position + self.dt * self.velocity
        self.timer += 1
        r = np.array([self.velocity[0], 1.0 - float(a @ a) / 2.0])
        return self._obs(), r, self.timer >= self.episode_limit


# -- tabular MOMDPs ----------------------------------------------------------------

@dataclass
class TabularMOMDP:
    T: np.ndarray  # (S, A, S)
    R: np.ndarray  # (S, A, m)
    mu: np.ndarray
    gamma: float = 0.9
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        S, A, S2 = self.T.shape
        if S2 != S or self.R.shape[:2] != (S, A) or self.mu.shape != (S,):
            raise ValueError("inconsistent tabular MOMDP shapes")
        if not np.allclose(self.T.sum(axis=2), 1.0, atol=1e-9, rtol=0):
            raise ValueError("transition rows must sum to 1")
        if abs(self.mu.sum() - 1.0) > 1e-9:
            raise ValueError("initial distribution must sum to 1")

    @property
    def n_states(self):
        return self.T.shape[0]

    @property
    def n_actions(self):
        return self.T.shape[1]

    @property
    def m(self):
        return self.R.shape[2]


def random_tabular(seed: int, n_states: int, n_actions: int, m: int, gamma: float) -> TabularMOMDP:
    if not (1 <= n_states <= 32 and 1 <= n_actions <= 8):
        raise ValueError("tabular MOMDPs are limited to |S| <= 32, |A| <= 8")
    rng = np.random.default_rng(seed)
    T = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    R = rng.uniform(0.0, 1.0, size=(n_states, n_actions, m))
    mu = rng.dirichlet(np.ones(n_states))
    return TabularMOMDP(T, R, mu, gamma, {"seed": seed})


def policy_return(momdp: TabularMOMDP, policy) -> np.ndarray:
    """Exact discounted return vector of a deterministic policy (one action per state)."""
    S = momdp.n_states
    idx = np.arange(S)
    P = momdp.T[idx, policy]
    Rp = momdp.R[idx, policy]
    V = np.linalg.solve(np.eye(S) - momdp.gamma * P, Rp)
    return momdp.mu @ V
