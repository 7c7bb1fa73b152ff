"""Tabular checks of the preference-conditioned Bellman optimality operator.

Q tables have shape ``(S, A, G, m)``: one m-vector per state, action and grid
preference. The supremum over preferences in the metric is taken over the grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import TabularMOMDP, random_tabular
from .preference import cosine_rows, simplex_lattice


class ConvergenceError(RuntimeError):
    pass


def preference_grid(m: int = 2, resolution: int = 20) -> np.ndarray:
    """Simplex lattice with spacing 1/resolution (21 points for m = 2 by default)."""
    return simplex_lattice(m, resolution)


def metric_d(Q, Q2, grid) -> float:
    """max over (s, a, w in grid) of |w^T (Q - Q2)|."""
    diff = np.asarray(Q) - np.asarray(Q2)
    return float(np.max(np.abs(np.einsum("sagm,gm->sag", diff, grid))))


def greedy_actions(Q, grid, with_cosine: bool = False):
    """a*(s, w) = argmax_a w^T Q(s, a, w), lowest index on ties; optionally cosine-weighted."""
    score = np.einsum("sagm,gm->sag", Q, grid)
    if with_cosine:
        score = score * cosine_rows(grid[None, None], Q)
    return np.argmax(score, axis=1)  # (S, G)


def bellman_operator(Q, momdp: TabularMOMDP, grid, gamma: float | None = None,
                     with_cosine: bool = False) -> np.ndarray:
    gamma = momdp.gamma if gamma is None else gamma
    R = momdp.R[:, :, None, :]
    if gamma == 0.0:
        return np.broadcast_to(R, Q.shape).copy()
    a_star = greedy_actions(Q, grid, with_cosine)
    S, _, G, _ = Q.shape
    # V[s', g] = Q[s', a*(s', g), g]
    V = Q[np.arange(S)[:, None], a_star, np.arange(G)[None, :]]  # (S, G, m)
    expected = np.einsum("sat,tgm->sagm", momdp.T, V)
    return R + gamma * expected


@dataclass
class ContractionReport:
    max_ratio: float
    gamma: float
    trials: int
    skipped: int
    ratios: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.gamma + 1e-9


def check_contraction(momdp: TabularMOMDP, grid, trials: int = 100, gamma: float | None = None,
                      rng: np.random.Generator | None = None, scale: float = 10.0,
                      with_cosine: bool = False) -> ContractionReport:
    """d(CQ, CQ') / d(Q, Q') over random pairs; pairs with d(Q, Q') == 0 are skipped."""
    gamma = momdp.gamma if gamma is None else gamma
    rng = np.random.default_rng(0) if rng is None else rng
    shape = (momdp.n_states, momdp.n_actions, len(grid), momdp.m)
    ratios, skipped = [], 0
    for _ in range(trials):
        Q = rng.uniform(-scale, scale, size=shape)
        Q2 = rng.uniform(-scale, scale, size=shape)
        d0 = metric_d(Q, Q2, grid)
        if d0 == 0.0:
            skipped += 1
            continue
        d1 = metric_d(bellman_operator(Q, momdp, grid, gamma, with_cosine),
                      bellman_operator(Q2, momdp, grid, gamma, with_cosine), grid)
        ratios.append(d1 / d0)
    return ContractionReport(max(ratios) if ratios else 0.0, gamma, trials, skipped, ratios)


def fixed_point_iterate(momdp: TabularMOMDP, grid, gamma: float | None = None, tol: float = 1e-8,
                        max_iters: int = 10_000, q0=None):
    """Banach iteration from ``q0`` (zeros by default) until d(Q_t, Q_{t+1}) < tol.

    Returns ``(Q, t, residuals)`` where ``t`` is that first index, so a start that is
    already a fixed point reports 0 and gamma = 0 from zeros reports 1.
    """
    gamma = momdp.gamma if gamma is None else gamma
    shape = (momdp.n_states, momdp.n_actions, len(grid), momdp.m)
    Q = np.zeros(shape) if q0 is None else np.array(q0, dtype=float)
    residuals = []
    for it in range(1, max_iters + 1):
        Qn = bellman_operator(Q, momdp, grid, gamma)
        r = metric_d(Q, Qn, grid)
        residuals.append(r)
        Q = Qn
        if r < tol:
            return Q, it - 1, residuals
    raise ConvergenceError(f"no convergence within {max_iters} iterations (last residual {residuals[-1]:.3g})")


def verify_bellman(n_mdps: int = 20, trials: int = 100, gamma: float = 0.9, points: int = 21,
                   tol: float = 1e-8, seed: int = 0) -> dict:
    """Contraction and fixed-point uniqueness over random MOMDPs (|S| <= 10, |A| <= 4, m = 2)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    rng = np.random.default_rng(seed)
    grid = preference_grid(2, points - 1)
    worst_ratio, worst_gap, worst_decay = 0.0, 0.0, -np.inf
    ok = True
    for i in range(n_mdps):
        S, A = int(rng.integers(2, 11)), int(rng.integers(2, 5))
        mdp = random_tabular(int(rng.integers(2 ** 31)), S, A, 2, gamma)
        rep = check_contraction(mdp, grid, trials, gamma, rng)
        worst_ratio = max(worst_ratio, rep.max_ratio)
        ok &= rep.passed
        shape = (S, A, len(grid), 2)
        Qa, _, res_a = fixed_point_iterate(mdp, grid, gamma, tol)
        Qb, _, res_b = fixed_point_iterate(mdp, grid, gamma, tol, q0=rng.uniform(-50, 50, size=shape))
        gap = metric_d(Qa, Qb, grid)
        worst_gap = max(worst_gap, gap)
        ok &= gap < 2 * tol / (1 - gamma)
        for res in (res_a, res_b):
            for prev, cur in zip(res, res[1:]):
                excess = cur - (gamma * prev + 1e-9)
                worst_decay = max(worst_decay, excess)
                ok &= excess <= 0
    return {
        "passed": bool(ok),
        "gamma": gamma,
        "mdps": n_mdps,
        "trials_per_mdp": trials,
        "grid_points": points,
        "max_contraction_ratio": worst_ratio,
        "max_fixed_point_gap": worst_gap,
        "fixed_point_gap_bound": 2 * tol / (1 - gamma),
        "max_decay_excess": worst_decay,
    }
