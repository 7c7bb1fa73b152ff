import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pslmorl.bellman import (
    ConvergenceError,
    bellman_operator,
    check_contraction,
    fixed_point_iterate,
    greedy_actions,
    metric_d,
    preference_grid,
    verify_bellman,
)
from pslmorl.envs import TabularMOMDP, policy_return, random_tabular

GRID = preference_grid(2)


def rand_q(rng, mdp, grid=GRID):
    return rng.uniform(-5, 5, size=(mdp.n_states, mdp.n_actions, len(grid), mdp.m))


def test_grid():
    assert GRID.shape == (21, 2) and np.allclose(GRID.sum(axis=1), 1)


def test_metric_examples():
    rng = np.random.default_rng(0)
    mdp = random_tabular(0, 4, 2, 2, 0.9)
    Q, Q2 = rand_q(rng, mdp), rand_q(rng, mdp)
    assert metric_d(Q, Q, GRID) == 0
    c = np.array([3.0, -1.0])
    assert metric_d(Q, Q + c, GRID) == pytest.approx(np.max(np.abs(GRID @ c)))
    assert metric_d(Q, Q2, GRID) == metric_d(Q2, Q, GRID)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_metric_triangle(seed):
    rng = np.random.default_rng(seed)
    mdp = random_tabular(seed % 1000, 3, 2, 2, 0.9)
    A, B, C = (rand_q(rng, mdp) for _ in range(3))
    assert metric_d(A, C, GRID) <= metric_d(A, B, GRID) + metric_d(B, C, GRID) + 1e-12


def test_gamma_zero():
    rng = np.random.default_rng(1)
    mdp = random_tabular(1, 5, 3, 2, 0.0)
    CQ = bellman_operator(rand_q(rng, mdp), mdp, GRID, 0.0)
    assert np.array_equal(CQ, np.broadcast_to(mdp.R[:, :, None, :], CQ.shape))
    rep = check_contraction(mdp, GRID, 10, 0.0, rng)
    assert rep.max_ratio == 0.0 and rep.passed
    Q, iters, _ = fixed_point_iterate(mdp, GRID, 0.0)
    assert iters == 1 and np.array_equal(Q, CQ)


def test_single_state_fixed_point():
    gamma = 0.8
    mdp = TabularMOMDP(np.ones((1, 1, 1)), np.array([[[2.0, 0.5]]]), np.ones(1), gamma)
    Q, _, _ = fixed_point_iterate(mdp, GRID, gamma, tol=1e-12)
    assert np.allclose(Q[0, 0], [2.0 / (1 - gamma), 0.5 / (1 - gamma)], atol=1e-9)


def test_lowest_index_tie():
    Q = np.zeros((1, 3, len(GRID), 2))
    assert np.all(greedy_actions(Q, GRID) == 0)


def test_contraction_random_8_state():
    rng = np.random.default_rng(2)
    for seed in range(3):
        mdp = random_tabular(seed, 8, 3, 2, 0.9)
        rep = check_contraction(mdp, GRID, 100, 0.9, rng)
        assert rep.passed and rep.max_ratio <= 0.9 + 1e-9 and len(rep.ratios) == 100


def test_degenerate_pairs_skipped():
    mdp = random_tabular(0, 2, 2, 2, 0.9)

    class Same:
        def uniform(self, lo, hi, size):
            return np.ones(size)

    rep = check_contraction(mdp, GRID, 5, 0.9, Same())
    assert rep.skipped == 5 and rep.ratios == []


def test_fixed_point_unique_and_geometric():
    rng = np.random.default_rng(3)
    mdp = random_tabular(3, 6, 3, 2, 0.9)
    tol = 1e-8
    Qa, _, ra = fixed_point_iterate(mdp, GRID, 0.9, tol)
    Qb, _, rb = fixed_point_iterate(mdp, GRID, 0.9, tol, q0=rand_q(rng, mdp) * 10)
    assert metric_d(Qa, Qb, GRID) < 2 * tol / (1 - 0.9)
    for res in (ra, rb):
        assert all(cur <= 0.9 * prev + 1e-9 for prev, cur in zip(res, res[1:]))


def test_fixed_point_vertex_matches_policy_evaluation():
    # At a vertex preference the greedy fixed point is single-objective value iteration;
    # its greedy policy's exact return is the optimum over all deterministic policies.
    import itertools
    mdp = random_tabular(4, 3, 2, 2, 0.9)
    grid = np.array([[1.0, 0.0], [0.0, 1.0]])
    Q, _, _ = fixed_point_iterate(mdp, grid, 0.9, 1e-12)
    for g in range(2):
        pi = np.argmax(Q[:, :, g, g], axis=1)
        best = max(policy_return(mdp, p)[g] for p in itertools.product(range(2), repeat=3))
        assert policy_return(mdp, pi)[g] == pytest.approx(best, abs=1e-8)
        V = Q[np.arange(3), pi, g, g]
        assert mdp.mu @ V == pytest.approx(best, abs=1e-8)


def test_max_iters_error():
    mdp = random_tabular(0, 3, 2, 2, 0.99)
    with pytest.raises(ConvergenceError):
        fixed_point_iterate(mdp, GRID, 0.99, 1e-12, max_iters=5)


def test_cosine_mode_observational():
    rng = np.random.default_rng(5)
    mdp = random_tabular(5, 4, 3, 2, 0.9)
    rep = check_contraction(mdp, GRID, 20, 0.9, rng, with_cosine=True)
    assert len(rep.ratios) == 20 and np.all(np.isfinite(rep.ratios))


def test_verify_small_and_gamma_guard():
    out = verify_bellman(n_mdps=3, trials=10)
    assert out["passed"] and out["max_contraction_ratio"] <= 0.9 + 1e-9
    with pytest.raises(ValueError):
        verify_bellman(gamma=1.01)
