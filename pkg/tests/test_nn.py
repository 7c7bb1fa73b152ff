import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pslmorl.gradcheck import numeric_grad, rel_error
from pslmorl.nn import (
    ContractError,
    FlatParams,
    Gradients,
    LayerSpec,
    MlpParams,
    NumericError,
    OptimizerState,
    ShapeError,
    activate,
    batched_backward,
    batched_forward,
    flat_vector,
    flatten,
    init_mlp,
    load_flat_,
    mlp_backward,
    mlp_forward,
    mlp_spec,
    optimizer_step,
    shape_table,
    soft_update_,
    unflatten,
    zeros_like_spec,
)


def one_by_one(w, b, act):
    return MlpParams([(np.array([[w]], float), np.array([b], float))], [LayerSpec(1, 1, act)])


def test_forward_examples():
    assert mlp_forward(one_by_one(1, 0, "relu"), [2.0])[0].tolist() == [2.0]
    assert mlp_forward(one_by_one(1, 0, "relu"), [-3.0])[0].tolist() == [0.0]
    z = zeros_like_spec(mlp_spec([3, 4, 2]))
    assert np.array_equal(mlp_forward(z, np.array([1.0, -2.0, 5.0]))[0], np.zeros(2))


def test_backward_linear_example():
    p = one_by_one(1, 0, "identity")
    _, tape = mlp_forward(p, [3.0])
    g, gx = mlp_backward(p, tape, [1.0])
    assert g.layers[0][0].tolist() == [[3.0]]
    assert g.layers[0][1].tolist() == [1.0]
    assert gx.tolist() == [1.0]


def test_backward_dead_relu():
    p = one_by_one(1, 0, "relu")
    _, tape = mlp_forward(p, [-3.0])
    g, gx = mlp_backward(p, tape, [7.0])
    assert g.norm() == 0.0 and gx.tolist() == [0.0]


def test_backward_matches_fd_two_layer():
    rng = np.random.default_rng(1)
    p = init_mlp(mlp_spec([4, 6, 3]), rng)
    for _, b in p.layers:
        b += rng.normal(0, 0.1, b.shape)
    x = rng.normal(size=(5, 4))
    c = rng.normal(size=(5, 3))
    _, tape = mlp_forward(p, x)
    g, _ = mlp_backward(p, tape, c)
    vec = flat_vector(p)

    def f(v):
        load_flat_(p, v)
        return float(np.sum(c * mlp_forward(p, x)[0]))

    fd = numeric_grad(f, vec.copy(), h=1e-5)
    assert rel_error(g.flat(), fd) < 1e-4


def test_stale_tape_rejected():
    rng = np.random.default_rng(0)
    p = init_mlp(mlp_spec([2, 3, 1]), rng)
    _, tape = mlp_forward(p, np.ones(2))
    optimizer_step(OptimizerState("sgd", 0.1), p, Gradients.from_flat(np.ones(p.n_params), p.spec))
    with pytest.raises(ContractError):
        mlp_backward(p, tape, np.ones(1))


def test_shape_errors():
    p = init_mlp(mlp_spec([2, 3, 1]), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        mlp_forward(p, np.ones(3))
    with pytest.raises(ShapeError):
        MlpParams([(np.zeros((2, 2)), np.zeros(2))], [LayerSpec(3, 2)])
    with pytest.raises(ShapeError):
        mlp_spec([3])


def test_sgd_example():
    p = one_by_one(1.0, 0.0, "identity")
    g = Gradients([(np.array([[1.0]]), np.array([0.0]))], p.spec)
    optimizer_step(OptimizerState("sgd", 0.1), p, g)
    assert p.layers[0][0][0, 0] == pytest.approx(0.9)


def test_adam_single_step():
    # bias-corrected first step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
    p = one_by_one(1.0, 0.0, "identity")
    g = Gradients([(np.array([[1.0]]), np.array([0.0]))], p.spec)
    optimizer_step(OptimizerState("adam", 1e-3), p, g)
    assert p.layers[0][0][0, 0] == pytest.approx(1.0 - 1e-3 / (1.0 + 1e-8), abs=1e-15)
    assert p.layers[0][1][0] == 0.0


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_zero_gradient_leaves_params(kind):
    p = init_mlp(mlp_spec([3, 4, 2]), np.random.default_rng(0))
    before = flat_vector(p).copy()
    for _ in range(3):
        optimizer_step(OptimizerState(kind, 0.1), p, Gradients.zeros(p.spec))
    assert np.array_equal(before, flat_vector(p))


def test_nonfinite_gradient_named():
    p = init_mlp(mlp_spec([2, 2]), np.random.default_rng(0))
    v = np.zeros(p.n_params)
    v[4] = np.nan
    with pytest.raises(NumericError, match="index 4"):
        optimizer_step(OptimizerState("sgd", 0.1), p, Gradients.from_flat(v, p.spec))


def test_flat_layout_example():
    p = one_by_one(2.0, 3.0, "relu")
    assert flatten(p).data.tolist() == [2.0, 3.0]


def test_flat_layout_order():
    spec = mlp_spec([2, 3, 1])
    p = init_mlp(spec, np.random.default_rng(0))
    d = flat_vector(p)
    W0, b0 = p.layers[0]
    W1, b1 = p.layers[1]
    assert np.array_equal(d, np.concatenate([W0.ravel(), b0, W1.ravel(), b1]))
    assert shape_table(spec) == [(0, 3, 2), (6, 3, 1), (9, 1, 3), (12, 1, 1)]


def test_truncated_flat_rejected():
    spec = mlp_spec([2, 3, 1])
    with pytest.raises(ShapeError):
        FlatParams(np.zeros(5), shape_table(spec))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 2 ** 31))
def test_flatten_roundtrip(sizes, seed):
    p = init_mlp(mlp_spec(sizes, "tanh"), np.random.default_rng(seed))
    q = unflatten(flatten(p), p.spec)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    v = np.random.default_rng(seed).normal(size=p.n_params)
    assert np.array_equal(flat_vector(unflatten(FlatParams(v, shape_table(p.spec)), p.spec)), v)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.sampled_from(["relu", "tanh"]))
def test_activations_one_lipschitz(a, b, kind):
    assert abs(activate(np.array(a), kind) - activate(np.array(b), kind)) <= abs(a - b) + 1e-12


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    p = init_mlp(mlp_spec([4, 8, 8, 2]), rng)
    x = rng.normal(size=(7, 4))
    assert np.array_equal(mlp_forward(p, x)[0], mlp_forward(p, x)[0])


def test_batched_matches_per_row():
    rng = np.random.default_rng(5)
    spec = mlp_spec([3, 5, 2], output="tanh")
    nets = [init_mlp(spec, rng) for _ in range(4)]
    theta = np.stack([flat_vector(n) for n in nets])
    x = rng.normal(size=(4, 3))
    out, tape = batched_forward(theta, spec, x)
    g_out = rng.normal(size=(4, 2))
    g_theta, g_x = batched_backward(theta, spec, tape, g_out)
    for i, n in enumerate(nets):
        y, t = mlp_forward(n, x[i])
        assert np.allclose(out[i], y, rtol=0, atol=1e-14)
        g, gx = mlp_backward(n, t, g_out[i])
        assert np.allclose(g_theta[i], g.flat(), atol=1e-14)
        assert np.allclose(g_x[i], gx, atol=1e-14)


def test_soft_update_examples():
    t, s = one_by_one(2.0, 0.0, "identity"), one_by_one(4.0, 0.0, "identity")
    soft_update_(t, s, 0.5)
    assert t.layers[0][0][0, 0] == 3.0
    soft_update_(t, s, 0.0)
    assert t.layers[0][0][0, 0] == 3.0
    soft_update_(t, s, 1.0)
    assert t.layers[0][0][0, 0] == 4.0
