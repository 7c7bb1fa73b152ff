import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pslmorl.gradcheck import check_hyper_chain, numeric_grad, rel_error
from pslmorl.hypernet import (
    Composition,
    FusionConfig,
    Hypernetwork,
    backprop_composition,
    backprop_fusion,
    fuse,
    fuse_add,
    generate_params,
    make_hypernetwork,
)
from pslmorl.nn import (
    ShapeError,
    batched_backward,
    batched_forward,
    flat_vector,
    init_mlp,
    load_flat_,
    mlp_spec,
    param_count,
    zeros_like_spec,
)

TARGET = mlp_spec([2, 4, 2])


def test_zero_hypernetwork_gives_zero():
    net = zeros_like_spec(mlp_spec([2, 8, param_count(TARGET)]))
    h = Hypernetwork(net, TARGET)
    theta2, _ = generate_params(h, [0.3, 0.7])
    assert np.array_equal(theta2, np.zeros(param_count(TARGET)))


def test_generate_deterministic_and_nonconstant():
    h = make_hypernetwork(2, TARGET, np.random.default_rng(0), hidden=(8,))
    a, _ = generate_params(h, [0.3, 0.7])
    b, _ = generate_params(h, [0.3, 0.7])
    c, _ = generate_params(h, [0.6, 0.4])
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_output_size_checked():
    with pytest.raises(ShapeError):
        Hypernetwork(zeros_like_spec(mlp_spec([2, 3])), TARGET)


def test_fuse_examples():
    t1, t2 = np.array([2.0]), np.array([4.0])
    assert fuse(t1, t2, FusionConfig(0.0)).tolist() == [2.0]
    assert fuse(t1, t2, FusionConfig(1.0)).tolist() == [4.0]
    assert fuse(t1, t2, FusionConfig(0.5)).tolist() == [3.0]
    assert fuse_add(t1, t2).tolist() == [6.0]
    assert fuse_add(t1, np.zeros(1)).tolist() == [2.0]
    with pytest.raises(ValueError):
        FusionConfig(1.5)
    with pytest.raises(ShapeError):
        fuse(np.zeros(3), np.zeros(2), FusionConfig(0.5))


arrays = st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4).map(np.array)


@settings(max_examples=60, deadline=None)
@given(arrays, arrays, arrays, st.floats(0, 1), st.floats(-3, 3))
def test_fusion_algebra(a, b, c, alpha, k):
    cfg = FusionConfig(alpha)
    assert np.allclose(fuse(a, a, cfg), a, rtol=1e-12, atol=1e-9)
    assert np.allclose(fuse_add(a, b), fuse(2 * a, 2 * b, FusionConfig(0.5)), rtol=1e-12, atol=1e-9)
    # linear in each argument
    assert np.allclose(fuse(a + k * c, b, cfg), fuse(a, b, cfg) + k * (1 - alpha) * c, atol=1e-6)
    assert np.allclose(fuse(a, b + k * c, cfg), fuse(a, b, cfg) + k * alpha * c, atol=1e-6)


def test_composition_modes():
    a, b = np.array([1.0, 2.0]), np.array([[10.0, 20.0], [30.0, 40.0]])
    assert np.array_equal(Composition("gen", 0.3).compose(a, b), b)
    assert np.array_equal(Composition("add", 0.3).compose(a, b), a + b)
    assert np.allclose(Composition("fusion", 0.25).compose(a, b), 0.75 * a + 0.25 * b)
    with pytest.raises(ValueError):
        Composition("mix")


def _chain(alpha, seed=0):
    rng = np.random.default_rng(seed)
    theta1 = init_mlp(TARGET, rng)
    h = make_hypernetwork(2, TARGET, rng, hidden=(8,), out_scale=1.0)
    W = rng.dirichlet([1, 1], size=3)
    x = rng.normal(size=(3, 2))
    c = rng.normal(size=(3, 2))
    th2, htape = generate_params(h, W)
    thetas = fuse(flat_vector(theta1), th2, FusionConfig(alpha))
    _, tape = batched_forward(thetas, TARGET, x)
    g_rows, _ = batched_backward(thetas, TARGET, tape, c)
    return backprop_fusion(g_rows, FusionConfig(alpha), h, htape)


def test_alpha_zero_blocks_phi():
    g1, gphi = _chain(0.0)
    assert gphi.norm() == 0.0 and np.linalg.norm(g1) > 0


def test_alpha_one_blocks_theta1():
    g1, gphi = _chain(1.0)
    assert np.linalg.norm(g1) == 0.0 and gphi.norm() > 0


def test_gen_mode_blocks_theta1_add_passes_both():
    rng = np.random.default_rng(0)
    h = make_hypernetwork(2, TARGET, rng, hidden=(8,))
    g = rng.normal(size=(3, param_count(TARGET)))
    _, tape = generate_params(h, rng.dirichlet([1, 1], size=3))
    g1, gphi = backprop_composition(g, Composition("gen"), h, tape)
    assert np.linalg.norm(g1) == 0.0 and gphi.norm() > 0
    g1, gphi = backprop_composition(g, Composition("add"), h, tape)
    assert np.array_equal(g1, g.sum(axis=0)) and gphi.norm() > 0


def test_end_to_end_fd_small_chain():
    # hypernet 2 -> 8 -> |target|, target 2 -> 4 -> 2, scalar loss through the fused chain
    rng = np.random.default_rng(11)
    theta1 = init_mlp(TARGET, rng)
    h = make_hypernetwork(2, TARGET, rng, hidden=(8,), out_scale=1.0)
    for net in (theta1, h.net):
        for _, b in net.layers:
            b += rng.normal(0, 0.1, b.shape)
    cfg = FusionConfig(0.3)
    W = rng.dirichlet([1, 1], size=4)
    x = rng.normal(size=(4, 2))
    c = rng.normal(size=(4, 2))

    def loss():
        th2, _ = generate_params(h, W)
        out, _ = batched_forward(fuse(flat_vector(theta1), th2, cfg), TARGET, x)
        return float(np.sum(c * out))

    th2, htape = generate_params(h, W)
    thetas = fuse(flat_vector(theta1), th2, cfg)
    _, tape = batched_forward(thetas, TARGET, x)
    g_rows, _ = batched_backward(thetas, TARGET, tape, c)
    g1, gphi = backprop_fusion(g_rows, cfg, h, htape)
    for net, g in ((theta1, g1), (h.net, gphi.flat())):
        v = flat_vector(net)
        fd = numeric_grad(lambda u: (load_flat_(net, u), loss())[1], v.copy())
        load_flat_(net, v)
        assert rel_error(g, fd) < 1e-4


def test_randomized_chain_suite():
    rng = np.random.default_rng(123)
    assert max(check_hyper_chain(rng) for _ in range(10)) < 1e-4
