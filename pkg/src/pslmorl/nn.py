"""Dense multilayer perceptrons with hand-written reverse mode and first-order optimizers.

Everything is float64. Networks are plain lists of ``(W, b)`` pairs with
``W`` shaped ``(out_dim, in_dim)``. Two evaluation paths exist:

* :func:`mlp_forward` / :func:`mlp_backward` for one parameter set applied to
  a single input or a batch of inputs;
* :func:`batched_forward` / :func:`batched_backward` for a *different*
  parameter vector per batch row, which is what preference-conditioned
  generated networks need.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class ShapeError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class NumericError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def mlp_spec(sizes, hidden="relu", output="identity") -> list[LayerSpec]:
    """``mlp_spec([4, 32, 2])`` -> two layers, relu hidden, identity head."""
    sizes = list(sizes)
    if len(sizes) < 2:
        raise ShapeError("need at least input and output sizes")
    n = len(sizes) - 1
    return [
        LayerSpec(sizes[i], sizes[i + 1], output if i == n - 1 else hidden)
        for i in range(n)
    ]


def spec_to_list(spec) -> list[list]:
    return [[s.in_dim, s.out_dim, s.activation] for s in spec]


def spec_from_list(rows) -> list[LayerSpec]:
    return [LayerSpec(int(i), int(o), str(a)) for i, o, a in rows]


def _check_chain(spec):
    for a, b in zip(spec, spec[1:]):
        if a.out_dim != b.in_dim:
            raise ShapeError(f"layer chain broken: {a.out_dim} -> {b.in_dim}")


_version_counter = itertools.count()


@dataclass
class MlpParams:
    layers: list
    spec: list
    # bumped by every in-place update; tapes record it to detect staleness
    version: int = field(default_factory=lambda: next(_version_counter))

    def __post_init__(self):
        if len(self.layers) != len(self.spec):
            raise ShapeError("layers and spec differ in length")
        _check_chain(self.spec)
        for (W, b), s in zip(self.layers, self.spec):
            if W.shape != (s.out_dim, s.in_dim) or b.shape != (s.out_dim,):
                raise ShapeError(
                    f"expected W{(s.out_dim, s.in_dim)} b{(s.out_dim,)}, got W{W.shape} b{b.shape}"
                )

    @property
    def in_dim(self) -> int:
        return self.spec[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.spec[-1].out_dim

    @property
    def n_params(self) -> int:
        return param_count(self.spec)

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in self.layers for a in pair]

    def copy(self) -> "MlpParams":
        return MlpParams([(W.copy(), b.copy()) for W, b in self.layers], list(self.spec))

    def touch(self):
        self.version = next(_version_counter)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def param_count(spec) -> int:
    return sum(s.out_dim * s.in_dim + s.out_dim for s in spec)


def zeros_like_spec(spec) -> MlpParams:
    return MlpParams([(np.zeros((s.out_dim, s.in_dim)), np.zeros(s.out_dim)) for s in spec], list(spec))


def init_mlp(spec, rng: np.random.Generator, last_scale: float = 1.0) -> MlpParams:
    """He-uniform for relu layers, Xavier-uniform otherwise, zero biases."""
    layers = []
    for i, s in enumerate(spec):
        if s.activation == "relu":
            limit = np.sqrt(6.0 / s.in_dim)
        else:
            limit = np.sqrt(6.0 / (s.in_dim + s.out_dim))
        W = rng.uniform(-limit, limit, size=(s.out_dim, s.in_dim))
        if i == len(spec) - 1:
            W *= last_scale
        layers.append((W, np.zeros(s.out_dim)))
    return MlpParams(layers, list(spec))


# -- activations ---------------------------------------------------------

def activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def activation_grad(z, a, kind):
    """Derivative of the activation at pre-activation ``z`` (``a`` = activated value)."""
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


# -- shared-parameter path ----------------------------------------------

@dataclass
class Tape:
    inputs: list
    pre: list
    post: list
    params_id: int
    params_version: int
    single: bool


@dataclass
class Gradients:
    layers: list
    spec: list
    count: int = 1

    def arrays(self):
        return [a for pair in self.layers for a in pair]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))

    def scaled(self, c: float) -> "Gradients":
        return Gradients([(c * dW, c * db) for dW, db in self.layers], self.spec, self.count)

    @classmethod
    def zeros(cls, spec) -> "Gradients":
        z = zeros_like_spec(spec)
        return cls(z.layers, list(spec), 0)

    @classmethod
    def from_flat(cls, vec, spec, count=1) -> "Gradients":
        p = unflatten(FlatParams(np.asarray(vec, dtype=float), shape_table(spec)), spec)
        return cls(p.layers, list(spec), count)


def mlp_forward(params: MlpParams, x):
    """Evaluate the network on one input vector or a batch ``(B, in_dim)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != params.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match in_dim {params.in_dim}")
    inputs, pre, post = [], [], []
    for (W, b), s in zip(params.layers, params.spec):
        inputs.append(h)
        z = h @ W.T + b
        h = activate(z, s.activation)
        pre.append(z)
        post.append(h)
    tape = Tape(inputs, pre, post, id(params), params.version, single)
    return (h[0] if single else h), tape


def mlp_backward(params: MlpParams, tape: Tape, grad_output):
    """Reverse pass. Parameter gradients are summed over the batch."""
    if tape.params_id != id(params) or tape.params_version != params.version:
        raise ContractError("tape was recorded for different or since-updated parameters")
    g = np.asarray(grad_output, dtype=float)
    g = g[None, :] if tape.single else g
    if g.shape != tape.post[-1].shape:
        raise ShapeError(f"grad_output shape {np.shape(grad_output)} does not match output")
    grads = [None] * len(params.layers)
    for j in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[j]
        s = params.spec[j]
        dz = g if s.activation == "identity" else g * activation_grad(tape.pre[j], tape.post[j], s.activation)
        grads[j] = (dz.T @ tape.inputs[j], dz.sum(axis=0))
        g = dz @ W
    grad_input = g[0] if tape.single else g
    return Gradients(grads, list(params.spec), tape.inputs[0].shape[0]), grad_input


# -- flat layout ----------------------------------------------------------

@dataclass
class FlatParams:
    data: np.ndarray
    shape_table: list

    def __post_init__(self):
        need = sum(r * c for _, r, c in self.shape_table)
        if self.data.shape[-1] != need:
            raise ShapeError(f"flat vector has length {self.data.shape[-1]}, shape table needs {need}")


def shape_table(spec) -> list[tuple[int, int, int]]:
    """(offset, rows, cols) for each tensor: weight then bias (cols=1), layers in order."""
    table, off = [], 0
    for s in spec:
        table.append((off, s.out_dim, s.in_dim))
        off += s.out_dim * s.in_dim
        table.append((off, s.out_dim, 1))
        off += s.out_dim
    return table


def flatten(params: MlpParams) -> FlatParams:
    data = np.concatenate([a.ravel() for a in params.arrays()])
    return FlatParams(data, shape_table(params.spec))


def unflatten(flat: FlatParams, spec) -> MlpParams:
    table = shape_table(spec)
    if [tuple(t) for t in flat.shape_table] != table:
        raise ShapeError("shape table does not match the layer spec")
    data = flat.data
    if data.ndim != 1 or data.shape[0] != param_count(spec):
        raise ShapeError(f"flat vector length {data.shape} does not match spec ({param_count(spec)})")
    layers = []
    for j in range(len(spec)):
        (ow, r, c), (ob, rb, _) = table[2 * j], table[2 * j + 1]
        layers.append((data[ow:ow + r * c].reshape(r, c).copy(), data[ob:ob + rb].copy()))
    return MlpParams(layers, list(spec))


def flat_vector(params: MlpParams) -> np.ndarray:
    return flatten(params).data


def load_flat_(params: MlpParams, vec):
    """Overwrite ``params`` in place from a flat vector."""
    off = 0
    for W, b in params.layers:
        W[...] = vec[off:off + W.size].reshape(W.shape)
        off += W.size
        b[...] = vec[off:off + b.size]
        off += b.size
    if off != len(vec):
        raise ShapeError("flat vector length does not match parameters")
    params.touch()


# -- per-row parameter path -------------------------------------------------

@dataclass
class BatchedTape:
    inputs: list
    pre: list
    post: list


def _views(theta, spec):
    B = theta.shape[0]
    return [theta[:, off:off + r * c].reshape(B, r, c) for off, r, c in shape_table(spec)]


def batched_forward(theta: np.ndarray, spec, x: np.ndarray):
    """Row ``i`` of ``x`` goes through the network whose flat parameters are ``theta[i]``."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.ndim != 2 or theta.shape[1] != param_count(spec):
        raise ShapeError(f"theta must be (B, {param_count(spec)}), got {theta.shape}")
    if x.shape != (theta.shape[0], spec[0].in_dim):
        raise ShapeError(f"x must be ({theta.shape[0]}, {spec[0].in_dim}), got {x.shape}")
    views = _views(theta, spec)
    inputs, pre, post = [], [], []
    h = x
    for j, s in enumerate(spec):
        W, b = views[2 * j], views[2 * j + 1][:, :, 0]
        inputs.append(h)
        z = np.matmul(W, h[:, :, None])[:, :, 0] + b
        h = activate(z, s.activation)
        pre.append(z)
        post.append(h)
    return h, BatchedTape(inputs, pre, post)


def batched_backward(theta: np.ndarray, spec, tape: BatchedTape, grad_output):
    """Per-row gradients ``(B, P)`` with the same flat layout as ``theta``."""
    views = _views(theta, spec)
    B = theta.shape[0]
    grad = np.empty((B, param_count(spec)))
    table = shape_table(spec)
    g = np.asarray(grad_output, dtype=float)
    if g.shape != tape.post[-1].shape:
        raise ShapeError("grad_output shape does not match batched output")
    for j in range(len(spec) - 1, -1, -1):
        s = spec[j]
        dz = g if s.activation == "identity" else g * activation_grad(tape.pre[j], tape.post[j], s.activation)
        (ow, r, c), (ob, rb, _) = table[2 * j], table[2 * j + 1]
        grad[:, ow:ow + r * c] = (dz[:, :, None] * tape.inputs[j][:, None, :]).reshape(B, r * c)
        grad[:, ob:ob + rb] = dz
        g = np.matmul(dz[:, None, :], views[2 * j])[:, 0, :]
    return grad, g


# -- optimizers ---------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list | None = None
    v: list | None = None
    t: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def _first_nonfinite(arrays):
    off = 0
    for a in arrays:
        bad = np.flatnonzero(~np.isfinite(a))
        if bad.size:
            return off + int(bad[0])
        off += a.size
    return None


def optimizer_step(state: OptimizerState, params: MlpParams, grads: Gradients):
    """In-place update of ``params``; returns ``(params, state)``."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if [a.shape for a in p_arrays] != [a.shape for a in g_arrays]:
        raise ShapeError("gradient shapes do not match parameters")
    bad = _first_nonfinite(g_arrays)
    if bad is not None:
        raise NumericError(f"non-finite gradient entry at flat index {bad}")
    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(p_arrays, g_arrays):
            p -= lr * g
    else:
        if state.m is None:
            state.m = [np.zeros_like(p) for p in p_arrays]
            state.v = [np.zeros_like(p) for p in p_arrays]
        state.t += 1
        b1, b2 = state.beta1, state.beta2
        c1 = 1.0 - b1 ** state.t
        c2 = 1.0 - b2 ** state.t
        for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.touch()
    return params, state


def soft_update_(target: MlpParams, source: MlpParams, tau: float):
    """target <- tau * source + (1 - tau) * target, in place."""
    for (Wt, bt), (Ws, bs) in zip(target.layers, source.layers):
        Wt *= 1.0 - tau
        Wt += tau * Ws
        bt *= 1.0 - tau
        bt += tau * bs
    target.touch()
    return target
