"""Preference-to-parameters hypernetwork and the rules that mix its output with a base network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    ContractError,
    FlatParams,
    Gradients,
    MlpParams,
    ShapeError,
    Tape,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mlp_spec,
    param_count,
    shape_table,
)

MODES = ("fusion", "gen", "add")


@dataclass
class Hypernetwork:
    net: MlpParams
    target_spec: list

    def __post_init__(self):
        if self.net.out_dim != param_count(self.target_spec):
            raise ShapeError(
                f"hypernetwork emits {self.net.out_dim} values, target needs {param_count(self.target_spec)}"
            )

    @property
    def m(self) -> int:
        return self.net.in_dim


def make_hypernetwork(m: int, target_spec, rng: np.random.Generator, hidden=(256, 256),
                      out_scale: float = 0.01) -> Hypernetwork:
    """Relu MLP ``m -> hidden... -> |target|`` with a shrunken output layer."""
    spec = mlp_spec([m, *hidden, param_count(target_spec)])
    return Hypernetwork(init_mlp(spec, rng, last_scale=out_scale), list(target_spec))


def generate_params(h: Hypernetwork, w):
    """theta_2 = MLP(w | phi). Accepts one preference or a ``(B, m)`` batch.

    Returns the raw array (``(P,)`` or ``(B, P)``) and the tape for backprop.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != h.m:
        raise ShapeError(f"preference dim {w.shape[-1]} != hypernetwork input {h.m}")
    return mlp_forward(h.net, w)


def as_flat(theta, spec) -> FlatParams:
    return FlatParams(np.asarray(theta, dtype=float), shape_table(spec))


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"fusion alpha must lie in [0, 1], got {self.alpha}")


def _data(x):
    return x.data if isinstance(x, FlatParams) else np.asarray(x, dtype=float)


def _rewrap(like, data):
    return FlatParams(data, like.shape_table) if isinstance(like, FlatParams) else data


def fuse(theta1, theta2, cfg: FusionConfig):
    """(1 - alpha) * theta1 + alpha * theta2, elementwise."""
    a, b = _data(theta1), _data(theta2)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"cannot fuse shapes {a.shape} and {b.shape}")
    out = cfg.alpha * b
    out += (1.0 - cfg.alpha) * a
    return _rewrap(theta1, out)


def fuse_add(theta1, theta2):
    a, b = _data(theta1), _data(theta2)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return _rewrap(theta1, a + b)


@dataclass(frozen=True)
class Composition:
    """How base parameters and generated parameters combine into the acting network.

    ``fusion`` is the convex blend, ``gen`` uses the generated parameters alone,
    ``add`` sums both.
    """

    mode: str = "fusion"
    alpha: float = 0.05

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown composition mode {self.mode!r}")
        FusionConfig(self.alpha)

    @property
    def coefficients(self) -> tuple[float, float]:
        if self.mode == "fusion":
            return 1.0 - self.alpha, self.alpha
        if self.mode == "gen":
            return 0.0, 1.0
        return 1.0, 1.0

    def compose(self, theta1, theta2):
        if self.mode == "fusion":
            return fuse(theta1, theta2, FusionConfig(self.alpha))
        if self.mode == "add":
            return fuse_add(theta1, theta2)
        a, b = _data(theta1), _data(theta2)
        if a.shape[-1] != b.shape[-1]:
            raise ShapeError(f"cannot compose shapes {a.shape} and {b.shape}")
        return _rewrap(theta2, np.broadcast_to(b, np.broadcast_shapes(a.shape, b.shape)).copy())


def backprop_composition(grad_theta, comp: Composition, h: Hypernetwork, hypertape: Tape | None):
    """Split dL/dtheta into the base-network gradient and the hypernetwork gradient.

    ``grad_theta`` is ``(P,)`` or per-row ``(B, P)``; the base gradient is summed over rows.
    A zero coefficient yields exactly-zero gradients without touching the tape.
    """
    g = _data(grad_theta)
    c1, c2 = comp.coefficients
    g_sum = g.sum(axis=0) if g.ndim == 2 else g
    grad_theta1 = c1 * g_sum if c1 != 0.0 else np.zeros_like(g_sum)
    if c2 == 0.0:
        return grad_theta1, Gradients.zeros(h.net.spec)
    if hypertape is None:
        raise ContractError("hypernetwork tape required to route gradient into phi")
    grad_phi, _ = mlp_backward(h.net, hypertape, c2 * g)
    return grad_theta1, grad_phi


def backprop_fusion(grad_theta, cfg: FusionConfig, h: Hypernetwork, hypertape: Tape | None):
    """Chain rule through theta = (1 - alpha) theta1 + alpha phi(w)."""
    g1, gphi = backprop_composition(grad_theta, Composition("fusion", cfg.alpha), h, hypertape)
    return _rewrap(grad_theta, g1) if isinstance(grad_theta, FlatParams) else g1, gphi
