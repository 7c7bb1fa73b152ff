"""Central finite-difference checks for every hand-written gradient path.

Each suite draws small random instances, computes the analytic gradient and compares
it with central differences over all coordinates. The reported error is
``|g - g_fd| / max(|g|, |g_fd|, 1e-12)`` in the Euclidean norm.
"""
from __future__ import annotations

import numpy as np

from .ddqn import DdqnAgent, DdqnConfig, ddqn_loss, target_values
from .hypernet import Composition, backprop_composition, generate_params, make_hypernetwork
from .nn import batched_backward, batched_forward, flat_vector, init_mlp, load_flat_, mlp_backward, mlp_forward, mlp_spec
from .preference import interpolate_preference, sample_preferences
from .replay import Batch
from .td3 import Td3Agent, Td3Config, actor_loss, critic_loss

TOLERANCE = {"mlp": 1e-4, "hyper_chain": 1e-4, "ddqn_loss": 1e-4, "td3_critic": 1e-4, "td3_actor": 1e-3}
STEP = 1e-6


def rel_error(g, g_fd) -> float:
    g, g_fd = np.ravel(g), np.ravel(g_fd)
    scale = max(np.linalg.norm(g), np.linalg.norm(g_fd), 1e-12)
    return float(np.linalg.norm(g - g_fd) / scale)


def numeric_grad(f, x, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (restored afterwards)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f(x)
        x.flat[i] = old - h
        fm = f(x)
        x.flat[i] = old
        g.flat[i] = (fp - fm) / (2 * h)
    return g


def _params_fd(params, loss_fn):
    vec = flat_vector(params)

    def f(v):
        load_flat_(params, v)
        return loss_fn()

    g = numeric_grad(f, vec.copy())
    load_flat_(params, vec)
    return g


def _jitter(rng, *nets):
    """Fresh nets have zero biases, which can park a ReLU exactly on its kink (or make a
    critic output exactly zero) when an upstream layer is dead. Checks run at generic points."""
    for net in nets:
        for _, b in net.layers:
            b += rng.normal(0.0, 0.1, size=b.shape)
        net.touch()


def check_mlp(rng) -> float:
    sizes = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(2, 5)))]
    out = str(rng.choice(["identity", "tanh"]))
    params = init_mlp(mlp_spec(sizes, str(rng.choice(["relu", "tanh"])), out), rng)
    _jitter(rng, params)
    x = rng.normal(size=(int(rng.integers(1, 6)), sizes[0]))
    c = rng.normal(size=(len(x), sizes[-1]))
    loss = lambda: float(np.sum(c * mlp_forward(params, x)[0]))
    y, tape = mlp_forward(params, x)
    grads, gx = mlp_backward(params, tape, c)
    err_p = rel_error(grads.flat(), _params_fd(params, loss))
    gx_fd = numeric_grad(lambda v: float(np.sum(c * mlp_forward(params, v.reshape(x.shape))[0])), x.copy())
    return max(err_p, rel_error(gx, gx_fd))


def check_hyper_chain(rng) -> float:
    m = int(rng.integers(2, 4))
    spec = mlp_spec([3 + m, 5, 2], output="tanh")
    theta1 = init_mlp(spec, rng)
    h = make_hypernetwork(m, spec, rng, hidden=(4,), out_scale=1.0)
    _jitter(rng, theta1, h.net)
    mode = str(rng.choice(["fusion", "gen", "add"]))
    comp = Composition(mode, float(rng.uniform(0.05, 0.95)))
    B = int(rng.integers(1, 5))
    W = sample_preferences(rng, m, B)
    X = np.hstack([rng.normal(size=(B, 3)), W])
    c = rng.normal(size=(B, 2))

    def loss():
        th2, _ = generate_params(h, W)
        out, _ = batched_forward(comp.compose(flat_vector(theta1), th2), spec, X)
        return float(np.sum(c * out))

    th2, htape = generate_params(h, W)
    thetas = comp.compose(flat_vector(theta1), th2)
    _, tape = batched_forward(thetas, spec, X)
    g_rows, _ = batched_backward(thetas, spec, tape, c)
    g1, gphi = backprop_composition(g_rows, comp, h, htape)
    return max(rel_error(g1, _params_fd(theta1, loss)), rel_error(gphi.flat(), _params_fd(h.net, loss)))


def _small_ddqn(rng):
    m = int(rng.integers(2, 4))
    cfg = DdqnConfig(hidden=(6, 6), hyper_hidden=(5,), batch_size=3, her=1,
                     fusion_alpha=float(rng.uniform(0.05, 0.95)),
                     mode=str(rng.choice(["fusion", "gen", "add"])))
    agent = DdqnAgent(3, 2, m, cfg, rng)
    _jitter(rng, agent.theta1, agent.target, agent.hyper.net)
    return agent


def check_ddqn_loss(rng) -> float:
    agent = _small_ddqn(rng)
    B, m = 6, agent.m
    W = sample_preferences(rng, m, B)
    batch = Batch(rng.normal(size=(B, 3)), rng.integers(0, 2, size=B), rng.uniform(0, 2, size=(B, m)),
                  rng.normal(size=(B, 3)), rng.random(B) < 0.3, W, np.arange(B))
    Wp = interpolate_preference(agent.interp, W)
    y = target_values(agent, batch.s2, batch.r, batch.done, W, Wp, agent.cfg.gamma)
    loss = lambda: ddqn_loss(agent, batch, y)[0]
    _, g1, gphi = ddqn_loss(agent, batch, y)
    return max(rel_error(g1, _params_fd(agent.theta1, loss)), rel_error(gphi.flat(), _params_fd(agent.hyper.net, loss)))


def _small_td3(rng):
    m = int(rng.integers(2, 4))
    cfg = Td3Config(critic_hidden=(6,), actor_hidden=(5,), hyper_hidden=(4,), batch_size=3,
                    fusion_alpha=float(rng.uniform(0.05, 0.95)), c_angle=float(rng.uniform(0.5, 10.0)),
                    mode=str(rng.choice(["fusion", "gen", "add"])))
    agent = Td3Agent(3, 2, m, cfg, rng)
    agent.hyper = make_hypernetwork(m, agent.actor_spec, rng, cfg.hyper_hidden, out_scale=1.0)
    _jitter(rng, agent.theta1, agent.hyper.net, *agent.critics)
    return agent


def check_td3_critic(rng) -> float:
    agent = _small_td3(rng)
    B, m = 5, agent.m
    S, A = rng.normal(size=(B, 3)), rng.uniform(-1, 1, size=(B, 2))
    W = sample_preferences(rng, m, B)
    Wp = sample_preferences(rng, m, B)
    y = rng.normal(size=(B, m))
    critic = agent.critics[0]
    loss = lambda: critic_loss(agent, critic, S, A, W, Wp, y)[0]
    _, grads = critic_loss(agent, critic, S, A, W, Wp, y)
    return rel_error(grads.flat(), _params_fd(critic, loss))


def check_td3_actor(rng) -> float:
    agent = _small_td3(rng)
    B, m = 5, agent.m
    S = rng.normal(size=(B, 3))
    W = sample_preferences(rng, m, B)
    Wp = sample_preferences(rng, m, B)
    loss = lambda: actor_loss(agent, S, W, Wp)[0]
    _, g1, gphi = actor_loss(agent, S, W, Wp)
    return max(rel_error(g1, _params_fd(agent.theta1, loss)), rel_error(gphi.flat(), _params_fd(agent.hyper.net, loss)))


SUITES = {
    "mlp": check_mlp,
    "hyper_chain": check_hyper_chain,
    "ddqn_loss": check_ddqn_loss,
    "td3_critic": check_td3_critic,
    "td3_actor": check_td3_actor,
}


def run_suite(name: str, instances: int = 20, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    errs = [SUITES[name](rng) for _ in range(instances)]
    worst = max(errs)
    return {"instances": instances, "max_rel_error": worst, "tolerance": TOLERANCE[name],
            "passed": bool(worst <= TOLERANCE[name])}


def run_all(instances: int = 20, seed: int = 0) -> dict:
    return {name: run_suite(name, instances, seed + i) for i, name in enumerate(SUITES)}
