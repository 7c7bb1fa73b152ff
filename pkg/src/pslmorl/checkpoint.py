"""Checkpoint files: one ``.npz`` holding flat parameter vectors plus a JSON metadata record.

The metadata carries the algorithm, network specs, composition rule, environment
dimensions, the resolved run config and the step. Files are written to a temporary
name and renamed, so a reader never sees a partial checkpoint.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .ddqn import DdqnAgent, DdqnConfig
from .nn import ShapeError, flat_vector, load_flat_, spec_to_list
from .pareto import ObjectivePoint, ParetoArchive, archive_to_arrays
from .td3 import Td3Agent, Td3Config

FORMAT = 1


def atomic_write(path, write_fn, mode="w"):
    """Call ``write_fn(fileobj)`` on a temp file in the target directory, then rename into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as f:
            write_fn(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _nets(agent):
    """Named parameter sets that make up an agent."""
    if isinstance(agent, DdqnAgent):
        return {"theta1": agent.theta1, "target": agent.target, "phi": agent.hyper.net}
    return {"theta1": agent.theta1, "target_theta1": agent.target_theta1, "phi": agent.hyper.net,
            "critic1": agent.critics[0], "critic2": agent.critics[1],
            "target_critic1": agent.target_critics[0], "target_critic2": agent.target_critics[1]}


def save_checkpoint(path, agent, step: int, archive: ParetoArchive | None = None,
                    run_config: dict | None = None, env_config: dict | None = None):
    algo = "psl-ddqn" if isinstance(agent, DdqnAgent) else "psl-td3"
    arrays = {name: flat_vector(net) for name, net in _nets(agent).items()}
    meta = {
        "format": FORMAT,
        "algo": algo,
        "step": int(step),
        "obs_dim": agent.obs_dim,
        "m": agent.m,
        "n_actions": getattr(agent, "n_actions", None),
        "action_dim": agent.action_dim,
        "composition": {"mode": agent.comp.mode, "alpha": agent.comp.alpha},
        "specs": {name: spec_to_list(net.spec) for name, net in _nets(agent).items()},
        "agent_config": _jsonable(vars(agent.cfg)),
        "run_config": run_config,
        "env": env_config,
    }
    if archive is not None and len(archive):
        vals, prefs = archive_to_arrays(archive)
        arrays["archive_values"], arrays["archive_prefs"] = vals, prefs
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    atomic_write(path, lambda f: np.savez(f, **arrays), mode="wb")


def _jsonable(d):
    out = {}
    for k, v in d.items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def read_meta(path) -> dict:
    with np.load(path) as z:
        return json.loads(z["meta"].tobytes().decode())


def load_checkpoint(path):
    """Rebuild the agent; returns ``(agent, meta, archive)``."""
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        arrays = {k: z[k] for k in z.files if k != "meta"}
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')}")
    rng = np.random.default_rng(0)
    if meta["algo"] == "psl-ddqn":
        agent = DdqnAgent(meta["obs_dim"], meta["n_actions"], meta["m"], DdqnConfig(**meta["agent_config"]), rng)
    else:
        agent = Td3Agent(meta["obs_dim"], meta["action_dim"], meta["m"], Td3Config(**meta["agent_config"]), rng)
    for name, net in _nets(agent).items():
        if spec_to_list(net.spec) != meta["specs"][name]:
            raise ShapeError(f"{path}: network {name} spec does not match its config")
        load_flat_(net, arrays[name])
    archive = ParetoArchive()
    if "archive_values" in arrays:
        for v, p in zip(arrays["archive_values"], arrays["archive_prefs"]):
            archive.insert(ObjectivePoint(v, {"preference": p}))
    return agent, meta, archive
