"""YAML run configuration: nested sections, strict keys, range checks at load time."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .baseline import RaConfig
from .ddqn import DdqnConfig
from .envs import FtnEnv, PointNavEnv, load_leaf_rewards
from .hypernet import MODES
from .preference import ConfigError, evaluation_grid
from .td3 import Td3Config

ALGOS = ("psl-ddqn", "psl-td3", "ra-baseline")
OUTPUT_ROOT_ENV = "PSLMORL_OUTPUT_ROOT"


@dataclass
class EnvConfig:
    name: str = "ftn"
    depth: int = 5
    reward_file: str | None = None
    seed: int = 0
    level_onehot: bool = False
    dt: float = 0.1
    damping: float = 0.1
    episode_limit: int = 50

    def __post_init__(self):
        if self.name not in ("ftn", "pointnav"):
            raise ValueError(f"unknown environment {self.name!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.reward_file is not None and not os.path.isfile(self.reward_file):
            raise ValueError(f"reward_file {self.reward_file!r} does not exist")
        if self.dt <= 0 or self.damping < 0 or self.episode_limit < 1:
            raise ValueError("pointnav constants must satisfy dt > 0, damping >= 0, episode_limit >= 1")


@dataclass
class EvalConfig:
    grid: int | None = None       # None: 11 points for m = 2, 66 otherwise
    episodes: int = 1
    ref: list | None = None       # None: origin

    def __post_init__(self):
        if self.grid is not None and self.grid < 1:
            raise ValueError("eval grid size must be >= 1")
        if self.episodes < 1:
            raise ValueError("eval episodes must be >= 1")


@dataclass
class RunConfig:
    algo: str = "psl-ddqn"
    seed: int = 0
    workers: int = 10
    out_dir: str = "runs"
    mode: str = "fusion"
    deterministic: bool = True
    env: EnvConfig = field(default_factory=EnvConfig)
    ddqn: DdqnConfig = field(default_factory=DdqnConfig)
    td3: Td3Config = field(default_factory=Td3Config)
    baseline: RaConfig = field(default_factory=RaConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def algo_config(self):
        return {"psl-ddqn": self.ddqn, "psl-td3": self.td3, "ra-baseline": self.baseline}[self.algo]

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def output_root(self) -> str:
        return os.environ.get(OUTPUT_ROOT_ENV) or self.out_dir


SECTIONS = {"env": EnvConfig, "ddqn": DdqnConfig, "td3": Td3Config, "baseline": RaConfig, "eval": EvalConfig}
RUN_KEYS = ("algo", "seed", "workers", "out_dir", "mode", "deterministic")


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def _build(cls, section: str, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key {section}.{key}")
    try:
        return cls(**values)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid {section} section: {e}") from None


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    run = raw.pop("run", {}) or {}
    if not isinstance(run, dict):
        raise ConfigError("section 'run' must be a mapping")
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"unknown config key {key}")
    for key in run:
        if key not in RUN_KEYS:
            raise ConfigError(f"unknown config key run.{key}")
    algo = run.get("algo", "psl-ddqn")
    if algo not in ALGOS:
        raise ConfigError(f"run.algo must be one of {ALGOS}, got {algo!r}")
    mode = run.get("mode", "fusion")
    if mode not in MODES:
        raise ConfigError(f"run.mode must be one of {MODES}, got {mode!r}")
    seed, workers = int(run.get("seed", 0)), int(run.get("workers", 10))
    if workers < 1:
        raise ConfigError("run.workers must be >= 1")
    deterministic = bool(run.get("deterministic", True))
    # run-level settings flow into every algorithm section
    shared = {"seed": seed, "workers": workers}
    learner = {**shared, "mode": mode, "deterministic": deterministic}
    sections = {}
    for name, cls in SECTIONS.items():
        values = dict(raw.get(name) or {})
        if name in ("ddqn", "td3"):
            values = {**values, **learner}
        elif name == "baseline":
            values = {**values, **shared}
        sections[name] = _build(cls, name, values)
    return RunConfig(algo=algo, seed=seed, workers=workers, out_dir=str(run.get("out_dir", "runs")),
                     mode=mode, deterministic=deterministic, **sections)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a YAML file; ``overrides`` maps ``section.key`` to a replacement value."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path!r} does not exist")
    with open(path) as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        raw.setdefault(section, {})
        raw[section] = dict(raw[section] or {}, **{key: value})
    return config_from_dict(raw)


def make_env_factory(env: EnvConfig):
    if env.name == "pointnav":
        return lambda: PointNavEnv(env.dt, env.damping, env.episode_limit)
    leaves = load_leaf_rewards(env.reward_file, env.depth) if env.reward_file else None
    return lambda: FtnEnv(env.depth, leaves, env.seed, env.level_onehot)


def eval_preferences(cfg: RunConfig, m: int) -> np.ndarray:
    return evaluation_grid(m, cfg.eval.grid)


def reference_point(cfg: RunConfig, m: int) -> np.ndarray:
    if cfg.eval.ref is None:
        return np.zeros(m)
    ref = np.asarray(cfg.eval.ref, dtype=float)
    if ref.shape != (m,):
        raise ConfigError(f"eval.ref must have {m} entries, got {ref.shape}")
    return ref
