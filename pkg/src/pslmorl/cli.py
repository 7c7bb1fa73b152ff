"""Command line entry point: train, eval, metrics, baseline-ra, verify, front-export."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import metadata

import numpy as np
import yaml

from .baseline import train_radial
from .bellman import verify_bellman
from .checkpoint import atomic_write, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, eval_preferences, load_config, make_env_factory, reference_point
from .config import EnvConfig
from .ddqn import train_ddqn
from .gradcheck import run_all as run_gradchecks
from .pareto import (
    ObjectivePoint,
    ParetoArchive,
    archive_to_arrays,
    format_sparsity,
    hypervolume,
    pareto_filter,
    read_front_csv,
    sparsity,
    write_front_csv,
)
from .preference import check_preference, evaluation_grid
from .td3 import train_td3
from .training import TrainingDiverged, evaluate_grid

log = logging.getLogger("pslmorl")


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def front_metrics(values, ref) -> dict:
    """HV and SP of the nondominated subset, computed in a canonical point order."""
    values = np.asarray(values, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if values.size == 0:
        return {"hypervolume": 0.0, "sparsity": "N/A", "points": 0, "ref": ref.tolist()}
    front = pareto_filter(values)
    front = front[np.lexsort(front.T[::-1])]
    return {"hypervolume": hypervolume(front, ref), "sparsity": format_sparsity(sparsity(front)),
            "points": int(len(front)), "ref": ref.tolist()}


def _write_json(path, obj):
    atomic_write(path, lambda f: f.write(json.dumps(obj, indent=2, sort_keys=True) + "\n"))


def make_run_dir(root: str, seed: int) -> str:
    """``root/{seed}-{timestamp}``, with a numeric suffix if that name is taken. Never reuses a directory."""
    os.makedirs(root, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = os.path.join(root, f"{seed}-{stamp}")
    path, k = base, 0
    while True:
        try:
            os.makedirs(path)
            return path
        except FileExistsError:
            k += 1
            path = f"{base}-{k}"


# -- train ---------------------------------------------------------------------

def _resolve(args) -> RunConfig:
    overrides = {}
    if args.workers is not None:
        overrides["run.workers"] = args.workers
    if args.deterministic:
        overrides["run.deterministic"] = True
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.total_steps is not None:
        overrides["ddqn.total_steps"] = overrides["td3.total_steps"] = args.total_steps
        overrides["baseline.total_steps"] = args.total_steps
    return load_config(args.config, overrides)


def run_training_job(cfg: RunConfig, run_dir: str) -> dict:
    """Train per ``cfg`` inside ``run_dir``; returns final metrics. Writes log, checkpoints, front."""
    env_factory = make_env_factory(cfg.env)
    probe = env_factory()
    ref = reference_point(cfg, probe.m)
    if cfg.algo == "ra-baseline":
        W, returns, _ = train_radial(cfg.baseline, env_factory, os.path.join(run_dir, "log.jsonl"))
        archive = ParetoArchive()
        for w, j in zip(W, returns):
            archive.insert(ObjectivePoint(j, {"preference": w}))
        vals, prefs = archive_to_arrays(archive)
        write_front_csv(os.path.join(run_dir, "front.csv"), vals, prefs)
        return {**front_metrics(vals, ref), "env_steps": cfg.baseline.total_steps * len(W)}
    ckpt_dir = os.path.join(run_dir, "checkpoints")
    os.makedirs(ckpt_dir)
    env_dict = cfg.to_dict()["env"]

    def checkpoint(agent, step, result):
        save_checkpoint(os.path.join(ckpt_dir, f"step_{step:09d}.npz"), agent, step, result.archive,
                        cfg.to_dict(), env_dict)

    train = train_ddqn if cfg.algo == "psl-ddqn" else train_td3
    agent, result = train(cfg.algo_config, env_factory, eval_preferences(cfg, probe.m), ref,
                          os.path.join(run_dir, "log.jsonl"), checkpoint)
    save_checkpoint(os.path.join(run_dir, "final.npz"), agent, result.env_steps, result.archive,
                    cfg.to_dict(), env_dict)
    vals, prefs = archive_to_arrays(result.archive)
    write_front_csv(os.path.join(run_dir, "front.csv"), vals, prefs)
    last = result.log[-1]
    return {**front_metrics(vals, ref), "env_steps": result.env_steps, "updates": result.updates,
            "final_eval_hv": last["eval_hv"]}


def cmd_train(args) -> int:
    cfg = _resolve(args)
    if args.dry_run:
        print(yaml.safe_dump(cfg.to_dict(), sort_keys=False), end="")
        return 0
    run_dir = make_run_dir(args.out_dir or cfg.output_root(), cfg.seed)
    with open(os.path.join(run_dir, "config.yaml"), "w") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=False)
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    status, metrics = "ok", None
    try:
        metrics = run_training_job(cfg, run_dir)
    except TrainingDiverged as e:
        status = f"diverged: {e}"
        log.error("%s", e)
    _write_json(os.path.join(run_dir, "metrics.json"), metrics or {})
    _write_json(os.path.join(run_dir, "manifest.json"), {
        "config": cfg.to_dict(), "seed": cfg.seed, "code_version": code_version(),
        "started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "status": status, "metrics": metrics,
    })
    print(run_dir)
    return 0 if status == "ok" else 3


# -- eval / metrics / export ---------------------------------------------------

def read_preferences(path, m: int) -> np.ndarray:
    """Whitespace- or comma-separated rows, one preference per row; '#' starts a comment."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            vals = [float(x) for x in line.replace(",", " ").split()]
            if len(vals) != m:
                raise ConfigError(f"{path}:{lineno}: expected {m} values, got {len(vals)}")
            try:
                rows.append(check_preference(vals))
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: {e}") from None
    if not rows:
        raise ConfigError(f"{path}: no preferences found")
    return np.array(rows)


def cmd_eval(args) -> int:
    agent, meta, _ = load_checkpoint(args.checkpoint)
    env_cfg = EnvConfig(**(meta.get("env") or {}))
    env_factory = make_env_factory(env_cfg)
    m = agent.m
    if args.preferences:
        grid = read_preferences(args.preferences, m)
    else:
        grid = evaluation_grid(m, args.grid)
    ref = np.zeros(m) if args.ref is None else np.asarray(args.ref, dtype=float)
    if ref.shape != (m,):
        raise ConfigError(f"--ref needs {m} values")
    J = evaluate_grid(agent, env_factory, grid, args.episodes)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "eval_front.csv")
    write_front_csv(csv_path, J, grid)
    metrics = {**front_metrics(J, ref), "evaluated": int(len(grid)), "csv": csv_path}
    _write_json(os.path.join(out_dir, "eval_metrics.json"), metrics)
    print(json.dumps(metrics))
    return 0


def cmd_metrics(args) -> int:
    values, _ = read_front_csv(args.csv)
    m = values.shape[1]
    ref = np.zeros(m) if args.ref is None else np.asarray(args.ref, dtype=float)
    if ref.shape != (m,):
        raise ConfigError(f"--ref needs {m} values")
    print(json.dumps(front_metrics(values, ref)))
    return 0


def cmd_front_export(args) -> int:
    _, _, archive = load_checkpoint(args.checkpoint)
    vals, prefs = archive_to_arrays(archive)
    if len(archive) == 0:
        raise ConfigError(f"{args.checkpoint}: checkpoint holds an empty archive")
    write_front_csv(args.out, vals, prefs)
    print(args.out)
    return 0


# -- baseline / verify --------------------------------------------------------

def cmd_baseline_ra(args) -> int:
    cfg = load_config(args.config, {"run.algo": "ra-baseline"})
    env_factory = make_env_factory(cfg.env)
    W, returns, _ = train_radial(cfg.baseline, env_factory)
    archive = ParetoArchive()
    for w, j in zip(W, returns):
        archive.insert(ObjectivePoint(j, {"preference": w}))
    vals, prefs = archive_to_arrays(archive)
    out = args.out or "ra_front.csv"
    write_front_csv(out, vals, prefs)
    print(out)
    return 0


def cmd_verify(args) -> int:
    report = {"bellman": verify_bellman(n_mdps=args.mdps, trials=args.trials, gamma=args.gamma, seed=args.seed)}
    report["gradients"] = run_gradchecks(args.instances, args.seed)
    report["passed"] = bool(report["bellman"]["passed"] and all(v["passed"] for v in report["gradients"].values()))
    print(json.dumps(report, indent=2))
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pslmorl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a preference-conditioned policy")
    t.add_argument("config")
    t.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    t.add_argument("--workers", type=int)
    t.add_argument("--deterministic", action="store_true", help="round-robin workers in one thread")
    t.add_argument("--seed", type=int)
    t.add_argument("--total-steps", type=int)
    t.add_argument("--out-dir", help="output root (overrides config and environment)")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a preference set")
    e.add_argument("checkpoint")
    g = e.add_mutually_exclusive_group()
    g.add_argument("--grid", type=int, help="number of evenly spread test preferences")
    g.add_argument("--preferences", help="file with one preference per row")
    e.add_argument("--ref", type=float, nargs="+")
    e.add_argument("--episodes", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_eval)

    mt = sub.add_parser("metrics", help="hypervolume and sparsity of a front CSV")
    mt.add_argument("csv")
    mt.add_argument("--ref", type=float, nargs="+")
    mt.set_defaults(fn=cmd_metrics)

    b = sub.add_parser("baseline-ra", help="Radial Algorithm baseline")
    b.add_argument("config")
    b.add_argument("--out")
    b.set_defaults(fn=cmd_baseline_ra)

    v = sub.add_parser("verify", help="contraction and gradient checks (JSON report)")
    v.add_argument("--gamma", type=float, default=0.9)
    v.add_argument("--mdps", type=int, default=20)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--instances", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=cmd_verify)

    x = sub.add_parser("front-export", help="write the archive stored in a checkpoint as CSV")
    x.add_argument("checkpoint")
    x.add_argument("--out", required=True)
    x.set_defaults(fn=cmd_front_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
