"""Train PSL-MORL-DDQN on FTN over several seeds and report HV against the leaf oracle.

    python3 scripts/run_ftn.py --seeds 0 1 2 [--config configs/ftn_d5.yaml] [--total-steps N]
"""
import argparse
import json
import os

import numpy as np

from pslmorl.config import eval_preferences, load_config, make_env_factory, reference_point
from pslmorl.ddqn import train_ddqn
from pslmorl.envs import ftn_oracle_front
from pslmorl.pareto import hypervolume
from pslmorl.training import evaluate_grid

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def run_seed(config, seed, mode=None, total_steps=None):
    overrides = {"run.seed": seed}
    if mode:
        overrides["run.mode"] = mode
    if total_steps:
        overrides["ddqn.total_steps"] = total_steps
    cfg = load_config(config, overrides)
    factory = make_env_factory(cfg.env)
    env = factory()
    ref = reference_point(cfg, env.m)
    grid = eval_preferences(cfg, env.m)
    agent, res = train_ddqn(cfg.ddqn, factory, grid, ref)
    oracle = hypervolume(ftn_oracle_front(env), ref)
    J = evaluate_grid(agent, factory, grid)
    best = (grid @ env.leaf_rewards.T).max(axis=1)
    got = np.sum(grid * J, axis=1)
    return {
        "seed": seed, "mode": cfg.mode, "oracle_hv": oracle,
        "archive_hv": res.archive.hypervolume(ref), "final_eval_hv": res.log[-1]["eval_hv"],
        "hv_ratio": res.archive.hypervolume(ref) / oracle,
        "frac_within_10pct": float(np.mean(got >= 0.9 * best)),
        "updates": res.updates, "env_steps": res.env_steps,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=os.path.join(ROOT, "configs", "ftn_d5.yaml"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--mode", choices=["fusion", "gen", "add"])
    ap.add_argument("--total-steps", type=int)
    args = ap.parse_args()
    for s in args.seeds:
        print(json.dumps(run_seed(args.config, s, args.mode, args.total_steps)), flush=True)


if __name__ == "__main__":
    main()
