"""Radial Algorithm baseline on FTN: one scalarized DDQN per fixed weight.

    python3 scripts/baseline_ra.py [--config configs/ra.yaml] [--out ra_front.csv]
"""
import argparse
import os

import numpy as np

from pslmorl.baseline import train_radial
from pslmorl.config import load_config, make_env_factory
from pslmorl.envs import ftn_oracle_front
from pslmorl.pareto import hypervolume, write_front_csv

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=os.path.join(ROOT, "configs", "ra.yaml"))
    ap.add_argument("--out", default="ra_front.csv")
    args = ap.parse_args()
    cfg = load_config(args.config, {"run.algo": "ra-baseline"})
    factory = make_env_factory(cfg.env)
    W, returns, front = train_radial(cfg.baseline, factory)
    write_front_csv(args.out, returns, W)
    env = factory()
    ref = np.zeros(env.m)
    print("front HV %.4f  oracle HV %.4f  (%d weights, %d nondominated)" % (
        hypervolume(front, ref), hypervolume(ftn_oracle_front(env), ref), len(W), len(front)))


if __name__ == "__main__":
    main()
