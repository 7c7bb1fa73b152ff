"""Train PSL-MORL-TD3 on PointNav and print the final archive.

    python3 scripts/run_pointnav.py [--seed 0] [--total-steps N] [--out front.csv]
"""
import argparse
import os

from pslmorl.config import eval_preferences, load_config, make_env_factory, reference_point
from pslmorl.pareto import archive_to_arrays, write_front_csv
from pslmorl.td3 import train_td3

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=os.path.join(ROOT, "configs", "pointnav.yaml"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--total-steps", type=int)
    ap.add_argument("--out", default="pointnav_front.csv")
    args = ap.parse_args()
    overrides = {"run.seed": args.seed}
    if args.total_steps:
        overrides["td3.total_steps"] = args.total_steps
    cfg = load_config(args.config, overrides)
    factory = make_env_factory(cfg.env)
    m = factory().m
    _, res = train_td3(cfg.td3, factory, eval_preferences(cfg, m), reference_point(cfg, m))
    vals, prefs = archive_to_arrays(res.archive)
    write_front_csv(args.out, vals, prefs)
    for v in vals:
        print("speed %.3f  efficiency %.3f" % tuple(v))
    print(f"{len(vals)} nondominated points -> {args.out}")


if __name__ == "__main__":
    main()
