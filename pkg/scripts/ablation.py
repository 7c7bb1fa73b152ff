"""Compare the fusion, gen and add parameter compositions on FTN (mean final archive HV per mode).

    python3 scripts/ablation.py --seeds 0 1 2
"""
import argparse
import json
import os

import numpy as np

from run_ftn import ROOT, run_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=os.path.join(ROOT, "configs", "ftn_d5.yaml"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--total-steps", type=int)
    args = ap.parse_args()
    summary = {}
    for mode in ("fusion", "gen", "add"):
        rows = [run_seed(args.config, s, mode, args.total_steps) for s in args.seeds]
        for r in rows:
            print(json.dumps(r), flush=True)
        summary[mode] = float(np.mean([r["archive_hv"] for r in rows]))
    print(json.dumps({"mean_archive_hv": summary,
                      "fusion_ge_add": summary["fusion"] >= summary["add"],
                      "fusion_ge_gen": summary["fusion"] >= summary["gen"]}))


if __name__ == "__main__":
    main()
