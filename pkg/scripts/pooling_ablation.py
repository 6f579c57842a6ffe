#!/usr/bin/env python3
"""Mean vs max pooling of the invariant kernel on the desk problem.

Reported, not ranked: which pooling wins is an empirical question that
depends on the data.

    python scripts/pooling_ablation.py --noise 0 0.05 0.1 --json runs/pooling.json
"""
import argparse
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from invkern.experiments import pooling_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.05, 0.1])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--json")
    args = ap.parse_args()

    rows = pooling_ablation(args.noise, args.seeds, args.threads)
    agg = defaultdict(list)
    for r in rows:
        agg[(r["noise_sigma"], r["pooling"])].append(r["auc"])
    print(f"{'noise':>6} {'pooling':>7} {'mean AUC':>8} {'std':>7}")
    for (sigma, pooling), aucs in sorted(agg.items()):
        print(f"{sigma:6.3f} {pooling:>7} {np.mean(aucs):8.4f} {np.std(aucs):7.4f}")
    if args.json:
        Path(args.json).parent.mkdir(parents=True, exist_ok=True)
        Path(args.json).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
