"""Final mean clarity deficit against fleet size for both controllers.

    python3 scripts/agent_sweep.py --max-agents 10 --seeds 0 1 2 --out results/sweep.csv
"""
import argparse

import numpy as np

from clarity_coverage.config import load_config
from clarity_coverage.io import write_csv
from clarity_coverage.sim import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.ini")
    ap.add_argument("--max-agents", type=int, default=10)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out", default="results/sweep.csv")
    args = ap.parse_args()
    base = load_config(args.config)
    rows = []
    for policy in ("direct", "indirect"):
        for n in range(1, args.max_agents + 1):
            finals = []
            for seed in args.seeds:
                res = run_scenario(base.replace(policy=policy, n_agents=n, seed=seed, start_positions=None))
                finals.append(res.metrics.deficit[-1] / res.metrics.deficit[0])
            rows.append((policy, n, float(np.mean(finals)), float(np.std(finals))))
            print(f"{policy:8s} agents={n:2d} final/initial deficit {np.mean(finals):.3f} +- {np.std(finals):.3f}")
    write_csv(args.out, ["controller", "n_agents", "mean_final_ratio", "std_final_ratio"], rows)


if __name__ == "__main__":
    main()
