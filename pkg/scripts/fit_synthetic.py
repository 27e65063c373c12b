"""Export a synthetic GP field with Wiener drift as grid CSV, then fit it with the ``fit`` command.

    python3 scripts/fit_synthetic.py --out results/fit
"""
import argparse
import sys
from pathlib import Path

import numpy as np
from scipy import linalg

from clarity_coverage.cli import main as cli
from clarity_coverage.grid import GridSpec
from clarity_coverage.io import write_csv
from clarity_coverage.kernels import KernelParams, kernel_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/fit")
    ap.add_argument("--sigma", type=float, default=3.49)
    ap.add_argument("--length-scale", type=float, default=0.944)
    ap.add_argument("--rate", type=float, default=5e-4, help="Wiener variance rate per second")
    ap.add_argument("--snapshots", type=int, default=12)
    ap.add_argument("--dt", type=float, default=1800.0, help="seconds between snapshots")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()

    kp = KernelParams("matern12", args.sigma, args.length_scale)
    grid = GridSpec.for_domain(10.0, 6.0, 0.2)
    K = kernel_matrix(kp, grid.points) + 1e-9 * kp.variance * np.eye(grid.size)
    rng = np.random.default_rng(args.seed)
    f = linalg.cholesky(K, lower=True) @ rng.standard_normal(grid.size)
    rows = []
    for k in range(args.snapshots):
        rows.extend((k * args.dt, p[0], p[1], v) for p, v in zip(grid.points, f))
        f = f + rng.normal(scale=np.sqrt(args.rate * args.dt), size=grid.size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = out.parent / f"{out.name}_data.csv"
    write_csv(data, ["t", "x_km", "y_km", "value"], rows)
    print(f"wrote {data}: {grid.size} points x {args.snapshots} snapshots")
    print(f"true: sigma={args.sigma} length_scale_km={args.length_scale} sigma_t_sq={args.rate}")
    # one realization: expect scatter of tens of percent in the length scale across seeds
    return cli(["fit", str(data), "--noise-var", "0.25", "--max-lag", "3", "--out", str(out), "--force"])


if __name__ == "__main__":
    sys.exit(main())
