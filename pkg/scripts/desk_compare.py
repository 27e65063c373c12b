"""Run both controllers with 3 and 10 agents on the desk-scale scenario and tabulate.

    python3 scripts/desk_compare.py --out results/desk [--seed 0] [--force]
"""
import argparse
import sys
from pathlib import Path

from clarity_coverage.cli import main as cli

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.ini"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/desk")
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)
    extra = ["--force"] if args.force else []
    runs = []
    for policy in ("direct", "indirect"):
        for n in (3, 10):
            d = out / f"{policy}_{n}"
            code = cli(["run", args.config, "--controller", policy, "--agents", str(n),
                        "--seed", str(args.seed), "--out", str(d), *extra])
            if code:
                return code
            runs.append(str(d))
    return cli(["report", *runs, "--out", str(out / "report"), *extra])


if __name__ == "__main__":
    sys.exit(main())
