"""Paired TMPC/DTMPC comparison on the restricted-tube and regional-disturbance scenarios.

Usage: python scripts/compare_controllers.py [--trials N] [--out DIR] [--config FILE]
"""

import argparse
from pathlib import Path

from dtmpc.harness import PlanCache, load_config
from dtmpc.harness.experiments import run_comparison
from dtmpc.harness.logs import write_summary_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--out", default="results")
    parser.add_argument("--config", default=None)
    args = parser.parse_args()
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in ("restricted-tube", "regional-disturbance"):
        cmp = run_comparison(config, kind, args.trials, cache=PlanCache())
        print(cmp.format())
        print(f"  DTMPC/TMPC effort {cmp.ratio('effort'):.3f}, max speed {cmp.ratio('max_speed'):.3f}\n")
        write_summary_csv(cmp.table(), out / f"{kind}_table.csv")


if __name__ == "__main__":
    main()
