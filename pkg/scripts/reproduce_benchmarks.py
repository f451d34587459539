#!/usr/bin/env python3
"""Run the bundled sphere and bunny benchmarks and print a summary table.

Equivalent to `nbvplan run configs/<name>.txt --out results/<name>`, wired
up for a one-command reproduction. Use --seeds to shorten a smoke run.
"""

import argparse
import sys
from pathlib import Path

from nbvplan.harness import ExperimentConfig, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(ROOT / "results"), help="output root directory")
    parser.add_argument("--seeds", type=int, default=None, help="override trial count per scene")
    parser.add_argument(
        "--scenes", nargs="+", default=["sphere", "bunny"], choices=["sphere", "bunny"]
    )
    args = parser.parse_args()

    summaries = {}
    for scene in args.scenes:
        config = ExperimentConfig.from_file(ROOT / "configs" / f"{scene}.txt")
        seeds = range(args.seeds) if args.seeds else None
        print(f"== {scene}: {len(list(seeds or config.seeds))} trials")
        summaries[scene] = run_experiment(config, Path(args.out) / scene, seeds=seeds)

    print(f"\n{'scene':<10}{'trials':>8}{'views':>8}{'coverage':>10}{'distance':>10}")
    for scene, s in summaries.items():
        print(
            f"{scene:<10}{s['n_trials']:>8}{s['mean_views']:>8.1f}"
            f"{100 * s['mean_coverage']:>9.1f}%{s['mean_distance']:>9.2f}m"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
