"""Command-line entry points: run a benchmark config, score a pointcloud
against a mesh, or rebuild plots from a metrics CSV."""

from __future__ import annotations

import argparse
import logging
import sys

from .cloud import load_cloud_ply
from .harness import ExperimentConfig, coverage, plots_from_csv, run_experiment
from .mesh import load_mesh
from .params import ConfigError


def _parse_seed_range(text: str) -> list[int]:
    """'N' means seeds 0..N-1; 'A:B' means seeds A..B-1."""
    if ":" in text:
        a, b = text.split(":", 1)
        return list(range(int(a), int(b)))
    return list(range(int(text)))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nbvplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run seeded observation trials from a config file")
    p_run.add_argument("config", help="key = value experiment config")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seeds", help="override seed range: 'N' or 'A:B'")

    p_cov = sub.add_parser("coverage", help="coverage of a pointcloud PLY against a mesh")
    p_cov.add_argument("--mesh", required=True)
    p_cov.add_argument("--cloud", required=True, help="pointcloud PLY")
    p_cov.add_argument("--eta", type=float, required=True, help="registration radius, m")
    p_cov.add_argument("--scale-box", nargs=3, type=float, default=None, metavar=("X", "Y", "Z"))

    p_plot = sub.add_parser("plot", help="rebuild coverage plots from a views.csv")
    p_plot.add_argument("csv")
    p_plot.add_argument("--out", required=True, help="output directory for plot images")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "run":
            config = ExperimentConfig.from_file(args.config)
            seeds = _parse_seed_range(args.seeds) if args.seeds else None
            summary = run_experiment(config, args.out, seeds=seeds)
            print(
                f"{summary['n_trials']} trials ({summary['n_failed']} failed): "
                f"mean views {summary['mean_views']:.1f}, "
                f"mean coverage {100 * summary['mean_coverage']:.1f}%, "
                f"mean distance {summary['mean_distance']:.2f} m -> {summary['out_dir']}"
            )
        elif args.command == "coverage":
            mesh = load_mesh(args.mesh, scale_box=args.scale_box)
            cloud = load_cloud_ply(args.cloud)
            print(f"coverage = {coverage(mesh, cloud, args.eta):.6f}")
        elif args.command == "plot":
            plots_from_csv(args.csv, args.out)
            print(f"plots written to {args.out}")
    except (ConfigError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
