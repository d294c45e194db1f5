"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, apply_overrides, load_config, validate_config
from .experiments import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dwtrack",
        description="Run domain-wall track neuron experiments from a config file.")
    p.add_argument("config", help="YAML experiment configuration")
    p.add_argument("--out-dir", default=None, help="override the output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="sweep worker count (default: machine parallelism)")
    p.add_argument("--validate-only", action="store_true",
                   help="validate the config and echo resolved defaults")
    p.add_argument("--resolution-scale", type=float, default=1.0,
                   help="multiply the cell size for quick smoke runs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.validate_only:
        try:
            print(validate_config(args.config))
        except ConfigError as exc:
            for problem in exc.problems:
                print(f"config error: {problem}", file=sys.stderr)
            return 1
        return 0

    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, out_dir=args.out_dir, threads=args.threads,
                              resolution_scale=args.resolution_scale)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1

    status, artifacts = run_experiment(cfg)
    for a in artifacts:
        print(a)
    if status != 0:
        print("experiment failed; see manifest.json for details", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
