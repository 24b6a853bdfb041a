"""Command line entry point."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError
from .harness import MODES, InvalidModeError, run_experiment


def _parse_seeds(text: str) -> list[int]:
    if "," in text:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    return list(range(int(text)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hapslam",
        description="Hybrid active/passive radio-sensing SLAM simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment over one or more seeds")
    run.add_argument("--config", required=True, help="scenario config file (YAML)")
    run.add_argument("--mode", required=True, choices=MODES)
    run.add_argument("--seeds", required=True,
                     help="seed count N (runs 0..N-1) or comma list, e.g. 3,5,9")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--particles", type=int, default=None,
                     help="override the configured particle count")
    run.add_argument("--steps", type=int, default=None,
                     help="truncate the trajectory to this many steps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        seeds = _parse_seeds(args.seeds)
    except ValueError:
        print(f"error: cannot parse --seeds {args.seeds!r}", file=sys.stderr)
        return 1
    try:
        results = run_experiment(args.config, args.mode, seeds, args.out,
                                 particles=args.particles, steps=args.steps)
    except (ConfigError, InvalidModeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for r in results:
        print(f"seed {r.seed}: {r.summary['n_steps']} steps, "
              f"final MAE {r.summary['final_mae']:.4g} m, "
              f"final OSPA {r.summary['final_ospa']:.4g} m, "
              f"{r.summary['n_features_detected']} features detected")
    return 0


if __name__ == "__main__":
    sys.exit(main())
