"""Command line entry point: ``gkae <task> [--config cfg.json] [--seed N] [--out DIR] [--override k=v]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .exceptions import GkaeError
from .harness import TASKS, ExperimentConfig, apply_overrides, run_experiment, write_report

log = logging.getLogger("gkae")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkae", description="Graph Koopman autoencoder experiments")
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", help="JSON experiment config (format gkae-config/1)")
    parser.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
    parser.add_argument("--out", help="output directory (default: config out_dir)")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a config entry; dotted keys reach nested fields, values parse as JSON")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    data = apply_overrides(data, args.override)
    data["task"] = args.task
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError("seed must be non-negative")
        data["seeds"] = [args.seed]
    if args.out:
        data["out_dir"] = args.out
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        result = run_experiment(cfg)
        paths = write_report(result, cfg.out_dir)
    except (GkaeError, ValueError, OSError) as exc:
        print(f"gkae {args.task}: {exc}", file=sys.stderr)
        return 1
    for name, stats in result.report["aggregate"].items():
        print(f"{name}: {stats['mean']:.6g} (std {stats['std']:.3g}, {stats['n_seeds']} seeds)")
    log.info("wrote %s", ", ".join(sorted(paths)))
    print(f"report: {paths['report.json']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
