"""Command-line interface: ``qrevdiff <subcommand> --config FILE [options]``.

Exit codes: 0 all metrics within thresholds, 1 unexpected internal error,
2 configuration error, 3 numerical failure, 4 a metric exceeded its threshold.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import parse_config, serialize_config
from .errors import ConfigError
from .experiments import (EXIT_CONFIG, EXIT_OK, PIPELINES, exit_code, failure_manifest, run_scenario)

COMMANDS = list(PIPELINES) + ["validate-config"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrevdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="scenario configuration (INI)")
        p.add_argument("--seed", type=int, help="override [ensemble] seed")
        p.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
        p.add_argument("--threads", type=int, help="worker threads for ensembles and sweeps")
        p.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration value (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args) -> list:
    items = list(args.override)
    if args.seed is not None:
        items.append(f"ensemble.seed={args.seed}")
    if args.threads is not None:
        items.append(f"ensemble.threads={args.threads}")
    if args.out is not None:
        items.append(f"output.dir={args.out}")
    return items


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fallback_out = args.out if args.out is not None else Path("out")
    try:
        cfg = parse_config(args.config).with_overrides(_overrides(args))
    except ConfigError as exc:
        print(f"config error [{exc.code}]: {exc}", file=sys.stderr)
        if args.command != "validate-config":
            failure_manifest(args.command, fallback_out, exc)
        return EXIT_CONFIG
    if args.command == "validate-config":
        print(serialize_config(cfg), end="")
        if cfg.defaults_filled:
            print("# defaults filled: " + ", ".join(cfg.defaults_filled), file=sys.stderr)
        return EXIT_OK
    manifest = run_scenario(cfg, args.command)
    summary = {"status": manifest.status, "metrics": manifest.metrics, "error": manifest.error,
               "out": cfg["output"]["dir"]}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return exit_code(manifest)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
