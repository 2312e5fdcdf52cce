"""Command-line driver.

    gphier <command> --config FILE [--seed S] [--freeze-baselines] [--out DIR] [--emit-plot-data]

Commands: converge, lattice, estimates, hierarchy, nls, nbody.
Exit status: 0 ok, 1 computation failure, 2 configuration failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load, require
from .experiments import COMMANDS, FREEZING

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("gphier")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gphier", description="Mean-field hierarchy experiments.")
    p.add_argument("--version", action="version", version=f"gphier {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path, help="YAML experiment file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=None, help="override output.dir")
    p.add_argument("--freeze-baselines", action="store_true",
                   help="write measured regression constants to the baseline table (lattice, estimates)")
    p.add_argument("--emit-plot-data", action="store_true", help="also write long-format copies of every table")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = cfg.with_output(str(args.out))
        require(cfg, args.command)
        if args.freeze_baselines and args.command not in FREEZING:
            raise ConfigError(f"--freeze-baselines applies only to {', '.join(FREEZING)}")
    except ConfigError as exc:
        print(f"gphier: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.output.dir)
    kwargs = {"emit_plot_data": args.emit_plot_data}
    if args.command in FREEZING:
        kwargs["freeze"] = args.freeze_baselines
    try:
        report = COMMANDS[args.command](cfg, out, **kwargs)
    except ConfigError as exc:
        print(f"gphier: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any computation failure maps to exit 1
        mod = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"gphier {args.command}: {mod}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE

    for w in report.warnings:
        print(f"gphier {args.command}: warning: {w}", file=sys.stderr)
    for k, v in report.summary.items():
        print(f"{k} = {v!r}")
    for f in report.files:
        log.info("wrote %s", f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
