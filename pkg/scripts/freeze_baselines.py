"""Regenerate every frozen baseline from the shipped lattice and estimates configs.

Equivalent to running ``gphier lattice`` and ``gphier estimates`` with
``--freeze-baselines``; the table lands in ``src/gphier/data/baselines.json``.
"""
import sys
from pathlib import Path

from gphier import cli

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    for command in ("lattice", "estimates"):
        code = cli.main([command, "--config", str(ROOT / "configs" / f"{command}.yaml"), "--freeze-baselines"])
        if code:
            sys.exit(code)
