"""Run the shipped convergence configs and print the final-time distance per N.

    python scripts/run_convergence.py [--out out] [configs/converge_d1.yaml ...]
"""
import argparse
import time
from pathlib import Path

from gphier import config, experiments

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path,
                    default=[ROOT / "configs" / "converge_d1.yaml", ROOT / "configs" / "converge_d2.yaml"])
    ap.add_argument("--out", type=Path, default=Path("out"))
    args = ap.parse_args()
    for path in args.configs:
        cfg = config.load(path)
        start = time.perf_counter()
        rep = experiments.cmd_converge(cfg, args.out / path.stem)
        print(f"{path.name}: d={cfg.domain.d} M={cfg.domain.M} t={cfg.time.t_final} "
              f"({time.perf_counter() - start:.0f}s)")
        for key, value in rep.summary.items():
            print(f"  {key:>14} {value:.6g}")
        for w in rep.warnings:
            print(f"  warning: {w}")


if __name__ == "__main__":
    main()
