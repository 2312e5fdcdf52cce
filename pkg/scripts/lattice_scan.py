"""Ad hoc sup-scan of the constrained lattice sum over a (tau, p) box.

    python scripts/lattice_scan.py --tau -20 20 --p-max 5 --K 60 --alpha 1.0 [--csv scan.csv]
"""
import argparse
import time

from gphier import io, lattice
from gphier.experiments import scan_digest


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tau", type=int, nargs=2, default=(-20, 20), metavar=("MIN", "MAX"))
    ap.add_argument("--p-max", type=int, default=5)
    ap.add_argument("--K", type=int, default=60)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--full-box", action="store_true", help="scan every p instead of one per symmetry orbit")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()
    ps = lattice.p_box(args.p_max, canonical=not args.full_box)
    start = time.perf_counter()
    scan = lattice.sup_scan(tuple(args.tau), ps, args.K, args.alpha)
    rows = list(scan.rows())
    tau, p = scan.argmax
    print(f"{len(rows)} points in {time.perf_counter() - start:.1f}s; sup {scan.max!r} at tau={tau}, p={tuple(p)}")
    print(f"sha256 {scan_digest(rows)}")
    if args.csv:
        io.write_csv(args.csv, ["tau", "p1", "p2", "K", "alpha", "value", "terms"], rows, "adhoc")


if __name__ == "__main__":
    main()
