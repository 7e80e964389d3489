"""Write a control schedule that scales the daily increases of a fitted run.

Reads trajectory.csv from a fit output directory and writes t,I_d,D_d rows
for the observation times in (start, end], where each target keeps the value
at ``start`` plus ``factor`` times the fitted increase since then.

    python scripts/make_schedule.py results/twin 30 60 --factor 0.5 --stride 2
"""
import argparse
import csv
from pathlib import Path

import numpy as np


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("fit_dir", type=Path)
    ap.add_argument("start", type=float)
    ap.add_argument("end", type=float)
    ap.add_argument("--factor", type=float, default=0.5)
    ap.add_argument("--stride", type=float, default=2.0)
    ap.add_argument("--out", type=Path, help="default: FIT_DIR/schedule.csv")
    args = ap.parse_args(argv)

    with open(args.fit_dir / "trajectory.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    I = np.array([float(r["I"]) for r in rows])
    D = np.array([float(r["D"]) for r in rows])

    def at(x):
        k = int(np.argmin(np.abs(t - x)))
        if abs(t[k] - x) > 1e-9:
            raise SystemExit(f"no trajectory node at t={x:g}")
        return I[k], D[k]

    I0, D0 = at(args.start)
    out = args.out or args.fit_dir / "schedule.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "I_d", "D_d"])
        for x in np.arange(args.start + args.stride, args.end + 1e-9, args.stride):
            Ix, Dx = at(x)
            w.writerow([f"{x:g}", I0 + args.factor * (Ix - I0), D0 + args.factor * (Dx - D0)])
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
