"""Scheduled control on the twin baseline: halve the daily increases over days 30-60.

    python scripts/run_control.py [--start 30 --end 60 --factor 0.5]

Runs the twin fit if results/twin is missing, writes the schedule, learns the
controlled parameters and prints the mean transmission rate before and after.
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from seir_pmp.cli import load_config, main as cli_main

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).parent))

import make_schedule  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--start", type=float, default=30.0)
    ap.add_argument("--end", type=float, default=60.0)
    ap.add_argument("--factor", type=float, default=0.5)
    args = ap.parse_args(argv)

    fit_cfg = ROOT / "configs" / "twin.cfg"
    out = load_config(fit_cfg).out
    if not (out / "trajectory.csv").is_file():
        code = cli_main(["fit", "--config", str(fit_cfg)])
        if code:
            return code
    schedule = out / "schedule.csv"
    make_schedule.main([str(out), f"{args.start:g}", f"{args.end:g}",
                        "--factor", str(args.factor), "--out", str(schedule)])
    ctl_cfg = ROOT / "configs" / "twin_control.cfg"
    text = ctl_cfg.read_text().replace("control_start = 30", f"control_start = {args.start:g}")
    tmp = ctl_cfg.with_name("_control.cfg")
    tmp.write_text(text)
    try:
        code = cli_main(["control", "--config", str(tmp), "--schedule", str(schedule)])
    finally:
        tmp.unlink()
    comp = out / "control" / "comparison.csv"
    if comp.is_file():
        with open(comp, newline="") as fh:
            rows = list(csv.DictReader(fh))
        base = np.mean([float(r["beta_baseline"]) for r in rows])
        ctl = np.mean([float(r["beta_controlled"]) for r in rows])
        print(f"mean beta over [{args.start:g}, {args.end:g}]: baseline {base:.4f}, "
              f"controlled {ctl:.4f} ({ctl - base:+.4f})")
    return code


if __name__ == "__main__":
    sys.exit(main())
