"""Twin experiment: fit data generated from configs/twin_theta.csv, then compare.

    python scripts/run_twin.py [--noise 0.02 --seed 1]

Prints, for each constant stretch of the generating parameters, the true
values next to the mean of the recovered ones, plus the data misfit.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from seir_pmp.cli import load_config, main as cli_main, read_theta_csv

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "twin.cfg")
    ap.add_argument("--noise", type=float, default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)

    config = args.config
    if args.noise is not None:
        text = config.read_text() + f"\nnoise = {args.noise}\n"
        config = config.with_name("_twin_noise.cfg")
        config.write_text(text.replace("noise = 0\n", ""))
    try:
        cli = ["fit", "--config", str(config)]
        if args.seed is not None:
            cli += ["--seed", str(args.seed)]
        code = cli_main(cli)
        cfg = load_config(config)
    finally:
        if config != args.config:
            config.unlink()

    t_true, true = read_theta_csv(cfg.twin_theta)
    t_fit, fitted = read_theta_csv(cfg.out / "theta.csv")
    edges = np.append(t_true, cfg.twin_days)
    print(f"{'days':>10}  {'param':>8}  {'true':>8}  {'recovered':>9}")
    for k in range(len(t_true)):
        inside = (t_fit >= edges[k]) & (t_fit < edges[k + 1])
        for c, name in enumerate(("beta", "epsilon", "gamma", "mu")):
            print(f"{edges[k]:>4g}-{edges[k + 1]:<5g}  {name:>8}  {true[k, c]:8.4f}  "
                  f"{fitted[inside, c].mean():9.4f}")
    report = json.loads((cfg.out / "fit_report.json").read_text())
    print(f"max relative misfit: I {report['misfit']['max_I']:.2e}, D {report['misfit']['max_D']:.2e}")
    return code


if __name__ == "__main__":
    sys.exit(main())
