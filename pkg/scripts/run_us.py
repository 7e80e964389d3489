"""US fit over 300 days with windows at 0,30,60,90,150,210,270,300.

    python scripts/run_us.py            # approximate series (built on first use)
    python scripts/run_us.py --csse     # real files in data/csse/

Prints the per-window convergence, the data misfit and the range of R0.
"""
import argparse
import json
import sys
from pathlib import Path

from seir_pmp.cli import load_config, main as cli_main, read_theta_csv

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).parent))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--csse", action="store_true", help="use data/csse instead of the proxy")
    args = ap.parse_args(argv)

    if args.csse:
        config = ROOT / "configs" / "us_csse.cfg"
    else:
        config = ROOT / "configs" / "us_proxy.cfg"
        if not (ROOT / "data" / "us_proxy").is_dir():
            import make_us_proxy
            make_us_proxy.write(ROOT / "data" / "us_proxy")
    code = cli_main(["fit", "--config", str(config)])
    cfg = load_config(config)
    report_path = cfg.out / "fit_report.json"
    if not report_path.is_file():
        return code
    report = json.loads(report_path.read_text())
    edges = report["windows"]
    for k, (it, conv) in enumerate(zip(report["iterations"], report["converged"])):
        print(f"window {edges[k]:g}-{edges[k + 1]:g}: {it} iterations, converged={conv}")
    if report["misfit"]:
        _, theta = read_theta_csv(cfg.out / "theta.csv")
        r0 = theta[:, 0] / (theta[:, 2] + theta[:, 3])
        print(f"max relative misfit: I {report['misfit']['max_I']:.3g}, "
              f"D {report['misfit']['max_D']:.3g}")
        print(f"R0 range: {r0.min():.3g} .. {r0.max():.3g}")
    return code


if __name__ == "__main__":
    sys.exit(main())
