"""Write an approximate US case/death series in the CSSE wide layout.

This is NOT the CSSE snapshot. It interpolates (monotone, in log space)
between rounded cumulative totals for the US from 22 Jan to 17 Nov 2020,
as remembered from public dashboards, and exists only so the full-length
workflow can run offline. Drop the real CSSE files into data/csse/ for
the real thing.

    python scripts/make_us_proxy.py data/us_proxy
"""
import csv
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

START = date(2020, 1, 22)

# (day offset, cumulative confirmed, cumulative deaths), rounded
MILESTONES = [
    (0, 1, 0), (9, 7, 0), (16, 13, 0), (24, 15, 0), (35, 15, 0),
    (38, 30, 1), (42, 100, 6), (48, 1_000, 30), (53, 3_600, 60),
    (58, 19_000, 250), (63, 65_000, 1_000), (69, 188_000, 4_000),
    (84, 636_000, 31_000), (99, 1_070_000, 63_000), (114, 1_450_000, 87_000),
    (130, 1_790_000, 105_000), (145, 2_110_000, 117_000), (160, 2_630_000, 127_000),
    (175, 3_480_000, 137_000), (191, 4_560_000, 153_000), (206, 5_310_000, 170_000),
    (222, 6_030_000, 184_000), (237, 6_600_000, 196_000), (252, 7_230_000, 207_000),
    (267, 7_990_000, 217_000), (270, 8_130_000, 220_500), (283, 9_110_000, 230_000),
    (300, 11_360_000, 248_300),
]

# split of the national total over two pseudo-province rows, exercising aggregation
SPLIT = {"": 0.97, "Proxy Territories": 0.03}


def daily_series():
    days = np.arange(301)
    t = np.array([m[0] for m in MILESTONES], dtype=float)
    out = []
    for col in (1, 2):
        v = np.array([m[col] for m in MILESTONES], dtype=float)
        f = PchipInterpolator(t, np.log1p(v))
        out.append(np.maximum.accumulate(np.round(np.expm1(f(days)))))
    return days, out[0], out[1]


def write(outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    days, conf, dead = daily_series()
    header = ["Province/State", "Country/Region", "Lat", "Long"] + [
        f"{d.month}/{d.day}/{d.year % 100}" for d in (START + timedelta(int(k)) for k in days)]
    for name, values in (("confirmed", conf), ("deaths", dead)):
        path = outdir / f"time_series_covid19_{name}_global.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            rest = values.copy()
            rows = list(SPLIT.items())
            for i, (prov, share) in enumerate(rows):
                part = rest if i == len(rows) - 1 else np.floor(values * share)
                rest = rest - part if i < len(rows) - 1 else rest
                w.writerow([prov, "US", "40.0", "-100.0"] + [str(int(x)) for x in part])
        print(f"wrote {path}")


if __name__ == "__main__":
    write(Path(sys.argv[1] if len(sys.argv) > 1 else "data/us_proxy"))
