"""Reported case data: CSSE ingestion, sampling, initial conditions, twin data."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .forward import SolverGrid, StateTrajectory, as_theta_grid, solve_forward
from .model import DEFAULT_BOUNDS, DomainError, ParamBounds, StateVec

log = logging.getLogger(__name__)

CSSE_META_COLUMNS = ("Province/State", "Country/Region", "Lat", "Long")


class DataFormatError(ValueError):
    """Malformed or inconsistent input data."""


class RegionNotFound(LookupError):
    pass


@dataclass
class ObservedSeries:
    """Cumulative infections/deaths at increasing day offsets.

    ``initial`` holds (I_c(0), D_c(0)) when the day-0 datum is kept apart from
    the sampled observations.
    """

    times: np.ndarray
    I_c: np.ndarray
    D_c: np.ndarray
    region: str = ""
    population: float | None = None
    initial: tuple | None = None
    dates: tuple = field(default=(), repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.I_c = np.asarray(self.I_c, dtype=float).reshape(-1)
        self.D_c = np.asarray(self.D_c, dtype=float).reshape(-1)
        if not (self.times.size == self.I_c.size == self.D_c.size):
            raise DataFormatError("times, I_c and D_c must have equal lengths")
        if np.any(np.diff(self.times) <= 0):
            raise DataFormatError("observation times must be strictly increasing")
        if np.any(self.I_c < 0) or np.any(self.D_c < 0):
            raise DataFormatError("counts must be non-negative")

    def __len__(self):
        return self.times.size

    def day0(self) -> tuple[float, float]:
        """(I_c(0), D_c(0))."""
        if self.initial is not None:
            return float(self.initial[0]), float(self.initial[1])
        if self.times.size and self.times[0] == 0:
            return float(self.I_c[0]), float(self.D_c[0])
        raise DataFormatError("series carries no day-0 datum")

    def with_day0(self) -> ObservedSeries:
        """Series with the day-0 datum as its first entry."""
        if self.times.size and self.times[0] == 0:
            return self
        I0, D0 = self.day0()
        return replace(
            self,
            times=np.concatenate([[0.0], self.times]),
            I_c=np.concatenate([[I0], self.I_c]),
            D_c=np.concatenate([[D0], self.D_c]),
            initial=None,
            dates=(),
        )

    def window(self, start: float, end: float) -> ObservedSeries:
        """Entries with start <= t <= end, times left unshifted."""
        mask = (self.times >= start) & (self.times <= end)
        return replace(self, times=self.times[mask], I_c=self.I_c[mask],
                       D_c=self.D_c[mask], initial=None, dates=())

    def value_at(self, t: float) -> tuple[float, float]:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-9))
        if idx.size == 0:
            if t == 0:
                return self.day0()
            raise DataFormatError(f"no observation at t={t}")
        return float(self.I_c[idx[0]]), float(self.D_c[idx[0]])

    def to_csv(self, path=None) -> str:
        """Long format ``date_offset,I_c,D_c``; written to ``path`` when given."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date_offset", "I_c", "D_c"])
        full = self.with_day0() if self.initial is not None else self
        for t, i, d in zip(full.times, full.I_c, full.D_c):
            w.writerow([_fmt(t), _fmt(i), _fmt(d)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class TargetPoint:
    T: float
    I_d: float
    D_d: float

    def __post_init__(self):
        if self.I_d < 0 or self.D_d < 0:
            raise DomainError("targets must be non-negative")


def _read_text(src) -> str:
    if isinstance(src, Path):
        return src.read_text(encoding="utf-8")
    return src


def _parse_wide(text: str, region: str, label: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError(f"{label}: empty file") from None
    header = [h.strip().lstrip("﻿") for h in header]
    if tuple(header[:4]) != CSSE_META_COLUMNS:
        raise DataFormatError(f"{label}: unexpected header {header[:4]}")
    dates = []
    for col, h in enumerate(header[4:], start=5):
        try:
            dates.append(datetime.strptime(h, "%m/%d/%y").date())
        except ValueError:
            raise DataFormatError(f"{label}: column {col} header {h!r} is not a m/d/yy date") from None
    totals = np.zeros(len(dates))
    found = False
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"{label}: row {lineno} has {len(row)} fields, expected {len(header)}")
        if row[1].strip() != region:
            continue
        found = True
        for col, cell in enumerate(row[4:], start=5):
            try:
                totals[col - 5] += float(cell) if cell.strip() else 0.0
            except ValueError:
                raise DataFormatError(
                    f"{label}: non-numeric cell {cell!r} at row {lineno}, column {col}") from None
    if not found:
        raise RegionNotFound(f"{label}: region {region!r} not found")
    return dates, totals


def _running_max(x: np.ndarray, what: str, region: str) -> np.ndarray:
    fixed = np.maximum.accumulate(x)
    n_bad = int(np.count_nonzero(fixed != x))
    if n_bad:
        log.warning("%s: repaired %d non-monotone %s values by running maximum",
                    region, n_bad, what)
    return fixed


def parse_csse(confirmed, deaths, region: str, population: float | None = None) -> ObservedSeries:
    """Aggregate a CSSE wide-format pair of files to one country series.

    ``confirmed`` and ``deaths`` are CSV text (or a ``Path``). Day 0 is the
    first date with at least one confirmed case.
    """
    c_dates, conf = _parse_wide(_read_text(confirmed), region, "confirmed")
    d_dates, dead = _parse_wide(_read_text(deaths), region, "deaths")
    if c_dates != d_dates:
        raise DataFormatError("confirmed and deaths files have different date columns")
    if any(b <= a for a, b in zip(c_dates, c_dates[1:])):
        raise DataFormatError("date columns are not strictly increasing")
    conf = _running_max(conf, "confirmed", region)
    dead = _running_max(dead, "deaths", region)
    started = np.flatnonzero(conf >= 1)
    if started.size == 0:
        raise DataFormatError(f"region {region!r} has no confirmed cases")
    first = started[0]
    day0 = c_dates[first]
    times = [(d - day0).days for d in c_dates[first:]]
    return ObservedSeries(
        times=times, I_c=conf[first:], D_c=dead[first:], region=region,
        population=population, dates=tuple(d.isoformat() for d in c_dates[first:]),
    )


def load_populations(path=None) -> dict[str, float]:
    """Region -> population table (``region,population`` CSV)."""
    if path is None:
        path = Path(__file__).with_name("populations.csv")
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["region"]: float(row["population"]) for row in csv.DictReader(fh)}


def sample_observations(series: ObservedSeries, stride: int) -> ObservedSeries:
    """Keep t = stride, 2*stride, ...; the day-0 datum moves to ``initial``."""
    if int(stride) != stride or stride < 1:
        raise DomainError(f"stride must be a positive integer, got {stride}")
    I0, D0 = series.day0()
    last = series.times[-1]
    if stride > last:
        raise IndexError(f"stride {stride} exceeds series length of {last:g} days")
    wanted = np.arange(stride, last + 0.5, stride, dtype=float)
    pos = np.searchsorted(series.times, wanted)
    ok = (pos < series.times.size)
    ok[ok] &= series.times[pos[ok]] == wanted[ok]
    if not np.all(ok):
        missing = wanted[~ok][:5]
        raise DataFormatError(f"series has no entries at t={missing.tolist()}")
    dates = tuple(series.dates[p] for p in pos) if series.dates else ()
    return replace(series, times=wanted, I_c=series.I_c[pos], D_c=series.D_c[pos],
                   initial=(I0, D0), dates=dates)


def initial_state(series: ObservedSeries, population: float | None = None) -> StateVec:
    """[N(0) - I_c(0), 0, I_c(0), 0, D_c(0)]."""
    N0 = population if population is not None else series.population
    if N0 is None:
        raise DomainError("population N(0) is required for the initial state")
    I0, D0 = series.day0()
    if N0 <= I0:
        raise DomainError(f"population {N0} must exceed initial infections {I0}")
    return StateVec(float(N0 - I0), 0.0, float(I0), 0.0, float(D0))


def mu_init(series: ObservedSeries, grid: SolverGrid,
            bounds: ParamBounds = DEFAULT_BOUNDS) -> np.ndarray:
    """Death-rate initial guess per step, shape (n, m).

    On interval (t_{i-1}, t_i) every sub-step gets
    (D_c(t_i) - D_c(t_{i-1})) / ((t_i - t_{i-1}) * I_c(t_i)), clipped to the mu bounds.
    """
    lo, hi = bounds.lower.mu, bounds.upper.mu
    t = grid.observation_times
    out = np.empty((grid.n_intervals, grid.substeps))
    fallback = 0
    for i in range(grid.n_intervals):
        I_prev, D_prev = series.value_at(t[i])
        I_next, D_next = series.value_at(t[i + 1])
        if I_next > 0:
            mu = (D_next - D_prev) / ((t[i + 1] - t[i]) * I_next)
        else:
            mu = 0.5 * (lo + hi)
            fallback += 1
        out[i] = min(max(mu, lo), hi)
    if fallback:
        log.warning("mu_init: %d intervals without infections, used bounds midpoint", fallback)
    return out


def _perturb(clean: np.ndarray, noise: float, rng) -> np.ndarray:
    noisy = clean.copy()
    noisy[1:] *= 1 + noise * rng.uniform(-1, 1, clean.size - 1)
    for k in range(1, clean.size):
        if clean[k] >= clean[k - 1]:
            noisy[k] = max(noisy[k], noisy[k - 1])
    return noisy


@dataclass
class TwinTruth:
    theta: np.ndarray
    trajectory: StateTrajectory


def synth_twin(theta_star, U0, grid: SolverGrid, noise: float = 0.0, seed=None,
               region: str = "twin") -> tuple[ObservedSeries, TwinTruth]:
    """Model-generated (I, D) at every observation time, optionally perturbed.

    Noise is multiplicative, (1 + noise*u) with u ~ U[-1, 1]. Wherever the
    clean series does not decrease, the noisy one is floored at its previous
    value, so monotone stretches stay monotone.
    """
    if noise < 0:
        raise DomainError("noise must be >= 0")
    theta = as_theta_grid(theta_star, grid)
    traj = solve_forward(U0, theta, grid)
    obs = traj.at_observations()
    I = obs[:, 2].copy()
    D = obs[:, 4].copy()
    if noise > 0:
        rng = np.random.default_rng(seed)
        I = _perturb(I, noise, rng)
        D = _perturb(D, noise, rng)
    U0 = traj.initial
    series = ObservedSeries(
        times=np.asarray(grid.observation_times) - grid.t0, I_c=I, D_c=D,
        region=region, population=U0.S + U0.E + U0.I + U0.R,
    )
    return series, TwinTruth(theta, traj)
