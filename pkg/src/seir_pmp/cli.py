"""Command-line front end: fit, predict, control and simulate.

    seir-pmp fit --config run.cfg --out results/
    seir-pmp predict --config run.cfg --out results/ --horizon 14
    seir-pmp control --config run.cfg --out results/ --schedule schedule.csv
    seir-pmp simulate --config sim.cfg --out sim/

The config is a flat ``key = value`` text file; ``#`` starts a comment and
relative paths are resolved against the config's directory. Unknown keys are
rejected. See ``CONFIG_KEYS`` for the full list with defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .control import (
    ConfigurationError,
    FitResult,
    UnreachableTargetError,
    WindowError,
    scheduled_control,
    window_problems,
    windowed_fit,
)
from .data import (
    DataFormatError,
    ObservedSeries,
    RegionNotFound,
    initial_state,
    load_populations,
    mu_init,
    parse_csse,
    sample_observations,
    synth_twin,
)
from .forward import SolverGrid, solve_forward
from .model import (
    DomainError,
    ParamBounds,
    ParamVec,
    StateVec,
    r0,
    sigma,
    simulate_fractions,
)

log = logging.getLogger("seir_pmp")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NONCONVERGED = 4
EXIT_UNREACHABLE = 5

CONTROL_REACH_TOL = 0.01


class ConfigError(ConfigurationError):
    pass


def _floats(text: str, count: int | None = None) -> tuple:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"expected {count} numbers, got {text!r}")
    return vals


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    """Everything a run needs; built by ``load_config`` from a key = value file."""

    # data source: "csse" (confirmed + deaths files), "series" (t,I_c,D_c csv) or "twin"
    source: str = "csse"
    region: str = ""
    confirmed: Path | None = None
    deaths: Path | None = None
    series: Path | None = None
    populations: Path | None = None
    population: float | None = None
    start_day: float = 0.0
    end_day: float | None = None
    stride: int = 2
    windows: tuple = ()
    substeps: int = 10
    beta_bounds: tuple = (0.0, 5.0)
    epsilon_bounds: tuple = (0.2, 0.25)
    gamma_bounds: tuple = (0.1, 0.2)
    mu_bounds: tuple = (0.0, 0.01)
    tau_base: float = 1e-3
    tau_multipliers: tuple = (100.0, 1.0, 1.0, 0.01)
    weight_policy: str = "max"
    tol: float = 1e-4
    max_iters: int = 5000
    step_control: bool = True
    # initial guess; mu0 = "auto" derives it from the death increments
    beta0: float = 0.5
    epsilon0: float | None = None
    gamma0: float | None = None
    mu0: float | str = "auto"
    out: Path = Path("out")
    seed: int | None = None
    # twin source
    twin_theta: Path | None = None
    twin_days: float = 90.0
    initial_infected: float = 100.0
    noise: float = 0.0
    # control
    control_start: float | None = None
    # simulate
    theta: tuple | None = None
    initial: tuple | None = None
    days: float = 100.0
    birth_rate: float = 0.0
    fraction_days: float = 5000.0
    fraction_dt: float = 0.1
    base_dir: Path = field(default=Path("."), repr=False)

    @property
    def bounds(self) -> ParamBounds:
        lo = ParamVec(self.beta_bounds[0], self.epsilon_bounds[0], self.gamma_bounds[0], self.mu_bounds[0])
        hi = ParamVec(self.beta_bounds[1], self.epsilon_bounds[1], self.gamma_bounds[1], self.mu_bounds[1])
        try:
            return ParamBounds(lo, hi)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def tau(self) -> ParamVec:
        return ParamVec(*(self.tau_base * k for k in self.tau_multipliers))


_PATH_KEYS = {"confirmed", "deaths", "series", "populations", "out", "twin_theta"}
_PAIR_KEYS = {"beta_bounds", "epsilon_bounds", "gamma_bounds", "mu_bounds"}
_INT_KEYS = {"stride", "substeps", "max_iters"}
_OPT_INT_KEYS = {"seed"}
_FLOAT_KEYS = {"start_day", "tau_base", "tol", "beta0", "twin_days", "initial_infected",
               "noise", "days", "birth_rate", "fraction_days", "fraction_dt"}
_OPT_FLOAT_KEYS = {"population", "end_day", "epsilon0", "gamma0", "control_start"}
CONFIG_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "base_dir")


def _convert(key: str, value: str, base: Path):
    if key in _PATH_KEYS:
        p = Path(value)
        return p if p.is_absolute() else base / p
    if key in _PAIR_KEYS:
        return _floats(value, 2)
    if key == "windows":
        return _floats(value)
    if key == "tau_multipliers":
        return _floats(value, 4)
    if key == "theta":
        return _floats(value, 4)
    if key == "initial":
        return _floats(value, 5)
    if key == "step_control":
        return _bool(value)
    try:
        if key == "mu0":
            return value if value == "auto" else float(value)
        if key in _INT_KEYS:
            return int(value)
        if key in _OPT_INT_KEYS:
            return None if value.lower() == "none" else int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _OPT_FLOAT_KEYS:
            return None if value.lower() == "none" else float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    """Parse ``key = value`` lines into a RunConfig (no file-existence checks)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value, base_dir)
    cfg = RunConfig(base_dir=base_dir, **values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    if cfg.source not in ("csse", "series", "twin"):
        raise ConfigError(f"source must be csse, series or twin, got {cfg.source!r}")
    if cfg.weight_policy not in ("max", "relative"):
        raise ConfigError(f"weight_policy must be max or relative, got {cfg.weight_policy!r}")
    if cfg.stride < 1 or cfg.substeps < 1 or cfg.max_iters < 1:
        raise ConfigError("stride, substeps and max_iters must be >= 1")
    if cfg.tau_base <= 0 or any(k <= 0 for k in cfg.tau_multipliers):
        raise ConfigError("tau_base and tau_multipliers must be positive")
    if cfg.tol <= 0:
        raise ConfigError("tol must be positive")
    if any(b <= a for a, b in zip(cfg.windows, cfg.windows[1:])):
        raise ConfigError(f"windows must be increasing, got {cfg.windows}")
    if cfg.noise < 0:
        raise ConfigError("noise must be >= 0")
    cfg.bounds  # raises on inverted bounds


def check_files(cfg: RunConfig, command: str):
    """Every file the command will read must exist now."""
    need = []
    if command in ("fit", "predict", "control"):
        if cfg.source == "csse":
            need += [("confirmed", cfg.confirmed), ("deaths", cfg.deaths)]
            if cfg.population is None:
                need.append(("populations", cfg.populations))
        elif cfg.source == "series":
            need.append(("series", cfg.series))
        elif cfg.source == "twin":
            need.append(("twin_theta", cfg.twin_theta))
    for key, path in need:
        if path is None and key == "populations":
            continue  # bundled table
        if path is None:
            raise ConfigError(f"config key {key!r} is required for source={cfg.source}")
        if not Path(path).is_file():
            raise ConfigError(f"{key}: file not found: {path}")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


# ---------------------------------------------------------------- data loading


def read_theta_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(times, rows of beta, epsilon, gamma, mu) from a ``t,beta,epsilon,gamma,mu[,R0]`` CSV."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        t = np.array([float(r["t"]) for r in rows])
        th = np.array([[float(r[k]) for k in ParamVec._fields] for r in rows])
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: expected columns t,beta,epsilon,gamma,mu ({exc})") from None
    if t.size == 0:
        raise DataFormatError(f"{path}: no rows")
    if np.any(np.diff(t) < 0):
        raise DataFormatError(f"{path}: times must be non-decreasing")
    return t, th


def step_lookup(times: np.ndarray, rows: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Piecewise-constant lookup: the row whose time is the last one <= each query."""
    idx = np.searchsorted(times, np.asarray(at) + 1e-9, side="right") - 1
    return rows[np.clip(idx, 0, len(rows) - 1)]


def read_series_csv(path, population=None) -> ObservedSeries:
    """Long-format ``date_offset,I_c,D_c`` CSV as written by ``ObservedSeries.to_csv``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        t = [float(r["date_offset"]) for r in rows]
        I = [float(r["I_c"]) for r in rows]
        D = [float(r["D_c"]) for r in rows]
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: expected columns date_offset,I_c,D_c ({exc})") from None
    return ObservedSeries(t, I, D, region=Path(path).stem, population=population)


def _population(cfg: RunConfig, region: str) -> float:
    if cfg.population is not None:
        return cfg.population
    table = load_populations(cfg.populations)
    if region not in table:
        raise RegionNotFound(f"no population for region {region!r} in the population table")
    return table[region]


def load_series(cfg: RunConfig) -> ObservedSeries:
    """Day-0-anchored series restricted to [start_day, end_day], before sampling."""
    if cfg.source == "csse":
        series = parse_csse(Path(cfg.confirmed), Path(cfg.deaths), cfg.region,
                            _population(cfg, cfg.region))
    elif cfg.source == "series":
        if cfg.population is None:
            raise ConfigError("source=series needs population")
        series = read_series_csv(cfg.series, cfg.population)
    else:
        series = make_twin(cfg)
    end = series.times[-1] if cfg.end_day is None else cfg.end_day
    if cfg.start_day != 0:
        raise ConfigError("start_day other than 0 is not supported; day 0 anchors U0")
    if end > series.times[-1]:
        raise DataFormatError(f"end_day {end:g} beyond the last data day {series.times[-1]:g}")
    return series.window(0, end)


def make_twin(cfg: RunConfig) -> ObservedSeries:
    """Synthetic daily series from the piecewise-constant theta in ``twin_theta``."""
    if cfg.population is None:
        raise ConfigError("source=twin needs population")
    t_th, rows = read_theta_csv(cfg.twin_theta)
    days = np.arange(0.0, cfg.twin_days + 0.5, 1.0)
    grid = SolverGrid(tuple(days), cfg.substeps)
    theta = step_lookup(t_th, rows, grid.step_times()).reshape(grid.n_intervals, grid.substeps, 4)
    U0 = (cfg.population - cfg.initial_infected, 0.0, cfg.initial_infected, 0.0, 0.0)
    series, _ = synth_twin(theta, U0, grid, noise=cfg.noise, seed=cfg.seed, region="twin")
    return series


# ---------------------------------------------------------------- fit


def _initial_guess(cfg: RunConfig, problem) -> np.ndarray:
    b = cfg.bounds
    g = np.empty((problem.grid.n_intervals, problem.grid.substeps, 4))
    g[..., 0] = cfg.beta0
    g[..., 1] = cfg.epsilon0 if cfg.epsilon0 is not None else b.lower.epsilon
    g[..., 2] = cfg.gamma0 if cfg.gamma0 is not None else b.lower.gamma
    if cfg.mu0 == "auto":
        full = ObservedSeries(
            np.concatenate([[problem.grid.t0], problem.observed.times, [problem.target.T]]),
            np.concatenate([[problem.U0.I], problem.observed.I_c, [problem.target.I_d]]),
            np.concatenate([[problem.U0.D], problem.observed.D_c, [problem.target.D_d]]))
        g[..., 3] = mu_init(full, problem.grid, b)
    else:
        g[..., 3] = float(cfg.mu0)
    return b.clip(g)


def build_problems(cfg: RunConfig, sampled: ObservedSeries, U0):
    last = float(sampled.times[-1])
    bounds = list(cfg.windows) if cfg.windows else [0.0, last]
    if bounds[0] != 0.0 or bounds[-1] > last:
        raise ConfigError(f"windows must start at 0 and end by the last observation ({last:g})")
    try:
        return window_problems(sampled, U0, bounds, substeps=cfg.substeps,
                               weight_policy=cfg.weight_policy, bounds=cfg.bounds,
                               tau=cfg.tau, tol=cfg.tol, max_iters=cfg.max_iters,
                               step_control=cfg.step_control)
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None


def run_windows(cfg: RunConfig, problems) -> tuple[FitResult | None, Exception | None]:
    """Windowed fit; on failure returns the windows finished before it plus the error."""
    try:
        return windowed_fit(problems, _initial_guess(cfg, problems[0]),
                            rough_guess=lambda p: _initial_guess(cfg, p)), None
    except WindowError as exc:
        return exc.partial, exc


def relative_misfit(result: FitResult, sampled: ObservedSeries) -> dict:
    """|model - data| / max(data, 1) for I and D at each fitted observation time."""
    grid = result.trajectory.grid
    obs = result.trajectory.at_observations()[1:]
    t = np.asarray(grid.observation_times[1:])
    ref = np.array([sampled.value_at(x) for x in t])
    mis_I = np.abs(obs[:, 2] - ref[:, 0]) / np.maximum(ref[:, 0], 1.0)
    mis_D = np.abs(obs[:, 4] - ref[:, 1]) / np.maximum(ref[:, 1], 1.0)
    return {"t": t.tolist(), "I": mis_I.tolist(), "D": mis_D.tolist(),
            "max_I": float(mis_I.max()), "max_D": float(mis_D.max())}


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def theta_table(result: FitResult) -> np.ndarray:
    """Rows t,beta,epsilon,gamma,mu,R0 at every step time plus T (holding the last value)."""
    grid = result.trajectory.grid
    t = np.append(grid.step_times(), grid.T)
    th = result.theta_rows()
    th = np.vstack([th, th[-1:]])
    R0 = th[:, 0] / (th[:, 2] + th[:, 3])
    return np.column_stack([t, th, R0])


def write_fit_outputs(out: Path, result: FitResult, sampled: ObservedSeries, extra: dict):
    out.mkdir(parents=True, exist_ok=True)
    grid = result.trajectory.grid
    _write_csv(out / "theta.csv", ["t", *ParamVec._fields, "R0"], theta_table(result))
    nodes = result.trajectory.nodes()
    _write_csv(out / "trajectory.csv", ["t", *StateVec._fields],
               np.column_stack([grid.node_times(), nodes]))
    obs = result.trajectory.at_observations()
    t = np.asarray(grid.observation_times)
    ref = np.array([sampled.value_at(x) for x in t])
    _write_csv(out / "plots" / "infections.csv", ["t", "reported", "fitted"],
               np.column_stack([t, ref[:, 0], obs[:, 2]]))
    _write_csv(out / "plots" / "deaths.csv", ["t", "reported", "fitted"],
               np.column_stack([t, ref[:, 1], obs[:, 4]]))
    tt = theta_table(result)
    _write_csv(out / "plots" / "r0.csv", ["t", "R0"], tt[:, [0, 5]])
    report = {
        "loss_history": [w.loss_history for w in result.windows] or [result.loss_history],
        "iterations": [w.iterations for w in result.windows] or [result.iterations],
        "converged": [w.converged for w in result.windows] or [result.converged],
        "misfit": relative_misfit(result, sampled),
    }
    report.update(extra)
    (out / "fit_report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report


def cmd_fit(cfg: RunConfig, out: Path) -> int:
    check_files(cfg, "fit")
    series = load_series(cfg)
    sampled = sample_observations(series, cfg.stride)
    U0 = initial_state(sampled)
    problems = build_problems(cfg, sampled, U0)
    result, err = run_windows(cfg, problems)
    extra = {"region": series.region, "population": float(sampled.population),
             "windows": [p.grid.t0 for p in problems] + [problems[-1].grid.T]}
    if err is not None:
        extra["error"] = str(err)
    if result is None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit_report.json").write_text(json.dumps(
            {"loss_history": [], "iterations": [], "converged": [], "misfit": None, **extra},
            indent=2), encoding="utf-8")
        log.error("%s", err)
        return EXIT_NONCONVERGED
    report = write_fit_outputs(out, result, sampled, extra)
    print(f"fit: {len(report['iterations'])} window(s), iterations {report['iterations']}, "
          f"max relative misfit I {report['misfit']['max_I']:.3g}, D {report['misfit']['max_D']:.3g}")
    if err is not None:
        log.error("%s", err)
        return EXIT_NONCONVERGED
    if not all(report["converged"]):
        log.error("not every window converged within max_iters=%d", cfg.max_iters)
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------- predict


def read_final_state(path) -> tuple[float, StateVec]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        last = rows[-1]
        return float(last["t"]), StateVec(*(float(last[k]) for k in StateVec._fields))
    except (IndexError, KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: not a trajectory file ({exc})") from None


def read_state_at(path, t: float) -> StateVec:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        if abs(float(r["t"]) - t) < 1e-9:
            return StateVec(*(float(r[k]) for k in StateVec._fields))
    raise DataFormatError(f"{path}: no trajectory node at t={t:g}")


def forecast(U_T, theta_T, t_T: float, horizon: int, substeps: int) -> np.ndarray:
    """Daily-interval forward run holding theta fixed; rows t,S,E,I,R,D."""
    if horizon == 0:
        return np.array([[t_T, *U_T]])
    grid = SolverGrid(tuple(t_T + np.arange(horizon + 1.0)), substeps)
    traj = solve_forward(U_T, theta_T, grid)
    return np.column_stack([grid.node_times(), traj.nodes()])


def cmd_predict(cfg: RunConfig, out: Path, horizon: int, theta_path: Path | None = None) -> int:
    if horizon < 0:
        raise ConfigError("horizon must be >= 0")
    theta_path = theta_path or out / "theta.csv"
    traj_path = out / "trajectory.csv"
    for p in (theta_path, traj_path):
        if not p.is_file():
            raise ConfigError(f"missing fit artifact {p}; run 'fit' first")
    _, rows = read_theta_csv(theta_path)
    t_T, U_T = read_final_state(traj_path)
    table = forecast(U_T, rows[-1], t_T, horizon, cfg.substeps)
    _write_csv(out / "forecast.csv", ["t", *StateVec._fields], table)
    print(f"forecast: {horizon} days from t={t_T:g}, I {U_T.I:.6g} -> {table[-1, 3]:.6g}, "
          f"D {U_T.D:.6g} -> {table[-1, 5]:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------- control


def read_schedule(path) -> ObservedSeries:
    """Schedule CSV ``t,I_d,D_d``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        t = [float(r["t"]) for r in rows]
        I = [float(r["I_d"]) for r in rows]
        D = [float(r["D_d"]) for r in rows]
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: expected columns t,I_d,D_d ({exc})") from None
    if not t:
        raise DataFormatError(f"{path}: empty schedule")
    return ObservedSeries(t, I, D, region="schedule")


def cmd_control(cfg: RunConfig, out: Path, schedule_path: Path) -> int:
    if not schedule_path.is_file():
        raise ConfigError(f"schedule file not found: {schedule_path}")
    theta_path, traj_path = out / "theta.csv", out / "trajectory.csv"
    for p in (theta_path, traj_path):
        if not p.is_file():
            raise ConfigError(f"missing fit artifact {p}; run 'fit' first")
    schedule = read_schedule(schedule_path)
    t_fit_end, _ = read_final_state(traj_path)
    start = cfg.control_start if cfg.control_start is not None else t_fit_end
    if schedule.times[0] <= start:
        raise ConfigError(f"schedule times must come after the control start t={start:g}")
    state = read_state_at(traj_path, start)
    t_th, rows = read_theta_csv(theta_path)
    grid = SolverGrid(tuple(np.concatenate([[start], schedule.times])), cfg.substeps)
    base_theta = cfg.bounds.clip(step_lookup(t_th, rows, grid.step_times()).reshape(
        grid.n_intervals, grid.substeps, 4))
    baseline = solve_forward(state, base_theta, grid)
    try:
        result = scheduled_control(state, schedule, base_theta, bounds=cfg.bounds,
                                   tau=cfg.tau, start=start, substeps=cfg.substeps,
                                   tol=cfg.tol, max_iters=cfg.max_iters,
                                   reach_tol=CONTROL_REACH_TOL)
    except UnreachableTargetError as exc:
        log.error("%s", exc)
        if exc.result is not None:
            _write_control(out, exc.result, baseline, base_theta)
        return EXIT_UNREACHABLE
    table = _write_control(out, result, baseline, base_theta)
    final = result.trajectory.final
    print(f"control: mean beta {table['beta_controlled'].mean():.4g} vs baseline "
          f"{table['beta_baseline'].mean():.4g} (difference {table['beta_diff'].mean():+.4g}); "
          f"terminal I {final.I:.6g} (target {schedule.I_c[-1]:.6g}), "
          f"D {final.D:.6g} (target {schedule.D_c[-1]:.6g})")
    miss = max(abs(final.I - schedule.I_c[-1]) / max(schedule.I_c[-1], 1.0),
               abs(final.D - schedule.D_c[-1]) / max(schedule.D_c[-1], 1.0))
    if not result.converged:
        if miss > CONTROL_REACH_TOL:
            log.error("control did not converge and ended %.2f%% from the target", 100 * miss)
            return EXIT_NONCONVERGED
        log.warning("max_iters reached; terminal target met within %.2g%%", 100 * miss)
    return EXIT_OK


def _write_control(out: Path, result: FitResult, baseline, base_theta) -> dict:
    ctl = out / "control"
    grid = result.trajectory.grid
    tt = theta_table(result)
    _write_csv(ctl / "theta.csv", ["t", *ParamVec._fields, "R0"], tt)
    _write_csv(ctl / "trajectory.csv", ["t", *StateVec._fields],
               np.column_stack([grid.node_times(), result.trajectory.nodes()]))
    b = base_theta.reshape(-1, 4)
    c = result.theta_rows()
    t = grid.step_times()
    Ub = baseline.values[:, :-1].reshape(-1, 5)
    Uc = result.trajectory.values[:, :-1].reshape(-1, 5)
    cols = {"t": t, "beta_baseline": b[:, 0], "beta_controlled": c[:, 0],
            "beta_diff": c[:, 0] - b[:, 0], "I_baseline": Ub[:, 2], "I_controlled": Uc[:, 2],
            "D_baseline": Ub[:, 4], "D_controlled": Uc[:, 4]}
    _write_csv(ctl / "comparison.csv", list(cols), np.column_stack(list(cols.values())))
    return cols


# ---------------------------------------------------------------- simulate


def classify(sig: float, b: float = 0.0) -> str:
    """Threshold outcome; without births (b = 0) every outbreak eventually burns out."""
    if sig <= 1:
        return "extinction expected (sigma <= 1)"
    if b == 0:
        return "outbreak expected (sigma > 1); no endemic state without births (b = 0)"
    return "persistence expected (sigma > 1)"


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    if cfg.theta is None or cfg.initial is None:
        raise ConfigError("simulate needs theta = beta,epsilon,gamma,mu and initial = S,E,I,R,D")
    theta = ParamVec(*cfg.theta)
    U0 = StateVec(*cfg.initial)
    if cfg.days <= 0:
        raise ConfigError("days must be positive")
    grid = SolverGrid((0.0, float(cfg.days)), max(1, int(round(cfg.days * cfg.substeps))))
    traj = solve_forward(U0, theta, grid)
    _write_csv(out / "trajectory.csv", ["t", *StateVec._fields],
               np.column_stack([grid.node_times(), traj.nodes()]))
    N = U0.S + U0.E + U0.I + U0.R
    x0 = (U0.S / N, U0.E / N, U0.I / N)
    t, x = simulate_fractions(x0, theta, cfg.fraction_days, b=cfg.birth_rate, dt=cfg.fraction_dt)
    _write_csv(out / "fractions.csv", ["t", "s", "e", "i"], np.column_stack([t, x]))
    sig = sigma(theta, cfg.birth_rate)
    print(f"sigma = {sig:.6g}")
    print(f"R0 = {r0(theta):.6g}")
    print(f"outcome: {classify(sig, cfg.birth_rate)}")
    print(f"fraction system: i(0) = {x[0, 2]:.3g}, max i = {x[:, 2].max():.3g}, "
          f"i({cfg.fraction_days:g}) = {x[-1, 2]:.3g}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seir-pmp", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("fit", "learn time-varying parameters from data"),
                       ("predict", "forecast from the final fitted parameters"),
                       ("control", "learn parameters that follow a target schedule"),
                       ("simulate", "forward run with constant parameters plus threshold check")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, required=True)
        p.add_argument("--region", help="override the config region")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed for synthetic noise (overrides config)")
        if name == "predict":
            p.add_argument("--horizon", type=int, required=True, help="days to forecast")
            p.add_argument("--theta", type=Path, help="theta.csv to use (default: OUT/theta.csv)")
        if name == "control":
            p.add_argument("--schedule", type=Path, required=True, help="CSV with t,I_d,D_d")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.region:
            cfg.region = args.region
        if args.seed is not None:
            cfg.seed = args.seed
        out = args.out if args.out is not None else cfg.out
        if args.command == "fit":
            return cmd_fit(cfg, out)
        if args.command == "predict":
            return cmd_predict(cfg, out, args.horizon, args.theta)
        if args.command == "control":
            return cmd_control(cfg, out, args.schedule)
        return cmd_simulate(cfg, out)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, RegionNotFound, DomainError, IndexError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
