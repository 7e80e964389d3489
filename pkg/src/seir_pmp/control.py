"""Data-driven optimal control of SEIR parameters.

The fit loop is the method of successive approximations: forward state
sweep, backward co-state sweep, then a proximal-point minimization of the
Hamiltonian at every grid point, projected onto the parameter box.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .adjoint import CostateTrajectory, solve_backward
from .data import ObservedSeries, TargetPoint
from .forward import SolverGrid, StateTrajectory, as_theta_grid, solve_forward
from .model import (
    DEFAULT_BOUNDS,
    DomainError,
    ParamBounds,
    ParamVec,
    StateVec,
    _costate,
    _params,
    _state,
)

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e3
STEP_GROWTH = 1.2
STEP_CAP = 1e3
STEP_FLOOR = 1e-12


class ConfigurationError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, message, loss_history=()):
        super().__init__(message)
        self.loss_history = list(loss_history)


class UnreachableTargetError(RuntimeError):
    """Schedule cannot be followed with parameters inside the box."""

    def __init__(self, message, result=None, pinned=()):
        super().__init__(message)
        self.result = result
        self.pinned = tuple(pinned)


class WindowError(RuntimeError):
    """A window failed; ``partial`` holds the concatenated windows before it, if any."""

    def __init__(self, window: int, cause: Exception, partial=None):
        super().__init__(f"window {window}: {cause}")
        self.window = window
        self.cause = cause
        self.partial = partial


@dataclass(frozen=True)
class LossWeights:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        if not (np.isfinite(self.lambda1) and np.isfinite(self.lambda2)):
            raise DomainError("loss weights must be finite")
        if self.lambda1 < 0 or self.lambda2 < 0 or (self.lambda1 == 0 and self.lambda2 == 0):
            raise DomainError(f"loss weights must be >= 0 and not both zero: {self}")

    @classmethod
    def from_data(cls, I_c, D_c) -> LossWeights:
        """1/max(I_c)^2 and 1/max(D_c)^2, so both misfit terms are O(1)."""
        I_max = max(float(np.max(I_c)), 1.0)
        D_max = max(float(np.max(D_c)), 1.0)
        return cls(1.0 / I_max**2, 1.0 / D_max**2)

    def scaled(self, factor: float) -> LossWeights:
        return LossWeights(self.lambda1 * factor, self.lambda2 * factor)


class _RawWeights(NamedTuple):
    # effective per-point weights; may be zero, so no LossWeights validation
    lambda1: float
    lambda2: float


def relative_point_weights(I_c, D_c) -> np.ndarray:
    """Per-time multipliers 1/I_c^2, 1/D_c^2 (counts floored at one person)."""
    I_c = np.maximum(np.asarray(I_c, dtype=float), 1.0)
    D_c = np.maximum(np.asarray(D_c, dtype=float), 1.0)
    return np.stack([1.0 / I_c**2, 1.0 / D_c**2], axis=1)


def default_tau(base: float = 1e-3) -> ParamVec:
    """Per-component PPA steps: beta gets 100x, mu gets 1/100x the base."""
    return ParamVec(100 * base, base, base, base / 100)


@dataclass
class ControlProblem:
    """One fit/control task on a grid spanning t_0..t_n = T.

    ``observed`` holds the running-cost data at the interior times
    t_1..t_{n-1}; ``target`` is the terminal datum at T. Optional
    ``point_weights`` of shape (n, 2) multiply (lambda1, lambda2) at
    t_1..t_n, the last row applying to the terminal term. ``step_control``
    turns on the monotone step-size safeguard of ``fit``.
    """

    grid: SolverGrid
    U0: StateVec
    observed: ObservedSeries
    target: TargetPoint
    weights: LossWeights
    bounds: ParamBounds = DEFAULT_BOUNDS
    tau: ParamVec = field(default_factory=default_tau)
    tol: float = 1e-4
    max_iters: int = 5000
    point_weights: np.ndarray | None = None
    step_control: bool = True

    def __post_init__(self):
        self.U0 = StateVec(*map(float, _state(self.U0)))
        tau = np.asarray(self.tau, dtype=float)
        if tau.shape != (4,) or np.any(tau <= 0) or not np.all(np.isfinite(tau)):
            raise ConfigurationError(f"tau must be four positive numbers, got {self.tau}")
        self.tau = ParamVec(*map(float, tau))
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        interior = np.asarray(self.grid.observation_times[1:-1])
        if self.observed.times.shape != interior.shape or not np.allclose(
                self.observed.times, interior, rtol=0, atol=1e-9):
            raise ConfigurationError(
                "observed times must equal the interior grid times "
                f"({interior.size} expected, {self.observed.times.size} given)")
        if abs(self.target.T - self.grid.T) > 1e-9:
            raise ConfigurationError(f"target time {self.target.T} != grid end {self.grid.T}")
        if self.point_weights is not None:
            pw = np.asarray(self.point_weights, dtype=float)
            if pw.shape != (self.grid.n_intervals, 2) or np.any(pw < 0) or not np.all(np.isfinite(pw)):
                raise ConfigurationError(
                    f"point_weights must be finite, >= 0, shape ({self.grid.n_intervals}, 2)")
            self.point_weights = pw

    def running_data(self) -> list[tuple[float, float]]:
        return list(zip(self.observed.I_c.tolist(), self.observed.D_c.tolist()))

    def _weights_at(self, row: int) -> LossWeights:
        if self.point_weights is None:
            return self.weights
        a, b = self.point_weights[row]
        return _RawWeights(self.weights.lambda1 * a, self.weights.lambda2 * b)

    def running_weights(self) -> list:
        return [self._weights_at(i) for i in range(self.grid.n_intervals - 1)]

    def terminal_weights(self):
        return self._weights_at(self.grid.n_intervals - 1)

    @classmethod
    def from_series(cls, series: ObservedSeries, U0, start: float, end: float,
                    substeps: int = 10, weights: LossWeights | None = None,
                    weight_policy: str = "max", **kwargs) -> ControlProblem:
        """Window [start, end] of a series: interior entries are data, the entry at end is the target.

        ``weight_policy`` is "max" (lambda = 1/max^2 over the window) or
        "relative" (each observation weighted by 1/value^2).
        """
        full = series.with_day0() if series.initial is not None else series
        inside = full.window(start, end)
        inside = inside.window(start + 1e-9, end)  # start is the initial time, not data
        if inside.times.size == 0 or abs(inside.times[-1] - end) > 1e-9:
            raise ConfigurationError(f"no observation at window end t={end}")
        times = np.concatenate([[start], inside.times])
        grid = SolverGrid(tuple(times), substeps)
        I_T, D_T = float(inside.I_c[-1]), float(inside.D_c[-1])
        observed = replace(inside, times=inside.times[:-1], I_c=inside.I_c[:-1],
                           D_c=inside.D_c[:-1], initial=None, dates=())
        if weight_policy == "relative":
            weights = weights or LossWeights(1.0, 1.0)
            kwargs["point_weights"] = relative_point_weights(inside.I_c, inside.D_c)
        elif weight_policy != "max":
            raise ConfigurationError(f"unknown weight policy {weight_policy!r}")
        if weights is None:
            weights = LossWeights.from_data(inside.I_c, inside.D_c)
        return cls(grid=grid, U0=U0, observed=observed, target=TargetPoint(end, I_T, D_T),
                   weights=weights, **kwargs)


@dataclass
class FitResult:
    """Output of a fit.

    ``theta`` has one row per solver step, shape (n, m, 4); ``loss_history``
    holds J at every iterate including the returned one.
    """

    theta: np.ndarray
    trajectory: StateTrajectory
    loss_history: list
    iterations: int
    converged: bool
    windows: list = field(default_factory=list)

    @property
    def final_theta(self) -> ParamVec:
        return ParamVec(*map(float, self.theta[-1, -1]))

    @property
    def loss(self) -> float:
        return self.loss_history[-1]

    def theta_rows(self) -> np.ndarray:
        return self.theta.reshape(-1, 4)


def loss(U: StateTrajectory, problem: ControlProblem) -> float:
    """Running misfit at interior observation times plus terminal misfit."""
    obs = U.at_observations()
    if obs.shape[0] != problem.observed.times.size + 2:
        raise ConfigurationError("trajectory does not cover the problem's observation times")
    w = problem.weights
    pw = problem.point_weights if problem.point_weights is not None else np.ones((obs.shape[0] - 1, 2))
    I_ref = np.append(problem.observed.I_c, problem.target.I_d)
    D_ref = np.append(problem.observed.D_c, problem.target.D_d)
    J = (w.lambda1 * np.sum(pw[:, 0] * (obs[1:, 2] - I_ref) ** 2)
         + w.lambda2 * np.sum(pw[:, 1] * (obs[1:, 4] - D_ref) ** 2))
    return float(J)


def _prox_step(theta, U, V, tau):
    """Unconstrained PPA minimizer, vectorized over leading axes."""
    S, E, I, R = U[..., 0], U[..., 1], U[..., 2], U[..., 3]
    VS, VE, VI, VR, VD = (V[..., j] for j in range(5))
    N = S + E + I + R
    step = np.stack([
        S * I * (VS - VE) / N,
        E * (VE - VI),
        I * (VI - VR),
        I * (VI - VD),
    ], axis=-1)
    return theta + np.asarray(tau) * step


def ppa_update(theta_l, U, V, tau, bounds: ParamBounds = DEFAULT_BOUNDS,
               clip: bool = True) -> ParamVec:
    """argmin_theta H(U, V, theta) + sum_c (theta_c - theta_l_c)^2 / (2 tau_c), then projection.

    H is linear in theta, so the minimizer is a single explicit step.
    """
    theta = _params(theta_l)
    U = _state(U)
    V = _costate(V)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (4,) or np.any(tau <= 0):
        raise DomainError("tau must be four positive numbers")
    out = _prox_step(theta, U, V, tau)
    if clip:
        out = bounds.clip(out)
    if not np.all(np.isfinite(out)):
        raise DomainError("non-finite parameter update")
    return ParamVec(*map(float, out))


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    diff = float(np.linalg.norm(new - old))
    ref = float(np.linalg.norm(old))
    return diff / ref if ref > 0 else diff


def fit(problem: ControlProblem, theta0, callback: Callable | None = None) -> FitResult:
    """Iterate forward sweep, backward sweep and pointwise PPA until theta settles.

    Stops when ||theta_l - theta_{l-1}|| / ||theta_{l-1}|| <= tol over the
    stacked grid vector, or after ``max_iters`` updates.

    With ``problem.step_control`` an update that raises J is rejected and
    retried with all step sizes halved; accepted updates let the steps grow
    again by STEP_GROWTH up to STEP_CAP times the configured tau.
    """
    grid = problem.grid
    bounds = problem.bounds
    tau = np.asarray(problem.tau)
    theta = bounds.clip(as_theta_grid(theta0, grid))
    traj = solve_forward(problem.U0, theta, grid)
    J = loss(traj, problem)
    if not np.isfinite(J):
        raise DivergenceError("non-finite loss at the initial guess")
    history = [J]
    converged = False
    scale = 1.0
    it = 0
    while it < problem.max_iters:
        V = solve_backward(traj, theta, problem)
        U_steps, V_steps = traj.values[:, :-1], V.values[:, :-1]
        while True:
            new = bounds.clip(_prox_step(theta, U_steps, V_steps, scale * tau))
            new_traj = solve_forward(problem.U0, new, grid)
            new_J = loss(new_traj, problem)
            if not problem.step_control or new_J <= J:
                break
            scale *= 0.5
            if scale < STEP_FLOOR:
                break
        if problem.step_control and scale < STEP_FLOOR:
            log.info("fit: no descent step above %.1e x tau after %d iterations", STEP_FLOOR, it)
            break
        if not np.isfinite(new_J):
            raise DivergenceError(f"non-finite loss at iteration {it + 1}", history)
        change = _relative_change(new, theta)
        theta, traj, J = new, new_traj, new_J
        history.append(J)
        it += 1
        if history[0] > 0 and J > DIVERGENCE_FACTOR * history[0]:
            raise DivergenceError(
                f"loss grew from {history[0]:.4g} to {J:.4g} after {it} iterations; "
                "reduce tau or improve the initial guess", history)
        if callback is not None:
            callback(it, J, change)
        # a step shrunk by the safeguard moves theta less; judge it at nominal size
        if change <= problem.tol * min(scale, 1.0):
            converged = True
            break
        if problem.step_control:
            scale = min(scale * STEP_GROWTH, STEP_CAP)
    log.debug("fit: %d iterations, J %.4g -> %.4g, converged=%s",
              it, history[0], history[-1], converged)
    return FitResult(theta, traj, history, it, converged)


def _concat_grids(grids: Sequence[SolverGrid]) -> SolverGrid:
    times = list(grids[0].observation_times)
    for g in grids[1:]:
        if abs(g.t0 - times[-1]) > 1e-9:
            raise ConfigurationError("windows are not contiguous")
        if g.substeps != grids[0].substeps:
            raise ConfigurationError("windows must share the substep count")
        times.extend(g.observation_times[1:])
    return SolverGrid(tuple(times), grids[0].substeps)


def concatenate_results(results: Sequence[FitResult]) -> FitResult:
    grid = _concat_grids([r.trajectory.grid for r in results])
    theta = np.concatenate([r.theta for r in results], axis=0)
    values = np.concatenate([r.trajectory.values for r in results], axis=0)
    history = [J for r in results for J in r.loss_history]
    return FitResult(
        theta=theta,
        trajectory=StateTrajectory(grid, values),
        loss_history=history,
        iterations=sum(r.iterations for r in results),
        converged=all(r.converged for r in results),
        windows=list(results),
    )


def windowed_fit(problems: Sequence[ControlProblem], theta0,
                 rough_guess=None, callback: Callable | None = None) -> FitResult:
    """Fit consecutive windows, each starting from the previous window's end.

    The state at a window joint is carried over exactly; the parameter guess
    is the previous window's last value. When that warm start diverges and a
    ``rough_guess`` is given (array or ``problem -> theta`` callable) the
    window is retried from it.
    """
    if not problems:
        raise ConfigurationError("no windows to fit")
    results: list[FitResult] = []
    guess = theta0
    U0 = problems[0].U0
    for j, prob in enumerate(problems):
        if j > 0:
            prob = replace(prob, U0=U0)
        cb = (lambda it, J, ch, j=j: callback(j, it, J, ch)) if callback else None
        partial = concatenate_results(results) if results else None
        try:
            res = fit(prob, guess, callback=cb)
        except DivergenceError as exc:
            if rough_guess is None or j == 0:
                raise WindowError(j, exc, partial) from exc
            log.warning("window %d diverged from warm start, retrying with rough guess", j)
            rough = rough_guess(prob) if callable(rough_guess) else rough_guess
            try:
                res = fit(prob, rough, callback=cb)
            except DivergenceError as exc2:
                raise WindowError(j, exc2, partial) from exc2
        log.info("window %d [%g, %g]: %d iterations, J %.3g -> %.3g, converged=%s",
                 j, prob.grid.t0, prob.grid.T, res.iterations, res.loss_history[0],
                 res.loss, res.converged)
        results.append(res)
        U0 = res.trajectory.final
        guess = np.asarray(res.final_theta)
    return concatenate_results(results)


def window_problems(series: ObservedSeries, U0, boundaries: Sequence[float],
                    substeps: int = 10, weights: LossWeights | None = None,
                    **kwargs) -> list[ControlProblem]:
    """Split a series at the given boundaries (first and last included) into problems.

    U0 of later windows is a placeholder; ``windowed_fit`` overwrites it.
    """
    b = [float(x) for x in boundaries]
    if len(b) < 2 or any(y <= x for x, y in zip(b, b[1:])):
        raise ConfigurationError(f"window boundaries must be increasing, got {boundaries}")
    times = set(np.round(series.times, 9).tolist()) | {0.0}
    missing = [x for x in b if round(x, 9) not in times]
    if missing:
        raise ConfigurationError(f"window boundaries {missing} are not observation times")
    return [ControlProblem.from_series(series, U0, s, e, substeps=substeps,
                                       weights=weights, **kwargs)
            for s, e in zip(b, b[1:])]


def gradient_constant_theta(problem: ControlProblem, theta) -> np.ndarray:
    """d g(U(T)) / d theta for time-constant theta via the co-state.

    Integrates (dF/dtheta)^T V over the grid with the left-endpoint rule.
    ``problem`` must have no interior observations (terminal cost only).
    """
    if problem.observed.times.size:
        raise ConfigurationError("gradient_constant_theta needs a terminal-cost-only problem")
    theta = _params(theta)
    grid = problem.grid
    traj = solve_forward(problem.U0, theta, grid)
    V = solve_backward(traj, theta, problem)
    U = traj.values[:, :-1]
    W = V.values[:, :-1]
    S, E, I, R = U[..., 0], U[..., 1], U[..., 2], U[..., 3]
    N = S + E + I + R
    integrand = np.stack([
        S * I / N * (W[..., 1] - W[..., 0]),
        E * (W[..., 2] - W[..., 1]),
        I * (W[..., 3] - W[..., 2]),
        I * (W[..., 4] - W[..., 2]),
    ], axis=-1)
    h = grid.step_sizes()[:, None, None]
    return np.sum(h * integrand, axis=(0, 1))


def pinned_components(theta, bounds: ParamBounds, fraction: float = 0.5,
                      rtol: float = 1e-9) -> list[str]:
    """Names like 'beta>=lower' for components sitting on a bound at >= ``fraction`` of points."""
    rows = np.asarray(theta).reshape(-1, 4)
    out = []
    for c, name in enumerate(ParamVec._fields):
        lo, hi = bounds.lower[c], bounds.upper[c]
        if lo == hi:
            continue
        span = hi - lo
        at_lo = np.mean(rows[:, c] <= lo + rtol * span)
        at_hi = np.mean(rows[:, c] >= hi - rtol * span)
        if at_lo >= fraction:
            out.append(f"{name}={lo:g} (lower)")
        if at_hi >= fraction:
            out.append(f"{name}={hi:g} (upper)")
    return out


def scheduled_control(state: StateVec, schedule: ObservedSeries, theta_init,
                      bounds: ParamBounds = DEFAULT_BOUNDS, weights: LossWeights | None = None,
                      tau=None, start: float | None = None, substeps: int = 10,
                      tol: float = 1e-4, max_iters: int = 5000,
                      reach_tol: float = 0.01) -> FitResult:
    """Learn parameters that drive (I, D) along a scheduled path from ``state``.

    ``schedule`` lists desired (I_d, D_d) at increasing times after ``start``;
    its last entry is the terminal target. Raises ``UnreachableTargetError``
    when the schedule needs deaths to decrease, or when the optimizer ends
    with a terminal miss above ``reach_tol`` while parameters sit on bounds.
    """
    state = StateVec(*map(float, _state(state)))
    t = schedule.times
    if t.size == 0:
        raise ConfigurationError("empty schedule")
    if start is None:
        start = float(t[0]) - 1.0 if schedule.initial is None else 0.0
    if np.any(np.diff(schedule.D_c) < 0) or schedule.D_c[0] < state.D:
        raise UnreachableTargetError(
            "schedule asks deaths to decrease; cumulative deaths never decrease in the model")
    if np.any(np.diff(schedule.I_c) < 0):
        raise ConfigurationError("scheduled cumulative infections must be non-decreasing")
    grid = SolverGrid(tuple(np.concatenate([[start], t])), substeps)
    if weights is None:
        weights = LossWeights.from_data(schedule.I_c, schedule.D_c)
    problem = ControlProblem(
        grid=grid, U0=state,
        observed=replace(schedule, times=t[:-1], I_c=schedule.I_c[:-1],
                         D_c=schedule.D_c[:-1], initial=None, dates=()),
        target=TargetPoint(float(t[-1]), float(schedule.I_c[-1]), float(schedule.D_c[-1])),
        weights=weights, bounds=bounds,
        tau=default_tau() if tau is None else tau, tol=tol, max_iters=max_iters,
    )
    result = fit(problem, theta_init)
    final = result.trajectory.final
    miss = max(abs(final.I - problem.target.I_d) / max(problem.target.I_d, 1.0),
               abs(final.D - problem.target.D_d) / max(problem.target.D_d, 1.0))
    if miss > reach_tol:
        pinned = pinned_components(result.theta, bounds)
        if pinned:
            raise UnreachableTargetError(
                f"target unreachable within the parameter box: terminal miss {miss:.2%}, "
                f"pinned at {', '.join(pinned)}", result, pinned)
        log.warning("scheduled control ended %.2f%% from target", 100 * miss)
    return result
