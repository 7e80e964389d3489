"""Positivity-preserving forward solver on observation-aligned sub-grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DomainError, StateVec, _params, _state


@dataclass(frozen=True)
class SolverGrid:
    """Observation times t_0 < ... < t_n, each interval split into ``substeps`` steps.

    Interval i (1-based) is (t_{i-1}, t_i) with nodes k = 0..m; node (i, m)
    and node (i+1, 0) are the same point in time.
    """

    observation_times: tuple
    substeps: int = 10

    def __post_init__(self):
        t = np.asarray(self.observation_times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise DomainError("grid needs at least two observation times")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise DomainError("observation times must be finite and strictly increasing")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise DomainError(f"substeps must be a positive integer, got {self.substeps}")
        object.__setattr__(self, "observation_times", tuple(float(x) for x in t))
        object.__setattr__(self, "substeps", int(self.substeps))

    @property
    def n_intervals(self) -> int:
        return len(self.observation_times) - 1

    @property
    def n_steps(self) -> int:
        return self.n_intervals * self.substeps

    @property
    def t0(self) -> float:
        return self.observation_times[0]

    @property
    def T(self) -> float:
        return self.observation_times[-1]

    def step_sizes(self) -> np.ndarray:
        """h_i for each interval, shape (n,)."""
        return np.diff(self.observation_times) / self.substeps

    def interval_nodes(self) -> np.ndarray:
        """Node times, shape (n, m + 1)."""
        t = np.asarray(self.observation_times)
        frac = np.arange(self.substeps + 1) / self.substeps
        return t[:-1, None] + np.diff(t)[:, None] * frac[None, :]

    def node_times(self) -> np.ndarray:
        """Distinct node times, shape (n*m + 1,)."""
        nodes = self.interval_nodes()
        return np.concatenate([nodes[:, :-1].ravel(), [self.T]])

    def step_times(self) -> np.ndarray:
        """Left endpoint of every step, shape (n*m,)."""
        return self.interval_nodes()[:, :-1].ravel()


def as_theta_grid(theta, grid: SolverGrid) -> np.ndarray:
    """Broadcast parameters to one row per step, shape (n, m, 4).

    Accepts a single 4-vector, an (n*m, 4) stack or an (n, m, 4) array.
    """
    theta = np.asarray(theta, dtype=float)
    n, m = grid.n_intervals, grid.substeps
    if theta.shape == (4,):
        theta = np.broadcast_to(theta, (n, m, 4))
    elif theta.shape == (n * m, 4):
        theta = theta.reshape(n, m, 4)
    elif theta.shape != (n, m, 4):
        raise DomainError(f"theta shape {theta.shape} does not fit a grid of {n}x{m} steps")
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise DomainError("theta must be finite and >= 0 everywhere")
    return np.array(theta, dtype=float)


@dataclass
class StateTrajectory:
    """Forward solution, ``values`` of shape (n, m + 1, 5)."""

    grid: SolverGrid
    values: np.ndarray

    def nodes(self) -> np.ndarray:
        """Distinct node values, shape (n*m + 1, 5), aligned with grid.node_times()."""
        v = self.values
        return np.concatenate([v[:, :-1].reshape(-1, 5), v[-1:, -1]])

    def at_observations(self) -> np.ndarray:
        """State at t_0..t_n, shape (n + 1, 5)."""
        return np.concatenate([self.values[:1, 0], self.values[:, -1]])

    @property
    def initial(self) -> StateVec:
        return StateVec(*map(float, self.values[0, 0]))

    @property
    def final(self) -> StateVec:
        return StateVec(*map(float, self.values[-1, -1]))


def _step(S, E, I, R, D, beta, eps, gamma, mu, h):
    N = S + E + I + R
    S1 = S / (1.0 + h * beta * I / N)
    E1 = (E + h * beta * S1 * I / N) / (1.0 + h * eps)
    I1 = (I + h * eps * E1) / (1.0 + h * (gamma + mu))
    R1 = R + h * gamma * I1
    D1 = D + h * mu * I1
    return S1, E1, I1, R1, D1


def forward_step(U_k, theta_k, h: float) -> StateVec:
    """One explicit-implicit Gauss-Seidel step; outputs stay nonnegative for any h > 0."""
    if not np.isfinite(h) or h <= 0:
        raise DomainError(f"step size must be positive, got {h}")
    U = _state(U_k)
    theta = _params(theta_k)
    return StateVec(*_step(*U.tolist(), *theta.tolist(), float(h)))


def solve_forward(U0, theta, grid: SolverGrid) -> StateTrajectory:
    """Sweep the scheme over every interval; theta[i, k] drives step k -> k+1."""
    U = _state(U0)
    th = as_theta_grid(theta, grid)
    n, m = grid.n_intervals, grid.substeps
    hs = grid.step_sizes()
    out = np.empty((n, m + 1, 5))
    cur = tuple(U.tolist())
    for i in range(n):
        h = float(hs[i])
        rows = th[i].tolist()
        out[i, 0] = cur
        block = out[i]
        for k in range(m):
            cur = _step(*cur, *rows[k], h)
            block[k + 1] = cur
    return StateTrajectory(grid, out)
