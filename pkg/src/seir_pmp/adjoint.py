"""Backward co-state sweep with jump conditions at observation times."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import SolverGrid, StateTrajectory, as_theta_grid
from .model import CostateVec, DomainError, _costate, _params, _state


@dataclass
class CostateTrajectory:
    """Co-state on the solver grid, ``values`` of shape (n, m + 1, 5).

    ``values[i, m]`` is the left limit at t_{i+1} (after the jump) and
    ``values[i + 1, 0]`` the right limit; they differ by the running-loss gradient.
    """

    grid: SolverGrid
    values: np.ndarray

    @property
    def initial(self) -> CostateVec:
        return CostateVec(*map(float, self.values[0, 0]))

    @property
    def terminal(self) -> CostateVec:
        return CostateVec(*map(float, self.values[-1, -1]))


def _back(VS, VE, VI, VR, VD, S, E, I, R, beta, eps, gamma, mu, h):
    N = S + E + I + R
    N2 = N * N
    a = h * beta * I * (N - S)
    VS0 = (VS * N2 + a * VE) / (N2 + a)
    VE0 = (VE + h * eps * VI) / (1.0 + h * eps)
    VI0 = (VI + h * (gamma * VR + mu * VD - beta * S * (N - I) * (VS0 - VE0) / N2)) \
        / (1.0 + h * (gamma + mu))
    return VS0, VE0, VI0, VR, VD


def backward_step(V_k1, U_k, theta_k, h: float) -> CostateVec:
    """V^k from V^{k+1}: V_S, V_E implicit in themselves, then V_I from the fresh V_S, V_E."""
    if not np.isfinite(h) or h <= 0:
        raise DomainError(f"step size must be positive, got {h}")
    V = _costate(V_k1)
    S, E, I, R, D = _state(U_k)
    theta = _params(theta_k)
    return CostateVec(*map(float, _back(*V.tolist(), S, E, I, R, *theta.tolist(), float(h))))


def _loss_gradient(U, I_ref, D_ref, weights) -> np.ndarray:
    return np.array([
        0.0, 0.0,
        2.0 * weights.lambda1 * (U[2] - I_ref),
        0.0,
        2.0 * weights.lambda2 * (U[4] - D_ref),
    ])


def terminal_costate(U_T, target, weights) -> CostateVec:
    """Gradient of the terminal cost: [0, 0, 2*l1*(I - I_d), 0, 2*l2*(D - D_d)]."""
    U = np.asarray(U_T, dtype=float)
    g = _loss_gradient(U, target.I_d, target.D_d, weights)
    if not np.all(np.isfinite(g)):
        raise DomainError("non-finite terminal gradient")
    return CostateVec(*g)


def jump_update(V_right, U_ti, obs, weights) -> CostateVec:
    """V(t_i^-) = V(t_i^+) + grad_U L(U(t_i)); ``obs`` is an (I_c, D_c) pair."""
    I_c, D_c = obs
    V = _costate(V_right) + _loss_gradient(np.asarray(U_ti, dtype=float), I_c, D_c, weights)
    if not np.all(np.isfinite(V)):
        raise DomainError("non-finite costate after jump")
    return CostateVec(*V)


def solve_backward(U: StateTrajectory, theta, problem) -> CostateTrajectory:
    """Terminal seed, backward sweep per interval, jump at each interior t_i.

    ``problem`` supplies ``target``, ``running_data()`` (the (I_c, D_c)
    pairs at t_1..t_{n-1}), ``running_weights()`` (one LossWeights per
    interior time) and ``terminal_weights()``.
    """
    grid = U.grid
    th = as_theta_grid(theta, grid)
    n, m = grid.n_intervals, grid.substeps
    hs = grid.step_sizes()
    data = problem.running_data()
    if len(data) != n - 1:
        raise DomainError(f"expected {n - 1} interior observations, got {len(data)}")
    ws = problem.running_weights()
    X = U.values
    out = np.empty((n, m + 1, 5))
    cur = tuple(terminal_costate(X[-1, -1], problem.target, problem.terminal_weights()))
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            I_c, D_c = data[i]
            w = ws[i]
            Ui = X[i, m]
            cur = (cur[0], cur[1], cur[2] + 2.0 * w.lambda1 * (Ui[2] - I_c),
                   cur[3], cur[4] + 2.0 * w.lambda2 * (Ui[4] - D_c))
        h = float(hs[i])
        states = X[i].tolist()
        rows = th[i].tolist()
        block = out[i]
        block[m] = cur
        for k in range(m - 1, -1, -1):
            S, E, I, R, _ = states[k]
            cur = _back(*cur, S, E, I, R, *rows[k], h)
            block[k] = cur
    return CostateTrajectory(grid, out)
