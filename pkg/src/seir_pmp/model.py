"""SEIR(D) dynamics: right-hand side, Jacobians, Hamiltonian and threshold numbers.

State ordering is U = [S, E, I, R, D] and parameter ordering is
theta = [beta, epsilon, gamma, mu]. All rates are per day.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class DomainError(ValueError):
    """Input outside the domain where the model is defined."""


class StateVec(NamedTuple):
    S: float
    E: float
    I: float
    R: float
    D: float


class CostateVec(NamedTuple):
    V_S: float
    V_E: float
    V_I: float
    V_R: float
    V_D: float


class ParamVec(NamedTuple):
    beta: float
    epsilon: float
    gamma: float
    mu: float


class FractionState(NamedTuple):
    s: float
    e: float
    i: float


PARAM_NAMES = ParamVec._fields
STATE_NAMES = StateVec._fields


@dataclass(frozen=True)
class ParamBounds:
    lower: ParamVec
    upper: ParamVec

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (4,) or hi.shape != (4,):
            raise DomainError("bounds need four components")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError("bounds must be finite")
        if np.any(lo < 0) or np.any(lo > hi):
            raise DomainError(f"invalid bounds: lower={tuple(lo)} upper={tuple(hi)}")
        object.__setattr__(self, "lower", ParamVec(*map(float, lo)))
        object.__setattr__(self, "upper", ParamVec(*map(float, hi)))

    def clip(self, theta):
        """Project parameters (any shape ending in 4) onto the box."""
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def contains(self, theta, atol=0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return bool(np.all(theta >= lo - atol) and np.all(theta <= hi + atol))

    def midpoint(self) -> ParamVec:
        return ParamVec(*((np.asarray(self.lower) + np.asarray(self.upper)) / 2))


# 4-5 day incubation, at most 10 days infectious
DEFAULT_BOUNDS = ParamBounds(
    lower=ParamVec(0.0, 0.2, 0.1, 0.0),
    upper=ParamVec(5.0, 0.25, 0.2, 0.01),
)


@dataclass(frozen=True)
class DemographyParams:
    A: float = 0.0
    b: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        for name in ("A", "b", "d"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v}")


NO_DEMOGRAPHY = DemographyParams()


def _state(U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.shape != (5,):
        raise DomainError(f"state must have 5 components, got shape {U.shape}")
    if not np.all(np.isfinite(U)):
        raise DomainError("state has non-finite entries")
    if np.any(U < 0):
        raise DomainError(f"state has negative entries: {tuple(U)}")
    if U[0] + U[1] + U[2] + U[3] <= 0:
        raise DomainError("living population S+E+I+R must be positive")
    return U


def _params(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (4,):
        raise DomainError(f"parameters must have 4 components, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise DomainError(f"parameters must be finite and >= 0, got {tuple(theta)}")
    return theta


def _costate(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.shape != (5,):
        raise DomainError(f"costate must have 5 components, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise DomainError("costate has non-finite entries")
    return V


def living_population(U) -> float:
    S, E, I, R = U[0], U[1], U[2], U[3]
    return S + E + I + R


def seir_rhs(U, theta, demo: DemographyParams = NO_DEMOGRAPHY) -> np.ndarray:
    """Time derivative F(U, theta) of the SEIR(D) system.

    N is the living population S+E+I+R, so with A = b = d = 0 the five
    components sum to zero.
    """
    S, E, I, R, D = _state(U)
    beta, eps, gamma, mu = _params(theta)
    N = S + E + I + R
    infection = beta * S * I / N
    return np.array([
        demo.A - infection - demo.d * S,
        infection - eps * E - demo.d * E,
        eps * E - (mu + gamma + demo.d) * I,
        gamma * I - demo.d * R,
        mu * I,
    ])


def jacobian_state(U, theta, couple_population: bool = True) -> np.ndarray:
    """5x5 matrix dF/dU for the b = d = 0 system.

    With ``couple_population=False`` the -beta*S*I/N^2 entries coming from
    the E and R dependence of N are dropped. That reduced matrix is the one
    the backward sweep discretizes; its E and R columns carry no infection
    terms and its R and D columns vanish.
    """
    S, E, I, R, D = _state(U)
    beta, eps, gamma, mu = _params(theta)
    N = S + E + I + R
    N2 = N * N
    dS = beta * I * (N - S) / N2
    dI = beta * S * (N - I) / N2
    dX = -beta * S * I / N2 if couple_population else 0.0
    J = np.zeros((5, 5))
    J[0, 0] = -dS
    J[0, 1] = -dX
    J[0, 2] = -dI
    J[0, 3] = -dX
    J[1, 0] = dS
    J[1, 1] = dX - eps
    J[1, 2] = dI
    J[1, 3] = dX
    J[2, 1] = eps
    J[2, 2] = -(mu + gamma)
    J[3, 2] = gamma
    J[4, 2] = mu
    return J


def jacobian_params(U) -> np.ndarray:
    """5x4 matrix dF/dtheta; F is linear in theta so this depends on U only."""
    S, E, I, R, D = _state(U)
    N = S + E + I + R
    force = S * I / N
    J = np.zeros((5, 4))
    J[0, 0] = -force
    J[1, 0] = force
    J[1, 1] = -E
    J[2, 1] = E
    J[2, 2] = -I
    J[3, 2] = I
    J[2, 3] = -I
    J[4, 3] = I
    return J


def hamiltonian(U, V, theta) -> float:
    S, E, I, R, D = _state(U)
    V_S, V_E, V_I, V_R, V_D = _costate(V)
    beta, eps, gamma, mu = _params(theta)
    force = beta * S * I / (S + E + I + R)
    return float(
        -V_S * force
        + V_E * (force - eps * E)
        + V_I * (eps * E - (gamma + mu) * I)
        + V_R * gamma * I
        + V_D * mu * I
    )


def hamiltonian_gradient(U, V) -> np.ndarray:
    """dH/dtheta; constant in theta because H is linear in theta."""
    return jacobian_params(U).T @ _costate(V)


def r0(theta) -> float:
    beta, eps, gamma, mu = _params(theta)
    if gamma + mu <= 0:
        raise DomainError("R0 undefined for gamma + mu = 0")
    return beta / (gamma + mu)


def sigma(theta, b: float = 0.0) -> float:
    """Modified contact number beta*eps / ((eps + b)(gamma + mu + b))."""
    beta, eps, gamma, mu = _params(theta)
    if b < 0 or not np.isfinite(b):
        raise DomainError(f"birth rate must be finite and >= 0, got {b}")
    denom = (eps + b) * (gamma + mu + b)
    if denom <= 0:
        raise DomainError("contact number undefined: zero denominator")
    return beta * eps / denom


_SIMPLEX_TOL = 1e-12


def fraction_rhs(x, theta, b: float = 0.0) -> np.ndarray:
    """Derivative of the normalized fractions (s, e, i) with recruitment A = bN."""
    s, e, i = np.asarray(x, dtype=float)
    if not np.all(np.isfinite((s, e, i))):
        raise DomainError("fraction state has non-finite entries")
    if min(s, e, i) < -_SIMPLEX_TOL or s + e + i > 1 + _SIMPLEX_TOL:
        raise DomainError(f"fraction state {(s, e, i)} outside the simplex")
    beta, eps, gamma, mu = _params(theta)
    return np.array([
        b - b * s - beta * i * s + mu * i * s,
        beta * i * s - (eps + b) * e + mu * i * e,
        eps * e - (mu + gamma + b) * i + mu * i * i,
    ])


def _fraction_field(s, e, i, beta, eps, gamma, mu, b):
    return (
        b - b * s - beta * i * s + mu * i * s,
        beta * i * s - (eps + b) * e + mu * i * e,
        eps * e - (mu + gamma + b) * i + mu * i * i,
    )


def simulate_fractions(x0, theta, days: float, b: float = 0.0, dt: float = 0.1):
    """Classical RK4 integration of the fraction system.

    Returns (times, values) with values of shape (steps + 1, 3).
    """
    theta = _params(theta)
    fraction_rhs(x0, theta, b)  # validates x0
    t, out = simulate_fractions_batch(np.asarray(x0, dtype=float)[None, :], theta[None, :],
                                      days, b=b, dt=dt)
    return t, out[:, 0]


def simulate_fractions_batch(x0, theta, days: float, b=0.0, dt: float = 0.1, keep: str = "all"):
    """RK4 for many independent (x0, theta, b) draws at once.

    ``x0`` has shape (k, 3), ``theta`` shape (k, 4) and ``b`` is a scalar or
    shape (k,). Returns (times, values) with values of shape (steps + 1, k, 3),
    or only the final row and running maximum of i when ``keep="summary"``
    (then values is a dict with keys "final" and "max_i").
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if x0.shape[1] != 3 or theta.shape != (x0.shape[0], 4):
        raise DomainError(f"expected x0 (k, 3) and theta (k, 4), got {x0.shape} and {theta.shape}")
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise DomainError("parameters must be finite and >= 0")
    if np.any(x0 < -_SIMPLEX_TOL) or np.any(x0.sum(axis=1) > 1 + _SIMPLEX_TOL):
        raise DomainError("initial fractions outside the simplex")
    b = np.broadcast_to(np.asarray(b, dtype=float), (x0.shape[0],))
    if np.any(b < 0):
        raise DomainError("birth rate must be >= 0")
    if days <= 0 or dt <= 0:
        raise DomainError("days and dt must be positive")
    steps = int(np.ceil(days / dt))
    dt = days / steps
    half = 0.5 * dt
    p = (*theta.T, b)
    s, e, i = x0.T.copy()
    if keep == "all":
        out = np.empty((steps + 1, x0.shape[0], 3))
        out[0] = x0
    elif keep == "summary":
        max_i = i.copy()
    else:
        raise ValueError(f"keep must be 'all' or 'summary', got {keep!r}")
    for k in range(steps):
        k1 = _fraction_field(s, e, i, *p)
        k2 = _fraction_field(s + half * k1[0], e + half * k1[1], i + half * k1[2], *p)
        k3 = _fraction_field(s + half * k2[0], e + half * k2[1], i + half * k2[2], *p)
        k4 = _fraction_field(s + dt * k3[0], e + dt * k3[1], i + dt * k3[2], *p)
        s = s + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        e = e + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        i = i + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if keep == "all":
            out[k + 1, :, 0], out[k + 1, :, 1], out[k + 1, :, 2] = s, e, i
        else:
            np.maximum(max_i, i, out=max_i)
    times = np.linspace(0.0, days, steps + 1)
    if keep == "all":
        return times, out
    return times, {"final": np.stack([s, e, i], axis=1), "max_i": max_i}
