"""Reduced models: the large-diffusion limit and the single homogeneous patch.

Limit state: ``(E1, E2, F, M, Ms)`` where ``F, M, Ms`` are patch totals and
the adult split between patches is fixed by ``eta = d21 / d12``.
Homogeneous state: ``(E, F, M, Ms)`` with carrying capacity ``K1 + K2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .equilibria import STABILITY_MARGIN, stability_of
from .integrate import IntegrationOptions, Trajectory, integrate_system
from .model import ModelParams, basic_offspring_number
from .release import ReleaseSchedule
from .solvers import damped_newton, fd_jacobian

LIMIT_NAMES = ("E1", "E2", "F", "M", "Ms")
HOMOGENEOUS_NAMES = ("E", "F", "M", "Ms")


def _frac(m, ms, gamma, at_zero=0.0):
    d = m + gamma * ms
    return m / d if d != 0.0 else at_zero


def _limit(y, p: ModelParams, eta: float, rate: float, at_zero: float = 0.0) -> np.ndarray:
    E1, E2, F, M, Ms = y.tolist() if isinstance(y, np.ndarray) else y
    loss = p.nu_E + p.mu_E
    E = E1 + E2
    return np.array((
        eta / (eta + 1.0) * p.b * F * (1.0 - E1 / p.K1) - loss * E1,
        1.0 / (eta + 1.0) * p.b * F * (1.0 - E2 / p.K2) - loss * E2,
        p.r * p.nu_E * E * _frac(M, Ms, p.gamma, at_zero) - p.mu_F * F,
        (1.0 - p.r) * p.nu_E * E - p.mu_M * M,
        rate - p.mu_s * Ms,
    ))


def limit_system_field(state: Sequence[float], params: ModelParams, eta: float, rate: float) -> np.ndarray:
    if eta <= 0:
        raise ValueError("eta must be positive")
    y = np.asarray(state, dtype=float)
    if y.shape != (5,):
        raise ValueError("limit state has 5 components (E1, E2, F, M, Ms)")
    return _limit(y, params, eta, float(rate))


def _homogeneous(y, p: ModelParams, rate: float, at_zero: float = 0.0) -> np.ndarray:
    E, F, M, Ms = y.tolist() if isinstance(y, np.ndarray) else y
    K = p.K1 + p.K2
    return np.array((
        p.b * F * (1.0 - E / K) - (p.nu_E + p.mu_E) * E,
        p.r * p.nu_E * E * _frac(M, Ms, p.gamma, at_zero) - p.mu_F * F,
        (1.0 - p.r) * p.nu_E * E - p.mu_M * M,
        rate - p.mu_s * Ms,
    ))


def homogeneous_field(state: Sequence[float], params: ModelParams, rate: float) -> np.ndarray:
    y = np.asarray(state, dtype=float)
    if y.shape != (4,):
        raise ValueError("homogeneous state has 4 components (E, F, M, Ms)")
    return _homogeneous(y, params, float(rate))


@dataclass
class ReducedEquilibrium:
    state: np.ndarray
    rate: float
    stability: str
    eigenvalues: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def positive(self) -> bool:
        return bool(np.all(self.state[:-1] > 0))


def homogeneous_equilibria(params: ModelParams, rate: float) -> list[ReducedEquilibrium]:
    """Closed-form equilibria of the homogeneous model, extinction state first."""
    p = params
    K = p.K1 + p.K2
    N = basic_offspring_number(p)
    Ms = rate / p.mu_s
    out = [np.array([0.0, 0.0, 0.0, Ms])]
    # positive E solves (N/K) E^2 - (N - 1) E + c = 0
    c = p.mu_M * p.gamma * rate / ((1.0 - p.r) * p.nu_E * p.mu_s)
    disc = (N - 1.0) ** 2 - 4.0 * N * c / K
    if N > 1 and disc >= 0:
        sq = math.sqrt(disc)
        hi = (N - 1.0 + sq) * K / (2.0 * N)
        lo = 2.0 * c / (N - 1.0 + sq)  # other root via the product of roots
        roots = [lo, hi] if c > 0 else [hi]
        for E in roots:
            M = (1.0 - p.r) * p.nu_E * E / p.mu_M
            q = _frac(M, Ms, p.gamma)
            F = p.r * p.nu_E * E * q / p.mu_F
            out.append(np.array([E, F, M, Ms]))
    eqs = []
    for y in out:
        J = fd_jacobian(lambda z: _homogeneous(z, p, rate, at_zero=1.0), y)
        eig = np.linalg.eigvals(J)
        eqs.append(ReducedEquilibrium(y, rate, stability_of(eig), eig,
                                      float(np.linalg.norm(_homogeneous(y, p, rate)))))
    return eqs


def homogeneous_positive_state(params: ModelParams) -> np.ndarray:
    """Uncontrolled positive equilibrium of the homogeneous model."""
    eqs = [e for e in homogeneous_equilibria(params, 0.0) if e.positive]
    if not eqs:
        raise ValueError("offspring number <= 1: no positive equilibrium")
    return eqs[-1].state


def limit_wild_residual(params: ModelParams, eta: float, rate: float):
    Ms = rate / params.mu_s

    def F(w):
        return _limit(np.append(w, Ms), params, eta, rate)[:4]

    return F


def limit_default_seed(params: ModelParams, eta: float) -> np.ndarray:
    """Uncontrolled homogeneous equilibrium split by carrying capacity."""
    E, F, M, _ = homogeneous_positive_state(params)
    w1 = params.K1 / (params.K1 + params.K2)
    return np.array([w1 * E, (1.0 - w1) * E, F, M])


def limit_equilibria(
    params: ModelParams, eta: float, rate: float, seeds: Sequence[Sequence[float]] | None = None
) -> list[ReducedEquilibrium]:
    """Distinct equilibria of the limit system reached from ``seeds`` (4-vectors ``E1, E2, F, M``)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if seeds is None:
        base = limit_default_seed(params, eta)
        seeds = [s * base for s in (1.0, 0.5, 0.25, 0.1, 0.05, 0.01, 1e-3)]
    F = limit_wild_residual(params, eta, rate)
    Ms = rate / params.mu_s
    found: list[ReducedEquilibrium] = []
    for seed in seeds:
        res = damped_newton(F, seed)
        if not res.converged:
            continue
        w = res.x
        scale = max(1.0, float(np.max(np.abs(w))))
        if np.any(w < -1e-9 * scale):
            continue
        w = np.where(w < 1e-9 * scale, 0.0, w)
        y = np.append(w, Ms)
        if any(np.linalg.norm(e.state - y) <= 1e-6 * max(1.0, float(np.linalg.norm(y))) for e in found):
            continue
        J = fd_jacobian(lambda z: _limit(z, params, eta, rate, at_zero=1.0), y)
        eig = np.linalg.eigvals(J)
        found.append(ReducedEquilibrium(y, rate, stability_of(eig, STABILITY_MARGIN), eig,
                                        float(np.linalg.norm(_limit(y, params, eta, rate)))))
    found.sort(key=lambda e: float(np.sum(e.state[:2])))
    return found


def limit_critical_lambda(
    params: ModelParams, eta: float, lambda_start: float = 0.1, lambda_end: float | None = None,
    step0: float = 5.0, step_min: float = 1e-3,
) -> float | None:
    """Fold of the positive equilibrium branch of the limit system, by natural continuation."""
    from .continuation import natural_continuation

    if lambda_end is None:
        lambda_end = 10.0 * homogeneous_critical_lambda_bound(params)
    start = [e for e in limit_equilibria(params, eta, lambda_start) if e.positive]
    if not start:
        return None
    x0 = start[-1].state[:4]

    def solve(lam, guess):
        res = damped_newton(limit_wild_residual(params, eta, lam), guess)
        if res.converged and np.all(res.x > 0):
            return res.x
        return None

    _, fold = natural_continuation(solve, x0, lambda_start, lambda_end, step0, step_min)
    return fold


def homogeneous_critical_lambda_bound(params: ModelParams) -> float:
    from .equilibria import homogeneous_critical_lambda

    return max(homogeneous_critical_lambda(params), 1.0)


def integrate_limit(
    params: ModelParams, eta: float, schedule: ReleaseSchedule, initial: Sequence[float],
    options: IntegrationOptions | None = None,
) -> Trajectory:
    return integrate_system(
        lambda y, rate: _limit(y, params, eta, rate), initial, schedule, options or IntegrationOptions(),
        impulse_index=4, columns=LIMIT_NAMES, wild_index=(0, 1, 2, 3),
    )


def integrate_homogeneous(
    params: ModelParams, schedule: ReleaseSchedule, initial: Sequence[float],
    options: IntegrationOptions | None = None,
) -> Trajectory:
    return integrate_system(
        lambda y, rate: _homogeneous(y, params, rate), initial, schedule, options or IntegrationOptions(),
        impulse_index=3, columns=HOMOGENEOUS_NAMES, wild_index=(0, 1, 2),
    )
