"""Equilibria, sterile steady states and periodic orbits, and analytic thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import (
    STATE_NAMES,
    WILD_INDEX,
    DomainError,
    ModelParams,
    SystemState,
    _field,
    basic_offspring_number,
    male_drift_matrix,
    sterile_drift_matrix,
    uniform_bounds,
)
from .solvers import ConvergenceError, bisect, damped_newton, fd_jacobian, golden_min

STABILITY_MARGIN = 1e-9


# ---------------------------------------------------------------------------
# equilibrium curves of the uncontrolled system


def _curve_coeffs(params: ModelParams, direction: tuple[int, int]):
    p = params
    if tuple(direction) == (2, 1):
        d_ij, d_ji, K = p.d21, p.d12, p.K1
    elif tuple(direction) == (1, 2):
        d_ij, d_ji, K = p.d12, p.d21, p.K2
    else:
        raise ValueError(f"direction must be (1, 2) or (2, 1), got {direction!r}")
    return (p.mu_F + d_ij + d_ji) / d_ij, (p.mu_F + d_ij) / d_ij, K


def f_curve(x: float, params: ModelParams, direction: tuple[int, int], n_eff: float) -> float:
    """Equilibrium relation between the aquatic densities of the two patches.

    ``direction=(2, 1)`` maps ``E1`` to ``E2`` and ``(1, 2)`` maps ``E2`` to
    ``E1``. ``n_eff`` is the effective offspring number: the basic offspring
    number for the uncontrolled system, 1 for the saturated-release
    comparison system.
    """
    if n_eff <= 0:
        raise ValueError("n_eff must be positive")
    a, c, K = _curve_coeffs(params, direction)
    if not 0 <= x < K:
        raise DomainError(f"x={x} outside [0, {K})")
    return a / n_eff * x / (1.0 - x / K) - c * x


def f_curve_root(params: ModelParams, direction: tuple[int, int], n_eff: float) -> float | None:
    """Positive root of :func:`f_curve`, or ``None`` when the curve stays non-negative."""
    a, c, K = _curve_coeffs(params, direction)
    if n_eff <= a / c:
        return None
    return K * (1.0 - a / (c * n_eff))


def f_curve_inverse(y: float, params: ModelParams, direction: tuple[int, int], n_eff: float) -> float:
    """Inverse of :func:`f_curve` on its increasing branch, for ``y >= 0``."""
    if y < 0:
        raise DomainError("inverse is defined for y >= 0")
    _, _, K = _curve_coeffs(params, direction)
    lo = f_curve_root(params, direction, n_eff) or 0.0
    if y == 0:
        return lo
    hi = lo + 0.5 * (K - lo)
    while f_curve(hi, params, direction, n_eff) < y:
        nxt = hi + 0.5 * (K - hi)
        if nxt == hi:
            break
        lo, hi = hi, nxt
    return bisect(lambda x: f_curve(x, params, direction, n_eff) - y, lo, hi)


@dataclass(frozen=True)
class WildEquilibrium:
    E1p: float
    F1p: float
    M1p: float
    E2p: float
    F2p: float
    M2p: float

    def as_array(self) -> np.ndarray:
        return np.array([self.E1p, self.F1p, self.M1p, self.E2p, self.F2p, self.M2p])

    def state(self, sterile: Sequence[float] = (0.0, 0.0)) -> SystemState:
        return SystemState.from_wild(self.as_array(), sterile)


def females_from_aquatic(params: ModelParams, E: Sequence[float]) -> np.ndarray:
    """Female densities balancing given aquatic densities in the uncontrolled system."""
    p = params
    s = p.mu_F + p.d12 + p.d21
    mat = np.array([[p.mu_F + p.d21, p.d21], [p.d12, p.mu_F + p.d12]])
    return p.r * p.nu_E / (p.mu_F * s) * (mat @ np.asarray(E, dtype=float))


def males_from_aquatic(params: ModelParams, E: Sequence[float]) -> np.ndarray:
    A = male_drift_matrix(params)
    return -(1.0 - params.r) * params.nu_E * np.linalg.solve(A, np.asarray(E, dtype=float))


def wild_positive_equilibrium(params: ModelParams) -> WildEquilibrium | None:
    """Strictly positive equilibrium without releases, ``None`` when the offspring number is <= 1."""
    N = basic_offspring_number(params)
    if N <= 1:
        return None
    K1 = params.K1

    def gap(x):
        return f_curve(x, params, (2, 1), N) - f_curve_inverse(x, params, (1, 2), N)

    # gap(0) <= 0, gap -> +inf at K1; skip the trivial root at 0 with a geometric scan
    lo = None
    x = K1 * 0.5
    xs = []
    while x > K1 * 1e-12:
        xs.append(x)
        x *= 0.5
    for x in reversed(xs):
        if gap(x) < 0:
            lo = x
        elif lo is not None:
            break
    if lo is None:
        raise ConvergenceError("could not bracket the positive equilibrium")
    hi = lo
    while gap(hi) <= 0:
        hi = hi + 0.5 * (K1 - hi)
        if K1 - hi < K1 * 1e-15:
            raise ConvergenceError("could not bracket the positive equilibrium")
    E1 = bisect(gap, lo, hi)
    E2 = f_curve_inverse(E1, params, (1, 2), N)
    E = np.array([E1, E2])
    F = females_from_aquatic(params, E)
    M = males_from_aquatic(params, E)
    return WildEquilibrium(float(E1), float(F[0]), float(M[0]), float(E2), float(F[1]), float(M[1]))


# ---------------------------------------------------------------------------
# sterile males alone


@dataclass(frozen=True)
class SterileSteady:
    M1s_star: float
    M2s_star: float
    tau1: float
    tau2: float


def sterile_conversion_constants(params: ModelParams) -> tuple[float, float]:
    p = params
    den = p.mu_s * (p.mu_s + p.alpha * p.d12 + p.alpha * p.d21)
    return (p.mu_s + p.alpha * p.d21) / den, p.alpha * p.d12 / den


def sterile_constant_steady(params: ModelParams, rate: float) -> SterileSteady:
    if rate < 0:
        raise ValueError("release rate must be non-negative")
    t1, t2 = sterile_conversion_constants(params)
    return SterileSteady(t1 * rate, t2 * rate, t1, t2)


def mat_exp_2x2(A, t: float = 1.0) -> np.ndarray:
    """Exact ``exp(A t)`` for a real 2x2 matrix.

    Written as ``exp(m) [cosh(s) I + sinh(s)/s (B - m I)]`` with ``m`` the
    mean eigenvalue and ``s`` the half-gap, using cancellation-free forms for
    the diagonal when the spectrum is real.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    A = np.asarray(A, dtype=float)
    a, b = A[0, 0] * t, A[0, 1] * t
    c, d = A[1, 0] * t, A[1, 1] * t
    m = 0.5 * (a + d)
    h = 0.5 * (a - d)
    # discriminant in units of the largest entry, so tiny t does not underflow
    scale = max(abs(a), abs(b), abs(c), abs(d), 1e-300)
    hn, bn, cn = h / scale, b / scale, c / scale
    disc_n = hn * hn + bn * cn
    if abs(disc_n) <= 1e-18:
        # near-degenerate spectrum: series for cosh(s) and sinh(s)/s in s^2
        disc = disc_n * scale * scale
        em = math.exp(m)
        ch = 1.0 + disc / 2.0 + disc * disc / 24.0
        sh = 1.0 + disc / 6.0 + disc * disc / 120.0
        return em * np.array([[ch + sh * h, sh * b], [sh * c, ch - sh * h]])
    if disc_n > 0:
        sn_ = math.sqrt(disc_n)
        s = scale * sn_
        l1, l2 = m + s, m - s
        e1, e2 = math.exp(l1), math.exp(l2)
        # (e1 - e2) / (l1 - l2) without cancellation
        q = math.exp(m) * math.sinh(s) / s if s < 1.0 else (e1 - e2) / (2.0 * s)
        # a - l2 = h + s and a - l1 = h - s; the smaller one comes from their product -b c
        if hn >= 0:
            hp_n = hn + sn_
            hm_n = -bn * cn / hp_n
        else:
            hm_n = hn - sn_
            hp_n = -bn * cn / hm_n
        # e11 = [(a - l2) e1 - (a - l1) e2] / (2 s), e22 similar with d
        e11 = (hp_n * e1 - hm_n * e2) / (2.0 * sn_)
        e22 = (-hm_n * e1 + hp_n * e2) / (2.0 * sn_)
        return np.array([[e11, b * q], [c * q, e22]])
    w = scale * math.sqrt(-disc_n)
    em = math.exp(m)
    cs, sn = math.cos(w), math.sin(w) / w
    return em * np.array([[cs + sn * h, sn * b], [sn * c, cs - sn * h]])


@dataclass(frozen=True)
class PeriodicSterileOrbit:
    """Limit cycle of ``(M1s, M2s)`` under impulses of ``tau * rate`` every ``tau`` days."""

    rate: float
    tau: float
    post_impulse: np.ndarray
    floor_constants: tuple[float, float]
    drift: np.ndarray = field(repr=False)

    def at(self, t) -> np.ndarray:
        """Orbit value at time ``t``; at multiples of ``tau`` the post-impulse value."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phase = np.mod(t, self.tau)
        out = np.array([mat_exp_2x2(self.drift, s) @ self.post_impulse for s in phase])
        return out[0] if out.shape[0] == 1 else out

    def pre_impulse(self) -> np.ndarray:
        return mat_exp_2x2(self.drift, self.tau) @ self.post_impulse

    def time_average(self) -> np.ndarray:
        E = mat_exp_2x2(self.drift, self.tau)
        return np.linalg.solve(self.drift, (E - np.eye(2)) @ self.post_impulse) / self.tau

    def floors(self) -> np.ndarray:
        return self.rate * np.asarray(self.floor_constants)


def _orbit_start(drift: np.ndarray, tau: float, mass: float) -> np.ndarray:
    E = mat_exp_2x2(drift, tau)
    return np.linalg.solve(np.eye(2) - E, np.array([mass, 0.0]))


def sterile_periodic_orbit(params: ModelParams, rate: float, tau: float, grid: int = 1001) -> PeriodicSterileOrbit:
    if rate < 0 or tau <= 0:
        raise ValueError("need rate >= 0 and tau > 0")
    A = sterile_drift_matrix(params)
    unit = _orbit_start(A, tau, tau)
    ts = np.linspace(0.0, tau, max(grid, 1001))
    vals = np.array([mat_exp_2x2(A, s) @ unit for s in ts])
    floors = []
    for comp in range(2):
        i = int(np.argmin(vals[:, comp]))
        a, b = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
        _, fmin = golden_min(lambda s: float((mat_exp_2x2(A, s) @ unit)[comp]), a, b)
        floors.append(min(fmin, float(vals[i, comp])))
    return PeriodicSterileOrbit(rate, tau, rate * unit, (floors[0], floors[1]), A)


# ---------------------------------------------------------------------------
# equilibria of the full system under constant release


def full_state(wild: Sequence[float], sterile: Sequence[float]) -> np.ndarray:
    w = np.asarray(wild, dtype=float)
    return np.array([w[0], w[1], w[2], sterile[0], w[3], w[4], w[5], sterile[1]])


def wild_residual(params: ModelParams, rate: float):
    """Stationary residual in the six wild coordinates, sterile males at their steady state."""
    ss = sterile_constant_steady(params, rate)
    sterile = (ss.M1s_star, ss.M2s_star)
    idx = list(WILD_INDEX)

    def F(w):
        return _field(full_state(w, sterile), rate, params)[idx]

    return F


def jacobian(params: ModelParams, state: Sequence[float], rate: float) -> np.ndarray:
    """Central-difference Jacobian of the 8-state field.

    The mating fraction with no males present is taken as its limit along
    the sterile-free face (1) so that the zero equilibrium without releases
    is linearised like the uncontrolled system.
    """
    return fd_jacobian(lambda y: _field(y, rate, params, at_zero=1.0), np.asarray(state, dtype=float))


def stability_of(eigenvalues: np.ndarray, margin: float = STABILITY_MARGIN) -> str:
    top = float(np.max(eigenvalues.real))
    if top < -margin:
        return "stable"
    if top > margin:
        return "unstable"
    return "undetermined"


@dataclass
class ControlledEquilibrium:
    state: np.ndarray
    rate: float
    stability: str
    eigenvalues: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def wild(self) -> np.ndarray:
        return self.state[list(WILD_INDEX)]

    @property
    def positive(self) -> bool:
        return bool(np.all(self.wild > 0))

    def to_dict(self) -> dict:
        return {
            "state": dict(zip(STATE_NAMES, map(float, self.state))),
            "positive": self.positive,
            "stability": self.stability,
            "max_real_eigenvalue": float(np.max(self.eigenvalues.real)),
            "residual_norm": self.residual,
        }


@dataclass
class SeedFailure:
    seed: np.ndarray
    reason: str
    last_iterate: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"seed": [float(v) for v in self.seed], "reason": self.reason}


@dataclass
class EquilibriumSet:
    """Distinct equilibria found from a list of seeds, plus the seeds that failed."""

    rate: float
    roots: list[ControlledEquilibrium]
    failures: list[SeedFailure]

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)

    def __getitem__(self, i):
        return self.roots[i]

    @property
    def positive(self) -> list[ControlledEquilibrium]:
        return [r for r in self.roots if r.positive]

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "roots": [r.to_dict() for r in self.roots],
            "failures": [f.to_dict() for f in self.failures],
        }


def default_seeds(params: ModelParams, rate: float = 0.0) -> list[np.ndarray]:
    """Scaled copies of the uncontrolled equilibrium, from near zero up to it.

    For small positive ``rate`` the lower positive equilibrium shrinks in
    proportion to the rate, so extra seeds are placed around the small root
    of the single-patch quadratic.
    """
    eq = wild_positive_equilibrium(params)
    if eq is None:
        base = np.array([params.K1, params.K1, params.K1, params.K2, params.K2, params.K2]) * 0.5
    else:
        base = eq.as_array()
    scales = [1.0, 0.75, 0.5, 0.35, 0.25, 0.15, 0.1, 0.05, 0.02, 0.01, 1e-3]
    N = basic_offspring_number(params)
    if rate > 0 and N > 1:
        p = params
        c = p.mu_M * p.gamma * rate / ((1.0 - p.r) * p.nu_E * p.mu_s)
        K = p.K1 + p.K2
        # small root of (N/K) E^2 - (N-1) E + c relative to the large one
        small = c / (N - 1.0) / ((N - 1.0) * K / N)
        if small < scales[-1]:
            scales += [small * f for f in (2.0, 0.5)]
    # the wild-free state is always an equilibrium
    return [s * base for s in scales] + [np.zeros(6)]


def refine_equilibrium(params: ModelParams, rate: float, seed: Sequence[float]):
    """One Newton solve of the wild stationary system.

    Returns a :class:`ControlledEquilibrium` or a :class:`SeedFailure`.
    """
    F = wild_residual(params, rate)
    seed = np.asarray(seed, dtype=float)
    res = damped_newton(F, seed)
    if not res.converged:
        return SeedFailure(seed, f"Newton did not converge ({res.message})", res.x)
    w = res.x
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.any(w < -1e-9 * scale):
        return SeedFailure(seed, "converged to a root with negative components", w)
    w = np.where(w < 1e-9 * scale, 0.0, w)
    ss = sterile_constant_steady(params, rate)
    y = full_state(w, (ss.M1s_star, ss.M2s_star))
    r_norm = float(np.linalg.norm(_field(y, rate, params)))
    if r_norm > 1e-10 * max(1.0, float(np.linalg.norm(y))):
        return SeedFailure(seed, f"residual {r_norm:.3e} above tolerance", w)
    eig = np.linalg.eigvals(jacobian(params, y, rate))
    return ControlledEquilibrium(y, rate, stability_of(eig), eig, r_norm)


def controlled_equilibria(
    params: ModelParams, rate: float, seeds: Iterable[Sequence[float]] | None = None
) -> EquilibriumSet:
    """All distinct equilibria reachable by damped Newton from ``seeds`` (wild 6-vectors)."""
    if rate < 0:
        raise ValueError("release rate must be non-negative")
    seeds = default_seeds(params, rate) if seeds is None else [np.asarray(_as_wild(s), dtype=float) for s in seeds]
    roots: list[ControlledEquilibrium] = []
    failures: list[SeedFailure] = []
    for seed in seeds:
        out = refine_equilibrium(params, rate, seed)
        if isinstance(out, SeedFailure):
            failures.append(out)
            continue
        dup = False
        for r in roots:
            if np.linalg.norm(r.state - out.state) <= 1e-6 * max(1.0, float(np.linalg.norm(r.state))):
                dup = True
                break
        if not dup:
            roots.append(out)
    roots.sort(key=lambda r: float(np.sum(r.wild)))
    return EquilibriumSet(rate, roots, failures)


def _as_wild(s):
    if isinstance(s, WildEquilibrium):
        return s.as_array()
    s = np.asarray(s, dtype=float)
    if s.shape == (8,):
        return s[list(WILD_INDEX)]
    return s


# ---------------------------------------------------------------------------
# thresholds


def lambda_upper_bound_constant(params: ModelParams) -> float:
    """Release rate above which elimination is guaranteed for constant releases."""
    N = _check_bound_params(params)
    C_M = uniform_bounds(params, None, 0.0).C_M
    return max((N - 1.0) * C_M / (params.gamma * t) for t in sterile_conversion_constants(params))


def lambda_upper_bound_periodic(params: ModelParams, tau: float) -> float:
    N = _check_bound_params(params)
    C_M = uniform_bounds(params, None, 0.0).C_M
    floors = sterile_periodic_orbit(params, 1.0, tau).floor_constants
    return max((N - 1.0) * C_M / (params.gamma * t) for t in floors)


def _check_bound_params(params: ModelParams) -> float:
    N = basic_offspring_number(params)
    if N <= 1:
        raise ValueError(f"offspring number {N:.6g} <= 1: the population dies out without releases")
    if params.gamma <= 0:
        raise ValueError("gamma = 0: sterile males have no effect, no finite bound")
    return N


def homogeneous_critical_lambda(params: ModelParams) -> float:
    """Closed-form critical rate of the single-patch model with ``K = K1 + K2``."""
    N = _check_bound_params(params)
    p = params
    K = p.K1 + p.K2
    return (1.0 - p.r) * p.nu_E * K * p.mu_s * (1.0 - N) ** 2 / (4.0 * N * p.mu_M * p.gamma)
