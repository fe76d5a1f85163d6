"""Two-patch SIT model: parameters, state layout, vector field and closed-form scalars.

State coordinates are always ordered ``(E1, F1, M1, M1s, E2, F2, M2, M2s)``.
Patch 1 is the treated patch; releases enter through ``M1s`` only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import NamedTuple, Sequence

import numpy as np

STATE_NAMES = ("E1", "F1", "M1", "M1s", "E2", "F2", "M2", "M2s")
WILD_INDEX = (0, 1, 2, 4, 5, 6)
STERILE_INDEX = (3, 7)


class ParameterError(ValueError):
    """A model parameter violates its admissible range."""

    def __init__(self, name: str, rule: str, value):
        self.name = name
        self.rule = rule
        self.value = value
        super().__init__(f"{name}={value!r} violates {rule}")


class DomainError(ValueError):
    """A function was evaluated outside its domain."""


@dataclass(frozen=True)
class ModelParams:
    """Biological and dispersal constants, in days and raw individual counts.

    Defaults are the Aedes albopictus values; the diffusion rates default to
    the asymmetric pair ``d12=0.06, d21=0.04`` used for most trajectory runs.
    """

    b: float = 10.0
    nu_E: float = 0.08
    mu_E: float = 0.05
    mu_F: float = 0.1
    mu_M: float = 0.14
    mu_s: float = 0.14
    K1: float = 200.0
    K2: float = 180.0
    gamma: float = 1.0
    r: float = 0.5
    alpha: float = 0.5
    beta: float = 0.8
    d12: float = 0.06
    d21: float = 0.04

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f.name, "finite real number", v)
        # b = 0 is admitted so that degenerate offspring numbers can be explored
        if self.b < 0:
            raise ParameterError("b", "b >= 0", self.b)
        for name in ("nu_E", "mu_E", "mu_F", "mu_M", "mu_s", "K1", "K2", "d12", "d21"):
            if getattr(self, name) <= 0:
                raise ParameterError(name, f"{name} > 0", getattr(self, name))
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterError("gamma", "0 <= gamma <= 1", self.gamma)
        if not 0.0 < self.r < 1.0:
            raise ParameterError("r", "0 < r < 1", self.r)
        if self.alpha <= 0:
            raise ParameterError("alpha", "alpha > 0", self.alpha)
        if self.beta <= 0:
            raise ParameterError("beta", "beta > 0", self.beta)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(sorted(unknown)[0], "known parameter name", data[sorted(unknown)[0]])
        return cls(**{k: float(v) if isinstance(v, int) and not isinstance(v, bool) else v
                      for k, v in data.items()})


class SystemState(NamedTuple):
    E1: float
    F1: float
    M1: float
    M1s: float
    E2: float
    F2: float
    M2: float
    M2s: float

    @classmethod
    def from_wild(cls, wild: Sequence[float], sterile: Sequence[float] = (0.0, 0.0)) -> "SystemState":
        e1, f1, m1, e2, f2, m2 = wild
        return cls(e1, f1, m1, sterile[0], e2, f2, m2, sterile[1])

    def wild(self) -> np.ndarray:
        return np.asarray(self, dtype=float)[list(WILD_INDEX)]


def basic_offspring_number(params: ModelParams) -> float:
    """Mean number of viable offspring per female, ``b r nu_E / (mu_F (mu_E + nu_E))``."""
    p = params
    return p.b * p.r * p.nu_E / (p.mu_F * (p.mu_E + p.nu_E))


def mating_fraction(m: float, ms: float, gamma: float, at_zero: float = 0.0) -> float:
    """Share of emerging females fertilised by wild males.

    ``at_zero`` is returned when there are no males at all; 0 keeps the
    origin an equilibrium.
    """
    denom = m + gamma * ms
    if denom == 0.0:
        return at_zero
    return m / denom


def _field(y, rate: float, p: ModelParams, at_zero: float = 0.0) -> np.ndarray:
    # unchecked right-hand side; solver stages may pass tiny negative values
    E1, F1, M1, S1, E2, F2, M2, S2 = y.tolist() if isinstance(y, np.ndarray) else y
    g = p.gamma
    d1 = M1 + g * S1
    d2 = M2 + g * S2
    q1 = M1 / d1 if d1 != 0.0 else at_zero
    q2 = M2 / d2 if d2 != 0.0 else at_zero
    loss_E = p.nu_E + p.mu_E
    female_birth = p.r * p.nu_E
    male_birth = (1.0 - p.r) * p.nu_E
    d12, d21 = p.d12, p.d21
    bd12, bd21 = p.beta * d12, p.beta * d21
    ad12, ad21 = p.alpha * d12, p.alpha * d21
    return np.array((
        p.b * F1 * (1.0 - E1 / p.K1) - loss_E * E1,
        female_birth * E1 * q1 - (p.mu_F + d12) * F1 + d21 * F2,
        male_birth * E1 - (p.mu_M + bd12) * M1 + bd21 * M2,
        rate - (p.mu_s + ad12) * S1 + ad21 * S2,
        p.b * F2 * (1.0 - E2 / p.K2) - loss_E * E2,
        female_birth * E2 * q2 - (p.mu_F + d21) * F2 + d12 * F1,
        male_birth * E2 - (p.mu_M + bd21) * M2 + bd12 * M1,
        -(p.mu_s + ad21) * S2 + ad12 * S1,
    ))


def vector_field(state, release_rate: float, params: ModelParams) -> np.ndarray:
    """Time derivative of the 8-state system under a continuous release rate.

    Impulsive releases are not part of the field; the integrator applies them
    as jumps.
    """
    y = np.asarray(state, dtype=float)
    if y.shape != (8,):
        raise DomainError(f"state must have 8 components, got shape {y.shape}")
    if np.any(y < 0):
        bad = [STATE_NAMES[i] for i in np.flatnonzero(y < 0)]
        raise DomainError(f"negative state components: {', '.join(bad)}")
    if release_rate < 0:
        raise DomainError(f"release rate must be non-negative, got {release_rate}")
    return _field(y, float(release_rate), params)


def order_leq(u, v) -> bool:
    """``u`` precedes ``v``: no larger on E, F, M and no smaller on sterile males."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    wild = list(WILD_INDEX)
    sterile = list(STERILE_INDEX)
    return bool(np.all(u[wild] <= v[wild]) and np.all(u[sterile] >= v[sterile]))


def cone_flip(u) -> np.ndarray:
    """Map to coordinates in which the order above is the plain componentwise one."""
    w = np.array(u, dtype=float)
    w[list(STERILE_INDEX)] *= -1.0
    return w


class UniformBounds(NamedTuple):
    C_F: float
    C_M: float
    C_Ms: float


def uniform_bounds(params: ModelParams, window_T: float | None, avg_rate_C: float) -> UniformBounds:
    """Asymptotic caps on total females, wild males and sterile males.

    ``window_T`` is the averaging window of the release function and
    ``avg_rate_C`` the supremum of its windowed average. Passing
    ``window_T=None`` (or 0) gives the bounded-rate limit ``C / mu_s``.
    """
    if avg_rate_C < 0:
        raise ValueError("avg_rate_C must be non-negative")
    p = params
    K = p.K1 + p.K2
    C_F = p.r * p.nu_E * K / p.mu_F
    C_M = (1.0 - p.r) * p.nu_E * K / p.mu_M
    if not window_T:
        C_Ms = avg_rate_C / p.mu_s
    else:
        if window_T < 0:
            raise ValueError("window_T must be positive")
        TC = window_T * avg_rate_C
        C_Ms = TC / (-math.expm1(-p.mu_s * window_T)) + TC
    return UniformBounds(C_F, C_M, C_Ms)


def sterile_drift_matrix(params: ModelParams) -> np.ndarray:
    """Linear drift of ``(M1s, M2s)`` between releases."""
    p = params
    a12, a21 = p.alpha * p.d12, p.alpha * p.d21
    return np.array([[-a12 - p.mu_s, a21], [a12, -a21 - p.mu_s]])


def male_drift_matrix(params: ModelParams) -> np.ndarray:
    p = params
    b12, b21 = p.beta * p.d12, p.beta * p.d21
    return np.array([[-p.mu_M - b12, b21], [b12, -p.mu_M - b21]])
