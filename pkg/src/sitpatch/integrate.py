"""Time stepping under release schedules, with impulses applied at exact times.

Steps never straddle an impulse, a schedule breakpoint or an output sample
time. Two steppers are available: a Dormand-Prince 5(4) embedded pair with
step-size control (default) and classical fixed-step RK4.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from ._io import format_float
from .model import STATE_NAMES, STERILE_INDEX, WILD_INDEX, DomainError, ModelParams, SystemState, _field
from .release import PeriodicImpulsive, ReleaseSchedule

NEGATIVE_CLIP_TOL = 1e-12


class IntegrationError(RuntimeError):
    """The stepper could not advance the solution."""


@dataclass(frozen=True)
class IntegrationOptions:
    method: str = "dopri5"
    dt_max: float = 1.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    t_end: float = 2000.0
    sample_every: float = 1.0
    clip_negative: bool = True
    dt_min: float = 1e-10

    def __post_init__(self):
        if self.method not in ("dopri5", "rk4"):
            raise ValueError(f"method must be 'dopri5' or 'rk4', got {self.method!r}")
        for name in ("dt_max", "rel_tol", "abs_tol", "t_end", "sample_every", "dt_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    def with_(self, **changes) -> "IntegrationOptions":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass
class Trajectory:
    """Sampled solution.

    ``states[i]`` is the right limit at ``times[i]``. For every entry of
    ``impulse_times`` the left limit is kept in ``pre_impulse_states``.
    """

    times: np.ndarray
    states: np.ndarray
    impulse_times: np.ndarray
    pre_impulse_states: np.ndarray
    columns: tuple[str, ...] = STATE_NAMES
    wild_index: tuple[int, ...] = WILD_INDEX
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def wild_max(self) -> np.ndarray:
        return self.states[:, list(self.wild_index)].max(axis=1)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.columns.index(name)]

    def state_at(self, i: int) -> SystemState:
        return SystemState(*self.states[i])

    def csv_rows(self) -> list[list[str]]:
        """Rows for CSV export; each impulse gives a pre row then a post row."""
        header = ["t", *self.columns, "event"]
        rows = [header]
        pre = dict(zip(self.impulse_times.tolist(), self.pre_impulse_states))
        for t, y in zip(self.times.tolist(), self.states):
            if t in pre:
                rows.append([format_float(t), *map(format_float, pre[t]), "impulse"])
                rows.append([format_float(t), *map(format_float, y), "impulse"])
            else:
                rows.append([format_float(t), *map(format_float, y), ""])
        return rows


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _stop_times(schedule: ReleaseSchedule, t_end: float, sample_every: float) -> list[float]:
    n = int(math.floor(t_end / sample_every + 1e-9))
    stops = {min(k * sample_every, t_end) for k in range(n + 1)}
    stops.add(t_end)
    stops.update(t for t, _ in schedule.impulses_in(0.0, t_end))
    stops.update(schedule.breakpoints_in(0.0, t_end))
    return sorted(stops)


def integrate_system(
    rhs: Callable[[np.ndarray, float], np.ndarray],
    y0: Sequence[float],
    schedule: ReleaseSchedule,
    options: IntegrationOptions,
    impulse_index: int,
    columns: tuple[str, ...],
    wild_index: tuple[int, ...],
) -> Trajectory:
    """Integrate ``y' = rhs(y, rate(t))`` with impulses added to ``y[impulse_index]``."""
    y = np.array(y0, dtype=float)
    stops = _stop_times(schedule, options.t_end, options.sample_every)
    impulses = dict(schedule.impulses_in(0.0, options.t_end + 1e-12 * options.t_end))

    times: list[float] = []
    states: list[np.ndarray] = []
    imp_times: list[float] = []
    imp_pre: list[np.ndarray] = []
    stats = {"steps": 0, "rejected": 0, "rhs_evals": 0, "clip_max": 0.0}
    h = min(options.dt_max, 0.1)

    for i, a in enumerate(stops):
        if a in impulses:
            imp_times.append(a)
            imp_pre.append(y.copy())
            y = y.copy()
            y[impulse_index] += impulses[a]
        times.append(a)
        states.append(y.copy())
        if i + 1 == len(stops):
            break
        b = stops[i + 1]
        rate = schedule.rate_at(a)
        f = lambda z, _rate=rate: rhs(z, _rate)  # noqa: E731
        if options.method == "rk4":
            y = _rk4_segment(f, y, a, b, options, stats)
        else:
            y, h = _dopri_segment(f, y, a, b, h, options, stats)

    traj = Trajectory(
        times=np.array(times),
        states=np.array(states),
        impulse_times=np.array(imp_times),
        pre_impulse_states=np.array(imp_pre).reshape(len(imp_pre), len(y)),
        columns=columns,
        wild_index=wild_index,
    )
    traj.diagnostics.update(stats)
    return traj


def _accept(y_new: np.ndarray, options: IntegrationOptions, stats: dict) -> np.ndarray:
    neg = y_new < 0
    if neg.any():
        stats["clip_max"] = max(stats["clip_max"], float(-y_new[neg].min()))
        if options.clip_negative:
            y_new = np.where(neg, 0.0, y_new)
    return y_new


def _rk4_segment(f, y, a, b, options, stats):
    n = max(1, math.ceil((b - a) / options.dt_max - 1e-9))
    h = (b - a) / n
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        stats["rhs_evals"] += 4
        stats["steps"] += 1
        if y_new.min() < -NEGATIVE_CLIP_TOL:
            raise IntegrationError(
                f"fixed-step RK4 produced a negative state ({y_new.min():.3e}); reduce dt_max"
            )
        y = _accept(y_new, options, stats)
    return y


def _dopri_segment(f, y, a, b, h, options, stats):
    t = a
    rtol, atol = options.rel_tol, options.abs_tol
    k1 = f(y)
    stats["rhs_evals"] += 1
    while t < b:
        h = min(h, options.dt_max)
        last = False
        if t + h >= b - 1e-12 * max(1.0, abs(b)):
            h = b - t
            last = True
        k = [k1]
        for s in range(1, 7):
            dy = sum(c * kk for c, kk in zip(_A[s], k))
            k.append(f(y + h * dy))
        stats["rhs_evals"] += 6
        K = np.array(k)
        y_new = y + h * (_B @ K)
        err_vec = h * (_E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        negative = y_new.min() < -NEGATIVE_CLIP_TOL
        if err <= 1.0 and not negative:
            t = b if last else t + h
            y = _accept(y_new, options, stats)
            # FSAL: the last stage is f at the new point unless clipping moved it
            k1 = K[6] if not np.any(y != y_new) else f(y)
            stats["steps"] += 1
            factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not last:
                h = h * factor
            else:
                # keep the unconstrained step for the next segment
                h = max(h, min(options.dt_max, h * factor))
        else:
            stats["rejected"] += 1
            h = h * (0.5 if negative else max(0.2, 0.9 * err ** -0.2))
            if h < options.dt_min:
                raise IntegrationError(
                    f"step size underflow at t={t:.6g} (h={h:.3e}); tolerance cannot be met"
                )
    return y, h


def integrate(
    params: ModelParams,
    schedule: ReleaseSchedule,
    initial: Sequence[float],
    options: IntegrationOptions | None = None,
) -> Trajectory:
    """Solve the two-patch system over ``[0, options.t_end]``."""
    options = options or IntegrationOptions()
    y0 = np.asarray(initial, dtype=float)
    if y0.shape != (8,):
        raise DomainError(f"initial state must have 8 components, got shape {y0.shape}")
    if np.any(y0 < 0):
        raise DomainError("initial state must be non-negative")
    if y0[0] > params.K1 or y0[4] > params.K2:
        warnings.warn("initial aquatic density exceeds carrying capacity; order properties may fail",
                      stacklevel=2)
    return integrate_system(
        lambda y, rate: _field(y, rate, params),
        y0, schedule, options,
        impulse_index=STERILE_INDEX[0], columns=STATE_NAMES, wild_index=WILD_INDEX,
    )


def detect_extinction(traj: Trajectory, threshold: float = 1e-2) -> float | None:
    """Earliest sample time from which every wild compartment stays below ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    above = np.flatnonzero(traj.wild_max() >= threshold)
    if len(above) == 0:
        return float(traj.times[0])
    last = above[-1]
    if last == len(traj.times) - 1:
        return None
    return float(traj.times[last + 1])


class OutcomeKind(str, Enum):
    EXTINCTION = "Extinction"
    PERSISTENCE = "Persistence"
    PERIODIC = "PeriodicRegime"
    UNDETERMINED = "Undetermined"


@dataclass
class OutcomeReport:
    kind: OutcomeKind
    extinction_time: float | None
    terminal_state: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.extinction_time is not None) != (self.kind == OutcomeKind.EXTINCTION):
            raise ValueError("extinction_time must be set exactly for Extinction outcomes")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "extinction_time": self.extinction_time,
            "terminal_state": [float(v) for v in self.terminal_state],
            "diagnostics": self.diagnostics,
        }


def classify_trajectory(
    traj: Trajectory,
    schedule: ReleaseSchedule,
    extinction_threshold: float = 1e-2,
    settle_tol: float = 1e-6,
) -> OutcomeReport:
    wild = traj.states[:, list(traj.wild_index)]
    diag = {
        "final_wild_max": float(wild[-1].max()),
        "clip_max": traj.diagnostics.get("clip_max", 0.0),
        "steps": traj.diagnostics.get("steps", 0),
    }
    t_ext = detect_extinction(traj, extinction_threshold)
    if t_ext is not None:
        return OutcomeReport(OutcomeKind.EXTINCTION, t_ext, traj.terminal, diag)

    if isinstance(schedule, PeriodicImpulsive) and len(traj.impulse_times) >= 3:
        # consecutive images of the period map, taken just before each impulse
        a, b = traj.pre_impulse_states[-2], traj.pre_impulse_states[-1]
        drift = float(np.linalg.norm(b - a) / max(np.linalg.norm(b), 1e-300))
        diag["period_drift"] = drift
        if drift < settle_tol and diag["final_wild_max"] > extinction_threshold:
            return OutcomeReport(OutcomeKind.PERIODIC, None, traj.terminal, diag)

    t_end = traj.times[-1]
    i0 = int(np.searchsorted(traj.times, 0.9 * t_end))
    w0, w1 = wild[i0], wild[-1]
    drift = float(np.linalg.norm(w1 - w0) / max(np.linalg.norm(w1), 1e-300))
    diag["tail_drift"] = drift
    if drift < settle_tol and diag["final_wild_max"] > extinction_threshold:
        return OutcomeReport(OutcomeKind.PERSISTENCE, None, traj.terminal, diag)
    return OutcomeReport(OutcomeKind.UNDETERMINED, None, traj.terminal, diag)


def classify_outcome(
    params: ModelParams,
    schedule: ReleaseSchedule,
    initial: Sequence[float],
    options: IntegrationOptions | None = None,
    extinction_threshold: float = 1e-2,
    settle_tol: float = 1e-6,
) -> OutcomeReport:
    traj = integrate(params, schedule, initial, options)
    return classify_trajectory(traj, schedule, extinction_threshold, settle_tol)
