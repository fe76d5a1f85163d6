"""Release schedules for sterile males.

A schedule splits into an absolutely continuous rate (``rate_at``) and a
list of instantaneous impulses (``impulses_in``). All releases happen in
patch 1.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Constant:
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"release rate must be >= 0, got {self.rate}")

    kind = "constant"

    def rate_at(self, t: float) -> float:
        return self.rate

    def impulses_in(self, t0: float, t1: float) -> list[tuple[float, float]]:
        return []

    def breakpoints_in(self, t0: float, t1: float) -> list[float]:
        return []

    def windowed_average(self, window_T: float) -> float:
        return self.rate

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class PeriodicImpulsive:
    """Release ``tau * rate`` individuals at every ``t = k * tau``, ``k >= 0``."""

    rate: float
    tau: float

    kind = "periodic"

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"release rate must be >= 0, got {self.rate}")
        if not self.tau > 0:
            raise ValueError(f"period must be > 0, got {self.tau}")

    @property
    def mass(self) -> float:
        return self.tau * self.rate

    def rate_at(self, t: float) -> float:
        return 0.0

    def impulses_in(self, t0: float, t1: float) -> list[tuple[float, float]]:
        if t1 <= t0:
            return []
        k0 = max(0, math.ceil(t0 / self.tau))
        out = []
        k = k0
        while k * self.tau < t1:
            out.append((k * self.tau, self.mass))
            k += 1
        return out

    def breakpoints_in(self, t0: float, t1: float) -> list[float]:
        return []

    def windowed_average(self, window_T: float) -> float:
        # sup over half-open windows [t, t+T) of the released mass, divided by T
        return math.ceil(window_T / self.tau - 1e-12) * self.mass / window_T

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate, "tau": self.tau}


@dataclass(frozen=True)
class PiecewiseConstant:
    """``rates[i]`` applies on ``[breakpoints[i], breakpoints[i+1])``; zero before the first."""

    breakpoints: tuple[float, ...]
    rates: tuple[float, ...]

    kind = "piecewise"

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.breakpoints) != len(self.rates) or not self.rates:
            raise ValueError("breakpoints and rates must be non-empty and of equal length")
        if any(b1 <= b0 for b0, b1 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(not r >= 0 for r in self.rates):
            raise ValueError("rates must be >= 0")

    def rate_at(self, t: float) -> float:
        i = bisect.bisect_right(self.breakpoints, t) - 1
        return 0.0 if i < 0 else self.rates[i]

    def impulses_in(self, t0: float, t1: float) -> list[tuple[float, float]]:
        return []

    def breakpoints_in(self, t0: float, t1: float) -> list[float]:
        return [b for b in self.breakpoints if t0 < b < t1]

    def windowed_average(self, window_T: float) -> float:
        # the sup is attained by a window starting at a breakpoint or ending at one
        best = 0.0
        starts = list(self.breakpoints) + [b - window_T for b in self.breakpoints]
        for s in starts:
            best = max(best, self._integral(s, s + window_T) / window_T)
        return best

    def _integral(self, a: float, b: float) -> float:
        total = 0.0
        edges = list(self.breakpoints) + [math.inf]
        for i, r in enumerate(self.rates):
            lo, hi = max(a, edges[i]), min(b, edges[i + 1])
            if hi > lo:
                total += r * (hi - lo)
        return total

    def to_dict(self) -> dict:
        return {"kind": self.kind, "breakpoints": list(self.breakpoints), "rates": list(self.rates)}


ReleaseSchedule = Union[Constant, PeriodicImpulsive, PiecewiseConstant]


def schedule_rate_at(schedule: ReleaseSchedule, t: float) -> float:
    return schedule.rate_at(t)


def schedule_impulses_in(schedule: ReleaseSchedule, t0: float, t1: float) -> list[tuple[float, float]]:
    """Impulses with times in ``[t0, t1)`` as ``(time, mass)`` pairs."""
    return schedule.impulses_in(t0, t1)


def schedule_from_dict(data: dict) -> ReleaseSchedule:
    kind = data.get("kind")
    if kind == "constant":
        return Constant(float(data["rate"]))
    if kind == "periodic":
        return PeriodicImpulsive(float(data["rate"]), float(data["tau"]))
    if kind == "piecewise":
        return PiecewiseConstant(tuple(data["breakpoints"]), tuple(data["rates"]))
    raise ValueError(f"unknown schedule kind {kind!r}; expected constant, periodic or piecewise")
