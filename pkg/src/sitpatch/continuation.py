"""Critical release rates: equilibrium continuation, simulation bisection and sweeps.

Two independent estimates of the critical constant release rate are
provided. ``continue_branch`` follows the positive equilibrium in the
release rate until Newton stops converging (the fold). ``critical_lambda_by_simulation``
bisects on whether a long simulation from the uncontrolled equilibrium
goes extinct, and also covers periodic impulsive releases.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from ._io import format_float
from .equilibria import (
    ControlledEquilibrium,
    controlled_equilibria,
    full_state,
    homogeneous_critical_lambda,
    jacobian,
    lambda_upper_bound_constant,
    stability_of,
    sterile_constant_steady,
    wild_positive_equilibrium,
    wild_residual,
)
from .integrate import IntegrationOptions, OutcomeReport, classify_trajectory, integrate
from .model import ModelParams, _field
from .reduced import homogeneous_positive_state, integrate_homogeneous, integrate_limit, limit_default_seed
from .release import Constant, PeriodicImpulsive
from .solvers import damped_newton

DEFAULT_STEP0 = 5.0
DEFAULT_STEP_MIN = 1e-3
DEFAULT_BISECTION_TOL = 0.5
MAX_REL_DISPLACEMENT = 0.5


def natural_continuation(
    solve: Callable[[float, np.ndarray], np.ndarray | None],
    x0: np.ndarray,
    lam0: float,
    lam_end: float,
    step0: float,
    step_min: float,
    max_rel_disp: float = MAX_REL_DISPLACEMENT,
):
    """Step the parameter, re-solving from the previous root, halving on failure.

    Returns ``(points, fold)`` where ``points`` is a list of
    ``(lam, x, step_used)`` and ``fold`` is the last converged parameter
    once the step has shrunk below ``step_min`` (``None`` if ``lam_end``
    was reached).
    """
    if not lam0 < lam_end:
        raise ValueError("need lambda_start < lambda_end")
    if not step0 > step_min > 0:
        raise ValueError("need step0 > step_min > 0")
    x = np.asarray(x0, dtype=float)
    lam = lam0
    h = step0
    points = [(lam, x, 0.0)]
    while lam < lam_end:
        h_try = min(h, lam_end - lam)
        x_new = solve(lam + h_try, x)
        ok = x_new is not None and (
            np.linalg.norm(x_new - x) <= max_rel_disp * max(1.0, float(np.linalg.norm(x)))
        )
        if ok:
            lam = lam + h_try
            x = x_new
            points.append((lam, x, h_try))
            if lam >= lam_end:
                return points, None
        else:
            h *= 0.5
            if h < step_min:
                return points, lam
    return points, None


@dataclass
class BranchPoint:
    lam: float
    equilibrium: ControlledEquilibrium
    step_used: float


class Branch(NamedTuple):
    points: list
    fold_estimate: float | None


def _branch_solver(params: ModelParams):
    def solve(lam, guess):
        res = damped_newton(wild_residual(params, lam), guess)
        if not res.converged or not np.all(res.x > 0):
            return None
        return res.x

    return solve


def _make_point(params, lam, w, step, with_stability):
    ss = sterile_constant_steady(params, lam)
    y = full_state(w, (ss.M1s_star, ss.M2s_star))
    res = float(np.linalg.norm(_field(y, lam, params)))
    if with_stability:
        eig = np.linalg.eigvals(jacobian(params, y, lam))
        stab = stability_of(eig)
    else:
        eig, stab = np.array([np.nan]), "undetermined"
    return BranchPoint(lam, ControlledEquilibrium(y, lam, stab, eig, res), step)


def continue_branch(
    params: ModelParams,
    lambda_start: float = 0.1,
    lambda_end: float = 500.0,
    step0: float = DEFAULT_STEP0,
    step_min: float = DEFAULT_STEP_MIN,
    branch: str = "stable",
    with_stability: bool = True,
) -> Branch:
    """Natural-parameter continuation of a positive equilibrium branch in the release rate.

    ``branch="stable"`` starts from the largest positive equilibrium at
    ``lambda_start``, ``"unstable"`` from the smallest. An empty branch with
    no fold is returned when there is no positive equilibrium to start from.
    """
    if branch not in ("stable", "unstable"):
        raise ValueError("branch must be 'stable' or 'unstable'")
    eqs = controlled_equilibria(params, lambda_start).positive
    if not eqs:
        return Branch([], None)
    if branch == "unstable" and len(eqs) < 2:
        raise ValueError(f"no second positive equilibrium at lambda={lambda_start}")
    start = eqs[-1] if branch == "stable" else eqs[0]
    raw, fold = natural_continuation(
        _branch_solver(params), start.wild, lambda_start, lambda_end, step0, step_min
    )
    pts = [_make_point(params, lam, w, h, with_stability) for lam, w, h in raw]
    return Branch(pts, fold)


def branch_csv_rows(branch: Branch) -> list[list[str]]:
    rows = [["lambda", "E1", "F1", "M1", "E2", "F2", "M2", "stability"]]
    for pt in branch.points:
        rows.append([format_float(pt.lam), *map(format_float, pt.equilibrium.wild), pt.equilibrium.stability])
    return rows


@dataclass
class CriticalResult:
    lambda_crit: float
    bracket: tuple[float, float]
    method: str
    evaluations: int
    schedule_kind: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.bracket
        if not lo < self.lambda_crit <= hi:
            raise ValueError("critical value must lie in its bracket")

    def to_dict(self) -> dict:
        return {
            "lambda_crit": self.lambda_crit,
            "bracket": list(self.bracket),
            "method": self.method,
            "evaluations": self.evaluations,
            "schedule_kind": self.schedule_kind,
            "diagnostics": self.diagnostics,
        }


class InvalidBracketError(ValueError):
    def __init__(self, lo: float, hi: float, lo_report: OutcomeReport, hi_report: OutcomeReport):
        self.lo, self.hi = lo, hi
        self.lo_report, self.hi_report = lo_report, hi_report
        super().__init__(
            f"bracket ({lo}, {hi}) does not straddle the threshold: "
            f"outcomes {lo_report.kind.value} and {hi_report.kind.value}"
        )


class NoFoldError(RuntimeError):
    pass


def critical_lambda_by_fold(
    params: ModelParams,
    lambda_start: float = 0.1,
    lambda_end: float | None = None,
    step0: float = DEFAULT_STEP0,
    step_min: float = DEFAULT_STEP_MIN,
) -> CriticalResult:
    """Fold of the stable branch, reported with the bracket left by the step halving."""
    if lambda_end is None:
        lambda_end = 1.01 * lambda_upper_bound_constant(params)
    br = continue_branch(params, lambda_start, lambda_end, step0, step_min, with_stability=False)
    if br.fold_estimate is None:
        raise NoFoldError(f"no fold found in [{lambda_start}, {lambda_end}]")
    # the last halving failed at fold + step, with step in [step_min/2, step_min)
    lo = br.fold_estimate
    hi = lo + step_min
    return CriticalResult(
        0.5 * (lo + hi), (lo, hi), "FoldContinuation", len(br.points), "constant",
        {"fold_estimate": lo, "branch_points": len(br.points)},
    )


def _worst_case_initial(params: ModelParams, system: str, eta: float | None):
    if system == "two-patch":
        eq = wild_positive_equilibrium(params)
        if eq is None:
            raise ValueError("offspring number <= 1: nothing to eliminate")
        return np.asarray(eq.state(), dtype=float)
    if system == "homogeneous":
        st = homogeneous_positive_state(params).copy()
        st[3] = 0.0
        return st
    if system == "limit":
        return np.append(limit_default_seed(params, eta), 0.0)
    raise ValueError(f"unknown system {system!r}")


def critical_lambda_by_simulation(
    params: ModelParams,
    kind: str = "constant",
    bracket: tuple[float, float] = (100.0, 500.0),
    tol: float = DEFAULT_BISECTION_TOL,
    options: IntegrationOptions | None = None,
    tau: float = 10.0,
    system: str = "two-patch",
    eta: float | None = None,
    initial: Sequence[float] | None = None,
    extinction_threshold: float = 1e-2,
) -> CriticalResult:
    """Bisect the release rate on the extinction outcome of a long simulation.

    ``system`` is ``"two-patch"``, ``"homogeneous"`` or ``"limit"`` (the
    latter needs ``eta``). The default initial state is the uncontrolled
    positive equilibrium, the worst case for elimination.
    """
    if kind not in ("constant", "periodic"):
        raise ValueError("kind must be 'constant' or 'periodic'")
    if system == "limit" and eta is None:
        raise ValueError("the limit system needs eta")
    options = options or IntegrationOptions()
    y0 = np.asarray(initial, dtype=float) if initial is not None else _worst_case_initial(params, system, eta)

    def schedule(lam):
        return Constant(lam) if kind == "constant" else PeriodicImpulsive(lam, tau)

    def run(lam) -> OutcomeReport:
        sch = schedule(lam)
        if system == "two-patch":
            traj = integrate(params, sch, y0, options)
        elif system == "homogeneous":
            traj = integrate_homogeneous(params, sch, y0, options)
        else:
            traj = integrate_limit(params, eta, sch, y0, options)
        return classify_trajectory(traj, sch, extinction_threshold)

    lo, hi = map(float, bracket)
    if not 0 <= lo < hi:
        raise ValueError("bracket must satisfy 0 <= lo < hi")
    r_lo, r_hi = run(lo), run(hi)
    evals = 2
    if r_lo.extinction_time is not None or r_hi.extinction_time is None:
        raise InvalidBracketError(lo, hi, r_lo, r_hi)
    ext_time_hi = r_hi.extinction_time
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        rep = run(mid)
        evals += 1
        if rep.extinction_time is not None:
            hi, ext_time_hi = mid, rep.extinction_time
        else:
            lo = mid
    label = "constant" if kind == "constant" else f"periodic(tau={format_float(tau)})"
    return CriticalResult(
        0.5 * (lo + hi), (lo, hi), "SimulationBisection", evals, label,
        {"system": system, "t_end": options.t_end, "extinction_time_at_hi": ext_time_hi},
    )


# ---------------------------------------------------------------------------
# sweeps


def _critical_cell(args) -> float:
    params, method, kw = args
    try:
        if method == "fold":
            return critical_lambda_by_fold(params, **kw).lambda_crit
        return critical_lambda_by_simulation(params, **kw).lambda_crit
    except Exception:  # noqa: BLE001 - a failed cell is recorded as missing
        return math.nan


def _map(fn, tasks, workers: int | None):
    workers = resolve_workers(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("SIT_PATCH_THREADS")
        workers = int(env) if env else 1
    return max(1, int(workers))


@dataclass
class HeatmapGrid:
    d12_values: np.ndarray
    d21_values: np.ndarray
    lambda_crit: np.ndarray

    def __post_init__(self):
        if self.lambda_crit.shape != (len(self.d12_values), len(self.d21_values)):
            raise ValueError("matrix shape does not match the grids")

    def csv_rows(self) -> list[list[str]]:
        rows = [["d12", "d21", "lambda_crit"]]
        for i, a in enumerate(self.d12_values):
            for j, b in enumerate(self.d21_values):
                rows.append([format_float(a), format_float(b), format_float(self.lambda_crit[i, j])])
        return rows


def log_grid(lo: float = 0.05, hi: float = 2.0, n: int = 16) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def diffusion_heatmap(
    params: ModelParams,
    d12_grid: Sequence[float] | None = None,
    d21_grid: Sequence[float] | None = None,
    method: str = "fold",
    workers: int | None = None,
    **method_kw,
) -> HeatmapGrid:
    """Critical rate on a ``(d12, d21)`` grid; failed cells become NaN."""
    if method not in ("fold", "simulation"):
        raise ValueError("method must be 'fold' or 'simulation'")
    d12 = np.asarray(log_grid() if d12_grid is None else d12_grid, dtype=float)
    d21 = np.asarray(log_grid() if d21_grid is None else d21_grid, dtype=float)
    if np.any(d12 <= 0) or np.any(d21 <= 0):
        raise ValueError("diffusion rates must be positive")
    tasks = [(params.with_(d12=float(a), d21=float(b)), method, method_kw) for a in d12 for b in d21]
    vals = _map(_critical_cell, tasks, workers)
    return HeatmapGrid(d12, d21, np.array(vals, dtype=float).reshape(len(d12), len(d21)))


@dataclass
class RatioSweep:
    d12: float
    eta: np.ndarray
    lambda_crit: np.ndarray

    @property
    def argmax_eta(self) -> float:
        return float(self.eta[int(np.nanargmax(self.lambda_crit))])

    def csv_rows(self) -> list[list[str]]:
        rows = [["d12", "eta", "d21", "lambda_crit"]]
        for e, v in zip(self.eta, self.lambda_crit):
            rows.append([format_float(self.d12), format_float(e), format_float(self.d12 * e), format_float(v)])
        return rows


def ratio_sweep(
    params: ModelParams,
    d12_fixed: float,
    eta_grid: Sequence[float],
    method: str = "fold",
    workers: int | None = None,
    **method_kw,
) -> RatioSweep:
    """Critical rate along ``d21 = eta * d12`` at fixed ``d12``."""
    eta = np.asarray(eta_grid, dtype=float)
    if d12_fixed <= 0 or eta.size == 0 or np.any(eta <= 0) or np.any(np.diff(eta) <= 0):
        raise ValueError("need d12 > 0 and a positive ascending eta grid")
    tasks = [(params.with_(d12=float(d12_fixed), d21=float(d12_fixed * e)), method, method_kw) for e in eta]
    vals = _map(_critical_cell, tasks, workers)
    return RatioSweep(float(d12_fixed), eta, np.array(vals, dtype=float))


# ---------------------------------------------------------------------------
# parameter monotonicity

# coordinates of the parameter order and the direction in which each one
# makes elimination easier
ORDER_COORDS = {"mu_E": +1, "mu_F": +1, "mu_M": +1, "mu_s": -1, "b": -1, "K1": -1, "K2": -1}

DEFAULT_PERTURBATIONS = (
    ("mu_E", 1.2), ("mu_F", 1.2), ("mu_M", 1.2), ("mu_s", 0.8), ("b", 0.8),
    ("K1", 0.8), ("K2", 0.8), ("mu_E", 0.8), ("mu_F", 0.8), ("b", 1.2),
)


def parameter_leq(p: ModelParams, q: ModelParams) -> bool:
    """``p`` precedes ``q`` in the order under which the critical rate cannot increase."""
    for name, sign in ORDER_COORDS.items():
        a, b = getattr(p, name), getattr(q, name)
        if (sign > 0 and a > b) or (sign < 0 and a < b):
            return False
    others = set(p.to_dict()) - set(ORDER_COORDS)
    return all(getattr(p, k) == getattr(q, k) for k in others)


def ordered_pair(params: ModelParams, name: str, factor: float) -> tuple[ModelParams, ModelParams]:
    """Base and single-coordinate perturbation, arranged so that the first precedes the second."""
    if name not in ORDER_COORDS:
        raise ValueError(f"{name!r} is not a coordinate of the parameter order")
    other = params.with_(**{name: getattr(params, name) * factor})
    return (params, other) if parameter_leq(params, other) else (other, params)


@dataclass
class AuditEntry:
    label: str
    lower: float
    upper: float
    ok: bool

    def to_dict(self) -> dict:
        return {"perturbation": self.label, "lambda_lower": self.lower, "lambda_upper": self.upper, "ok": self.ok}


@dataclass
class AuditReport:
    entries: list[AuditEntry]
    tol: float
    method: str

    @property
    def violations(self) -> list[AuditEntry]:
        return [e for e in self.entries if not e.ok]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tol": self.tol,
            "violations": len(self.violations),
            "entries": [e.to_dict() for e in self.entries],
        }


def monotonicity_audit(
    params: ModelParams,
    perturbations: Sequence = DEFAULT_PERTURBATIONS,
    method: str = "fold",
    tol: float = DEFAULT_BISECTION_TOL,
    workers: int | None = None,
    **method_kw,
) -> AuditReport:
    """Check that the critical rate does not increase along ordered parameter pairs.

    Each perturbation is either a ``(name, factor)`` applied to ``params`` or
    an explicit ``(lower, upper)`` pair of :class:`ModelParams`.
    """
    pairs, labels = [], []
    for item in perturbations:
        a, b = item
        if isinstance(a, ModelParams):
            if not parameter_leq(a, b):
                raise ValueError("explicit pair is not ordered")
            pairs.append((a, b))
            labels.append("explicit")
        else:
            pairs.append(ordered_pair(params, a, float(b)))
            labels.append(f"{a}*{b}")
    tasks = [(p, method, method_kw) for pair in pairs for p in pair]
    vals = _map(_critical_cell, tasks, workers)
    entries = []
    for k, label in enumerate(labels):
        lo_val, hi_val = vals[2 * k], vals[2 * k + 1]
        ok = bool(np.isfinite(lo_val) and np.isfinite(hi_val) and lo_val >= hi_val - tol)
        entries.append(AuditEntry(label, float(lo_val), float(hi_val), ok))
    return AuditReport(entries, tol, method)


def homogeneous_reference(params: ModelParams) -> float:
    return homogeneous_critical_lambda(params)
