"""Scenario configuration files (JSON) and their validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .integrate import IntegrationOptions
from .model import ModelParams, ParameterError
from .release import Constant, ReleaseSchedule, schedule_from_dict

EXPERIMENTS = ("simulate", "equilibria", "bifurcation", "critical", "heatmap", "ratio_sweep", "compare", "audit")

# initial data near zero, intermediate, and near the uncontrolled equilibrium
DEFAULT_INITIAL_SETS = (
    (2.0, 5.0, 4.0, 0.0, 3.0, 5.0, 3.0, 0.0),
    (80.0, 30.0, 20.0, 0.0, 70.0, 30.0, 30.0, 0.0),
    (160.0, 60.0, 50.0, 0.0, 155.0, 70.0, 50.0, 0.0),
)

# experiment knobs and their defaults; every key here is documented in the CLI help
KNOB_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"extinction_threshold": 1e-2, "settle_tol": 1e-6},
    "equilibria": {"rates": [0.0, 200.0, 500.0]},
    "bifurcation": {
        "lambda_start": 0.1, "lambda_end": 500.0, "step0": 5.0, "step_min": 1e-3,
        "branches": ["stable", "unstable"],
    },
    "critical": {
        "kind": "constant", "bracket": [100.0, 500.0], "tol": 0.5, "tau": 10.0,
        "methods": ["fold", "simulation"], "system": "two-patch",
    },
    "heatmap": {
        "d12": {"min": 0.05, "max": 2.0, "n": 16, "spacing": "log"},
        "d21": {"min": 0.05, "max": 2.0, "n": 16, "spacing": "log"},
        "method": "fold",
    },
    "ratio_sweep": {
        "d12": 0.6,
        "eta": {"min": 0.5, "max": 2.0, "n": 16, "spacing": "linear"},
        "method": "fold",
    },
    "compare": {"rate": 300.0, "tau": 10.0, "extinction_threshold": 1e-2},
    "audit": {
        "perturbations": [
            ["mu_E", 1.2], ["mu_F", 1.2], ["mu_M", 1.2], ["mu_s", 0.8], ["b", 0.8],
            ["K1", 0.8], ["K2", 0.8], ["mu_E", 0.8], ["mu_F", 0.8], ["b", 1.2],
        ],
        "method": "fold",
        "tol": 0.5,
    },
}

TOP_LEVEL_KEYS = {"experiment", "params", "schedule", "schedules", "initial_sets", "sim", "output_dir", "threads",
                  *EXPERIMENTS}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class ScenarioConfig:
    experiment: str
    params: ModelParams = field(default_factory=ModelParams)
    schedule: ReleaseSchedule = field(default_factory=lambda: Constant(0.0))
    schedules: tuple = ()
    initial_sets: tuple = DEFAULT_INITIAL_SETS
    sim: IntegrationOptions = field(default_factory=IntegrationOptions)
    options: dict = field(default_factory=dict)
    output_dir: str = "out"
    threads: int | None = None

    def run_schedules(self) -> tuple:
        return self.schedules or (self.schedule,)

    def to_dict(self) -> dict:
        d = {
            "experiment": self.experiment,
            "params": self.params.to_dict(),
            "schedule": self.schedule.to_dict(),
            "initial_sets": [list(s) for s in self.initial_sets],
            "sim": self.sim.to_dict(),
            "output_dir": self.output_dir,
            self.experiment: copy.deepcopy(self.options),
        }
        if self.schedules:
            d["schedules"] = [s.to_dict() for s in self.schedules]
        if self.threads is not None:
            d["threads"] = self.threads
        return d


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _merge_knobs(experiment: str, given: Any) -> dict:
    path = experiment
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(path, "expected an object")
    defaults = KNOB_DEFAULTS[experiment]
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown option")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    _check_knobs(experiment, out)
    return out


def _check_grid(spec, path: str):
    if isinstance(spec, list):
        if not spec:
            raise ConfigError(path, "grid must be non-empty")
        vals = [_num(v, f"{path}[{i}]") for i, v in enumerate(spec)]
        if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(path, "grid values must be positive and ascending")
        return
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected a list of values or {min, max, n, spacing}")
    unknown = set(spec) - {"min", "max", "n", "spacing"}
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown grid key")
    lo, hi = _num(spec.get("min"), f"{path}.min"), _num(spec.get("max"), f"{path}.max")
    n = spec.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError(f"{path}.n", "expected a positive integer")
    if not 0 < lo <= hi or (n > 1 and lo == hi):
        raise ConfigError(path, "need 0 < min < max")
    if spec.get("spacing", "log") not in ("log", "linear"):
        raise ConfigError(f"{path}.spacing", "expected 'log' or 'linear'")


def grid_values(spec) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    lo, hi, n = float(spec["min"]), float(spec["max"]), int(spec["n"])
    if n == 1:
        return np.array([lo])
    if spec.get("spacing", "log") == "log":
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def _check_knobs(experiment: str, k: dict):
    p = experiment
    if experiment == "simulate":
        if _num(k["extinction_threshold"], f"{p}.extinction_threshold") <= 0:
            raise ConfigError(f"{p}.extinction_threshold", "must be > 0")
        if _num(k["settle_tol"], f"{p}.settle_tol") <= 0:
            raise ConfigError(f"{p}.settle_tol", "must be > 0")
    elif experiment == "equilibria":
        if not isinstance(k["rates"], list) or not k["rates"]:
            raise ConfigError(f"{p}.rates", "expected a non-empty list")
        for i, v in enumerate(k["rates"]):
            if _num(v, f"{p}.rates[{i}]") < 0:
                raise ConfigError(f"{p}.rates[{i}]", "must be >= 0")
    elif experiment == "bifurcation":
        a = _num(k["lambda_start"], f"{p}.lambda_start")
        b = _num(k["lambda_end"], f"{p}.lambda_end")
        if not 0 <= a < b:
            raise ConfigError(f"{p}.lambda_end", "need 0 <= lambda_start < lambda_end")
        s0, sm = _num(k["step0"], f"{p}.step0"), _num(k["step_min"], f"{p}.step_min")
        if not s0 > sm > 0:
            raise ConfigError(f"{p}.step_min", "need step0 > step_min > 0")
        if not isinstance(k["branches"], list) or not set(k["branches"]) <= {"stable", "unstable"} \
                or not k["branches"]:
            raise ConfigError(f"{p}.branches", "expected a non-empty subset of ['stable', 'unstable']")
    elif experiment == "critical":
        if k["kind"] not in ("constant", "periodic"):
            raise ConfigError(f"{p}.kind", "expected 'constant' or 'periodic'")
        br = k["bracket"]
        if not isinstance(br, list) or len(br) != 2:
            raise ConfigError(f"{p}.bracket", "expected [lo, hi]")
        lo, hi = _num(br[0], f"{p}.bracket[0]"), _num(br[1], f"{p}.bracket[1]")
        if not 0 <= lo < hi:
            raise ConfigError(f"{p}.bracket", "need 0 <= lo < hi")
        if _num(k["tol"], f"{p}.tol") <= 0:
            raise ConfigError(f"{p}.tol", "must be > 0")
        if _num(k["tau"], f"{p}.tau") <= 0:
            raise ConfigError(f"{p}.tau", "must be > 0")
        if not isinstance(k["methods"], list) or not k["methods"] or \
                not set(k["methods"]) <= {"fold", "simulation"}:
            raise ConfigError(f"{p}.methods", "expected a non-empty subset of ['fold', 'simulation']")
        if k["system"] not in ("two-patch", "homogeneous"):
            raise ConfigError(f"{p}.system", "expected 'two-patch' or 'homogeneous'")
        if k["kind"] == "periodic" and "fold" in k["methods"]:
            raise ConfigError(f"{p}.methods", "fold continuation applies to constant releases only")
        if k["system"] == "homogeneous" and "fold" in k["methods"]:
            raise ConfigError(f"{p}.methods", "use the closed form for the homogeneous fold")
    elif experiment == "heatmap":
        _check_grid(k["d12"], f"{p}.d12")
        _check_grid(k["d21"], f"{p}.d21")
        if k["method"] not in ("fold", "simulation"):
            raise ConfigError(f"{p}.method", "expected 'fold' or 'simulation'")
    elif experiment == "ratio_sweep":
        if _num(k["d12"], f"{p}.d12") <= 0:
            raise ConfigError(f"{p}.d12", "must be > 0")
        _check_grid(k["eta"], f"{p}.eta")
        if k["method"] not in ("fold", "simulation"):
            raise ConfigError(f"{p}.method", "expected 'fold' or 'simulation'")
    elif experiment == "compare":
        if _num(k["rate"], f"{p}.rate") < 0:
            raise ConfigError(f"{p}.rate", "must be >= 0")
        if _num(k["tau"], f"{p}.tau") <= 0:
            raise ConfigError(f"{p}.tau", "must be > 0")
        if _num(k["extinction_threshold"], f"{p}.extinction_threshold") <= 0:
            raise ConfigError(f"{p}.extinction_threshold", "must be > 0")
    elif experiment == "audit":
        if not isinstance(k["perturbations"], list) or not k["perturbations"]:
            raise ConfigError(f"{p}.perturbations", "expected a non-empty list of [name, factor]")
        from .continuation import ORDER_COORDS

        for i, item in enumerate(k["perturbations"]):
            if not isinstance(item, list) or len(item) != 2 or item[0] not in ORDER_COORDS:
                raise ConfigError(f"{p}.perturbations[{i}]",
                                  f"expected [name, factor] with name in {sorted(ORDER_COORDS)}")
            if _num(item[1], f"{p}.perturbations[{i}][1]") <= 0:
                raise ConfigError(f"{p}.perturbations[{i}][1]", "factor must be > 0")
        if k["method"] not in ("fold", "simulation"):
            raise ConfigError(f"{p}.method", "expected 'fold' or 'simulation'")
        if _num(k["tol"], f"{p}.tol") < 0:
            raise ConfigError(f"{p}.tol", "must be >= 0")


def _params(data) -> ModelParams:
    if data is None:
        return ModelParams()
    if not isinstance(data, dict):
        raise ConfigError("params", "expected an object")
    for k, v in data.items():
        _num(v, f"params.{k}")
    try:
        return ModelParams.from_dict(data)
    except ParameterError as exc:
        raise ConfigError(f"params.{exc.name}", exc.rule if exc.rule != "known parameter name"
                          else "unknown parameter") from None


def _schedule(data, path: str) -> ReleaseSchedule:
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    allowed = {"constant": {"kind", "rate"}, "periodic": {"kind", "rate", "tau"},
               "piecewise": {"kind", "breakpoints", "rates"}}
    kind = data.get("kind")
    if kind not in allowed:
        raise ConfigError(f"{path}.kind", "expected 'constant', 'periodic' or 'piecewise'")
    unknown = set(data) - allowed[kind]
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown schedule field")
    for key in allowed[kind] - {"kind"}:
        if key not in data:
            raise ConfigError(f"{path}.{key}", "missing")
    try:
        return schedule_from_dict(data)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _sim(data) -> IntegrationOptions:
    if data is None:
        return IntegrationOptions()
    if not isinstance(data, dict):
        raise ConfigError("sim", "expected an object")
    known = {f.name for f in fields(IntegrationOptions)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"sim.{sorted(unknown)[0]}", "unknown option")
    for k, v in data.items():
        if k == "method":
            if v not in ("dopri5", "rk4"):
                raise ConfigError("sim.method", "expected 'dopri5' or 'rk4'")
        elif k == "clip_negative":
            if not isinstance(v, bool):
                raise ConfigError("sim.clip_negative", "expected true or false")
        elif _num(v, f"sim.{k}") <= 0:
            raise ConfigError(f"sim.{k}", "must be > 0")
    return IntegrationOptions(**{k: (float(v) if k not in ("method", "clip_negative") else v)
                                 for k, v in data.items()})


def _initial_sets(data) -> tuple:
    if data is None:
        return DEFAULT_INITIAL_SETS
    if not isinstance(data, list):
        raise ConfigError("initial_sets", "expected a list of 8-component states")
    out = []
    for i, s in enumerate(data):
        if not isinstance(s, list) or len(s) != 8:
            raise ConfigError(f"initial_sets[{i}]", "expected 8 numbers (E1, F1, M1, M1s, E2, F2, M2, M2s)")
        vals = tuple(_num(v, f"initial_sets[{i}][{j}]") for j, v in enumerate(s))
        for j, v in enumerate(vals):
            if v < 0:
                raise ConfigError(f"initial_sets[{i}][{j}]", "must be >= 0")
        out.append(vals)
    return tuple(out)


def config_from_dict(data: dict, experiment: str | None = None) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level field")
    exp = data.get("experiment")
    if experiment is not None:
        if exp is not None and exp != experiment:
            raise ConfigError("experiment", f"config says {exp!r} but {experiment!r} was requested")
        exp = experiment
    if exp is None or exp == "":
        raise ConfigError("experiment", f"missing; expected one of {', '.join(EXPERIMENTS)}")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
    for other in EXPERIMENTS:
        if other != exp and other in data:
            raise ConfigError(other, f"options for {other!r} given but experiment is {exp!r}")
    schedules = ()
    if "schedules" in data:
        if not isinstance(data["schedules"], list) or not data["schedules"]:
            raise ConfigError("schedules", "expected a non-empty list")
        schedules = tuple(_schedule(s, f"schedules[{i}]") for i, s in enumerate(data["schedules"]))
    threads = data.get("threads")
    if threads is not None and (not isinstance(threads, int) or isinstance(threads, bool) or threads < 1):
        raise ConfigError("threads", "expected a positive integer")
    out_dir = data.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir", "expected a non-empty string")
    initial = _initial_sets(data.get("initial_sets"))
    if exp in ("simulate", "compare") and not initial:
        raise ConfigError("initial_sets", f"{exp} needs at least one initial state")
    return ScenarioConfig(
        experiment=exp,
        params=_params(data.get("params")),
        schedule=_schedule(data["schedule"], "schedule") if "schedule" in data else Constant(0.0),
        schedules=schedules,
        initial_sets=initial,
        sim=_sim(data.get("sim")),
        options=_merge_knobs(exp, data.get(exp)),
        output_dir=out_dir,
        threads=threads,
    )


def load_config(path: str | Path, experiment: str | None = None) -> ScenarioConfig:
    """Read and validate a JSON scenario file, filling defaults."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"malformed JSON: {exc}") from None
    return config_from_dict(data, experiment)
