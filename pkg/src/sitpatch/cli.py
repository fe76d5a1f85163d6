"""``sit-patch`` command-line front end.

Each subcommand runs one experiment described by a JSON scenario file and
writes CSV/JSON data plus a ``manifest.json`` listing every output with its
SHA-256 checksum.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import traceback
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from ._io import format_float, write_csv, write_json
from .config import EXPERIMENTS, KNOB_DEFAULTS, ConfigError, ScenarioConfig, config_from_dict, grid_values, load_config
from .continuation import (
    branch_csv_rows,
    continue_branch,
    critical_lambda_by_fold,
    critical_lambda_by_simulation,
    diffusion_heatmap,
    monotonicity_audit,
    ratio_sweep,
    resolve_workers,
)
from .equilibria import (
    controlled_equilibria,
    homogeneous_critical_lambda,
    lambda_upper_bound_constant,
    lambda_upper_bound_periodic,
    sterile_constant_steady,
    wild_positive_equilibrium,
)
from .integrate import classify_trajectory, integrate
from .model import basic_offspring_number, uniform_bounds
from .release import Constant, PeriodicImpulsive, PiecewiseConstant

MANIFEST_NAME = "manifest.json"
THREADS_ENV = "SIT_PATCH_THREADS"

KNOB_HELP: dict[str, dict[str, str]] = {
    "simulate": {
        "extinction_threshold": "wild components below this count as extinct",
        "settle_tol": "relative drift below which a run counts as settled (persistence or periodic regime)",
    },
    "equilibria": {"rates": "list of constant release rates at which equilibria are computed"},
    "bifurcation": {
        "lambda_start": "first release rate of the continuation",
        "lambda_end": "last release rate of the continuation",
        "step0": "initial continuation step",
        "step_min": "continuation stops (fold) once the halved step falls below this",
        "branches": "which branches to follow: 'stable' (upper) and/or 'unstable' (lower)",
    },
    "critical": {
        "kind": "'constant' or 'periodic' releases",
        "bracket": "[lo, hi] release rates for simulation bisection; lo must persist, hi must go extinct",
        "tol": "bisection stops when the bracket is narrower than this",
        "tau": "release period for periodic releases",
        "methods": "any of 'fold' (constant, two-patch only) and 'simulation'",
        "system": "'two-patch' or 'homogeneous' (single patch with K = K1 + K2)",
    },
    "heatmap": {
        "d12": "d12 grid: a list of values or {min, max, n, spacing: log|linear}",
        "d21": "d21 grid, same format as d12",
        "method": "'fold' or 'simulation' critical-rate estimate per cell",
    },
    "ratio_sweep": {
        "d12": "fixed diffusion rate d12",
        "eta": "grid of ratios eta = d21/d12: a list or {min, max, n, spacing}",
        "method": "'fold' or 'simulation'",
    },
    "compare": {
        "rate": "average release rate shared by the constant and the periodic strategy",
        "tau": "period of the impulsive releases",
        "extinction_threshold": "wild components below this count as extinct",
    },
    "audit": {
        "perturbations": "list of [parameter, factor]; each pair is ordered automatically",
        "method": "'fold' or 'simulation'",
        "tol": "allowed increase of the critical rate along the order",
    },
}

EXPERIMENT_HELP = {
    "simulate": "integrate every schedule from every initial set; one trajectory CSV per run",
    "equilibria": "equilibria and their stability at constant release rates (JSON)",
    "bifurcation": "continuation of the positive equilibria in the release rate (CSV) and fold estimate",
    "critical": "critical release rate by fold continuation and/or simulation bisection (JSON)",
    "heatmap": "critical release rate over a (d12, d21) grid (CSV)",
    "ratio_sweep": "critical release rate along d21 = eta * d12 (CSV)",
    "compare": "constant versus periodic impulsive releases at equal average rate (CSV pairs)",
    "audit": "monotonicity of the critical rate under the parameter order (JSON)",
}


@dataclass
class RunManifest:
    config: dict
    version: str
    started: str
    wall_clock_seconds: float
    files: dict[str, str]
    failures: list[dict] = field(default_factory=list)
    foreign_files: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "toolkit": "sitpatch",
            "version": self.version,
            "started": self.started,
            "wall_clock_seconds": self.wall_clock_seconds,
            "status": "ok" if self.ok else "failed",
            "config": self.config,
            "files": self.files,
            "failures": self.failures,
            "foreign_files": self.foreign_files,
        }


class _Run:
    """Collects written files and sub-task failures for one experiment."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        self.failures: list[dict] = []

    def csv(self, name: str, rows) -> None:
        write_csv(self.out / name, rows)
        self._add(name)

    def json(self, name: str, obj) -> None:
        write_json(self.out / name, obj)
        self._add(name)

    def _add(self, name: str) -> None:
        if name in self.files:
            raise RuntimeError(f"output {name} written twice")
        self.files.append(name)

    def task(self, label: str, fn: Callable[[], object]):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return fn()
        except Exception as exc:  # noqa: BLE001 - recorded and reported via the exit status
            self.failures.append({"task": label, "error": f"{type(exc).__name__}: {exc}"})
            return None


def _schedule_label(s) -> str:
    if isinstance(s, Constant):
        return f"constant_{format_float(s.rate)}"
    if isinstance(s, PeriodicImpulsive):
        return f"periodic_{format_float(s.rate)}_tau{format_float(s.tau)}"
    assert isinstance(s, PiecewiseConstant)
    return "piecewise"


def _exp_simulate(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    k = cfg.options
    outcomes = []
    for i, sch in enumerate(cfg.run_schedules()):
        for j, y0 in enumerate(cfg.initial_sets):
            name = f"trajectory_{i + 1:02d}_{_schedule_label(sch)}_init{j + 1}.csv"

            def one(sch=sch, y0=y0, name=name):
                traj = integrate(cfg.params, sch, y0, cfg.sim)
                run.csv(name, traj.csv_rows())
                rep = classify_trajectory(traj, sch, k["extinction_threshold"], k["settle_tol"])
                return {"file": name, "schedule": sch.to_dict(), "initial": list(y0), **rep.to_dict()}

            res = run.task(name, one)
            if res is not None:
                outcomes.append(res)
    run.json("outcomes.json", {"runs": outcomes})


def _exp_equilibria(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    p = cfg.params
    report: dict = {"offspring_number": basic_offspring_number(p)}

    def uncontrolled():
        eq = wild_positive_equilibrium(p)
        return None if eq is None else dict(zip(("E1", "F1", "M1", "E2", "F2", "M2"), eq.as_array().tolist()))

    report["uncontrolled_positive"] = run.task("uncontrolled", uncontrolled)
    b = uniform_bounds(p, None, 0.0)
    report["uniform_bounds_no_release"] = {"C_F": b.C_F, "C_M": b.C_M, "C_Ms": b.C_Ms}
    report["upper_bound_constant"] = run.task("upper_bound", lambda: lambda_upper_bound_constant(p))
    report["rates"] = []
    for rate in cfg.options["rates"]:
        def one(rate=float(rate)):
            eqs = controlled_equilibria(p, rate)
            ss = sterile_constant_steady(p, rate)
            return {**eqs.to_dict(), "sterile_steady": {"M1s": ss.M1s_star, "M2s": ss.M2s_star,
                                                         "tau1": ss.tau1, "tau2": ss.tau2}}

        res = run.task(f"equilibria(rate={format_float(rate)})", one)
        if res is not None:
            report["rates"].append(res)
    run.json("equilibria.json", report)


def _exp_bifurcation(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    k = cfg.options
    folds = {}
    for which in k["branches"]:
        def one(which=which):
            br = continue_branch(cfg.params, k["lambda_start"], k["lambda_end"], k["step0"], k["step_min"], which)
            run.csv(f"branch_{which}.csv", branch_csv_rows(br))
            return br.fold_estimate

        folds[which] = run.task(f"branch_{which}", one)
    run.json("fold.json", {
        "fold_estimate": folds,
        "step_min": k["step_min"],
        "note": "fold is the last converged release rate before the step fell below step_min",
    })


def _exp_critical(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    k = cfg.options
    p = cfg.params
    results = []
    for method in k["methods"]:
        def one(method=method):
            if method == "fold":
                return critical_lambda_by_fold(p).to_dict()
            return critical_lambda_by_simulation(
                p, kind=k["kind"], bracket=tuple(k["bracket"]), tol=k["tol"], options=cfg.sim,
                tau=k["tau"], system=k["system"],
            ).to_dict()

        res = run.task(f"critical({method})", one)
        if res is not None:
            results.append(res)
    refs = {"homogeneous_closed_form": run.task("homogeneous", lambda: homogeneous_critical_lambda(p))}
    if k["kind"] == "constant":
        refs["upper_bound"] = run.task("upper_bound", lambda: lambda_upper_bound_constant(p))
    else:
        refs["upper_bound"] = run.task("upper_bound", lambda: lambda_upper_bound_periodic(p, k["tau"]))
    run.json("critical.json", {"system": k["system"], "kind": k["kind"], "results": results, "references": refs})


def _sweep_kw(cfg: ScenarioConfig, method: str) -> dict:
    return {} if method == "fold" else {"options": cfg.sim}


def _exp_heatmap(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    k = cfg.options

    def one():
        grid = diffusion_heatmap(cfg.params, grid_values(k["d12"]), grid_values(k["d21"]), k["method"],
                                 threads, **_sweep_kw(cfg, k["method"]))
        run.csv("heatmap.csv", grid.csv_rows())
        bad = int(np.isnan(grid.lambda_crit).sum())
        if bad:
            raise RuntimeError(f"{bad} grid cells failed (written as nan)")

    run.task("heatmap", one)


def _exp_ratio_sweep(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    k = cfg.options

    def one():
        sw = ratio_sweep(cfg.params, float(k["d12"]), grid_values(k["eta"]), k["method"], threads,
                         **_sweep_kw(cfg, k["method"]))
        run.csv("ratio_sweep.csv", sw.csv_rows())
        bad = int(np.isnan(sw.lambda_crit).sum())
        run.json("ratio_sweep.json", {
            "d12": sw.d12,
            "argmax_eta": sw.argmax_eta if bad < len(sw.eta) else None,
            "K1_over_K2": cfg.params.K1 / cfg.params.K2,
            "homogeneous_closed_form": homogeneous_critical_lambda(cfg.params),
        })
        if bad:
            raise RuntimeError(f"{bad} sweep points failed (written as nan)")

    run.task("ratio_sweep", one)


def _exp_compare(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    k = cfg.options
    strategies = {"constant": Constant(k["rate"]), "periodic": PeriodicImpulsive(k["rate"], k["tau"])}
    pairs = []
    for j, y0 in enumerate(cfg.initial_sets):
        entry: dict = {"initial": list(y0)}
        for label, sch in strategies.items():
            name = f"compare_{label}_init{j + 1}.csv"

            def one(sch=sch, name=name):
                traj = integrate(cfg.params, sch, y0, cfg.sim)
                run.csv(name, traj.csv_rows())
                rep = classify_trajectory(traj, sch, k["extinction_threshold"])
                return {"file": name, "outcome": rep.kind.value, "extinction_time": rep.extinction_time}

            entry[label] = run.task(name, one)
        c, q = entry.get("constant"), entry.get("periodic")
        if c and q and c["extinction_time"] is not None and q["extinction_time"] is not None:
            a, b = c["extinction_time"], q["extinction_time"]
            entry["relative_difference"] = abs(a - b) / max(a, b)
        pairs.append(entry)
    run.json("compare.json", {"rate": k["rate"], "tau": k["tau"], "pairs": pairs})


def _exp_audit(cfg: ScenarioConfig, run: _Run, threads: int) -> None:
    k = cfg.options

    def one():
        rep = monotonicity_audit(cfg.params, [tuple(x) for x in k["perturbations"]], k["method"], k["tol"],
                                 threads, **_sweep_kw(cfg, k["method"]))
        run.json("audit.json", rep.to_dict())
        failed = [e.label for e in rep.entries if not (np.isfinite(e.lower) and np.isfinite(e.upper))]
        if failed:
            raise RuntimeError(f"critical rate failed for {', '.join(failed)}")

    run.task("audit", one)


EXPERIMENT_RUNNERS = {
    "simulate": _exp_simulate,
    "equilibria": _exp_equilibria,
    "bifurcation": _exp_bifurcation,
    "critical": _exp_critical,
    "heatmap": _exp_heatmap,
    "ratio_sweep": _exp_ratio_sweep,
    "compare": _exp_compare,
    "audit": _exp_audit,
}


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_threads(cli_value: int | None, config_value: int | None) -> int:
    """Command line first, then the environment variable, then the config file."""
    if cli_value is not None:
        return resolve_workers(cli_value)
    if os.environ.get(THREADS_ENV):
        return resolve_workers(None)
    return resolve_workers(config_value or 1)


def run(config: ScenarioConfig, out_dir: str | os.PathLike | None = None, threads: int | None = None) -> RunManifest:
    """Execute ``config.experiment`` and write its outputs plus ``manifest.json``."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    before = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()}
    workers = resolve_threads(threads, config.threads)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    r = _Run(out)
    try:
        EXPERIMENT_RUNNERS[config.experiment](config, r, workers)
    except Exception as exc:  # noqa: BLE001
        r.failures.append({"task": config.experiment, "error": f"{type(exc).__name__}: {exc}",
                           "traceback": traceback.format_exc()})
    files = {name: sha256_file(out / name) for name in sorted(r.files)}
    foreign = sorted(before - set(files) - {MANIFEST_NAME})
    echo = config.to_dict()
    echo["output_dir"] = str(out)
    echo["threads"] = workers
    manifest = RunManifest(echo, __version__, started, round(time.perf_counter() - t0, 3), files,
                           r.failures, foreign)
    write_json(out / MANIFEST_NAME, manifest.to_dict())
    return manifest


def _knob_epilog(experiment: str) -> str:
    lines = [f'config section "{experiment}" (all optional, defaults shown):']
    for key, default in KNOB_DEFAULTS[experiment].items():
        lines.append(f"  {key} = {json.dumps(default)}")
        lines.append(f"      {KNOB_HELP[experiment][key]}")
    lines += [
        "",
        "common config fields: experiment, params (default values), schedule",
        '  ({"kind": "constant", "rate": R} | {"kind": "periodic", "rate": R, "tau": T}',
        '   | {"kind": "piecewise", "breakpoints": [...], "rates": [...]}), schedules (list, simulate),',
        "  initial_sets (list of 8-vectors E1,F1,M1,M1s,E2,F2,M2,M2s), sim (method, dt_max, rel_tol,",
        "  abs_tol, t_end, sample_every, clip_negative, dt_min), output_dir, threads.",
        f"environment: {THREADS_ENV} overrides the config thread count (--threads overrides both).",
    ]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sit-patch",
        description="Two-patch sterile insect release model: batch experiments writing CSV/JSON data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", metavar="<experiment>", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=EXPERIMENT_HELP[name], description=EXPERIMENT_HELP[name],
                            epilog=_knob_epilog(name), formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", metavar="FILE",
                        help="JSON scenario file; omitted fields take their defaults")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir in the config)")
        sp.add_argument("--threads", metavar="N", type=int,
                        help=f"worker processes for sweeps (overrides {THREADS_ENV} and the config)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config, args.experiment)
        else:
            cfg = config_from_dict({"experiment": args.experiment})
    except ConfigError as exc:
        print(f"sit-patch: invalid config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sit-patch: cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("sit-patch: --threads must be >= 1", file=sys.stderr)
        return 2
    manifest = run(cfg, args.out, args.threads)
    out = Path(args.out or cfg.output_dir)
    print(f"{cfg.experiment}: {len(manifest.files)} file(s) in {out} ({manifest.wall_clock_seconds:.2f} s)")
    for f in manifest.failures:
        print(f"  FAILED {f['task']}: {f['error']}", file=sys.stderr)
    return 0 if manifest.ok else 1


if __name__ == "__main__":
    sys.exit(main())
