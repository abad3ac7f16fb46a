"""Command-line scenario runner.

    ptcbf run --scenario scenario1
    ptcbf run --scenario my.toml --x0 1,2 --x0 3,4 --jobs 4
    ptcbf validate --scenario my.toml
    ptcbf plot --traj out/scenario1/traj_0.csv --scenario scenario1
    ptcbf show --scenario scenario3
    ptcbf export --dir scenarios

Exit codes: 0 success, 1 spec violated or slack used, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import BUILTIN_NAMES, BUILTINS, BuiltScenario, ConfigError, ScenarioConfig, resolve
from .monitor import MonitorReport, check_formula
from .output import emit_plot_data, read_trajectory_csv, write_rows, write_trajectory_csv
from .sim import SimulationError, simulate
from .spec import to_stl, validate
from .synthesis import ControllerError, MultiStageController

EXIT_OK, EXIT_VIOLATED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SLACK_TOL = 1e-6
OUT_ENV = "PTCBF_OUT_DIR"


@dataclass
class RunResult:
    index: int
    x0: np.ndarray
    verdict: bool
    report: MonitorReport
    checks: List[tuple]
    reach_times: List[float]
    max_slack: float
    max_unorm: float
    wall_time: float
    traj: object = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return self.verdict and self.max_slack <= SLACK_TOL


def reach_times(built: BuiltScenario, traj) -> List[float]:
    """First sample in [t_{i-1}, t_i] at which stage i's set holds (NaN if never)."""
    spec, tol = built.spec, built.tol
    bp = spec.breakpoints
    out = []
    for i in range(1, spec.N + 1):
        s = spec.stages[i].set
        h = traj.h_values.get(s.name) if s.name else None
        h = traj.h(s) if h is None else h
        win = (traj.times >= bp[i - 1]) & (traj.times <= bp[i]) & (h <= tol)
        idx = np.flatnonzero(win)
        out.append(float(traj.times[idx[0]]) if idx.size else float("nan"))
    return out


def run_one(built: BuiltScenario, x0, index: int = 0) -> RunResult:
    """Simulate and monitor a single initial condition."""
    spec = built.spec
    ctl = MultiStageController(spec, mu=built.mu, T_bar=spec.min_dwell).fit(built.system)
    start = time.perf_counter()
    traj = simulate(built.system, ctl, x0, built.t_span, built.dt, breakpoints=spec.breakpoints,
                    tracked_sets=built.tracked_sets, input_polytope=spec.input_polytope)
    wall = time.perf_counter() - start
    report = check_formula(traj, to_stl(spec, half_open=built.half_open, check=False), tol=built.tol)
    checks = []
    for label, node in built.checks:
        checks.append((label, check_formula(traj, node, tol=built.tol).verdict))
    verdict = report.verdict and all(v for _, v in checks)
    unorm = np.linalg.norm(traj.inputs, axis=1) if len(traj) else np.zeros(1)
    return RunResult(index, np.asarray(x0, dtype=float), verdict, report, checks, reach_times(built, traj),
                     float(traj.slack.max()) if len(traj) else 0.0, float(unorm.max()), wall, traj)


def _worker(args):
    cfg_dict, x0, index = args
    built = ScenarioConfig.from_dict(cfg_dict).build()
    return run_one(built, x0, index)


def run_scenario(cfg: ScenarioConfig, out_dir, jobs: int = 1, initial_conditions=None) -> List[RunResult]:
    """Run every initial condition, writing ``traj_<k>.csv``, ``monitor_<k>.json`` and ``summary.csv``."""
    built = cfg.build()
    ics = [np.asarray(x, dtype=float) for x in (initial_conditions if initial_conditions is not None
                                                else built.initial_conditions)]
    if not ics:
        raise ConfigError("no initial conditions given", cfg.source)
    for x in ics:
        if x.shape != (built.system.state_dim,):
            raise ConfigError(f"initial condition {x.tolist()} does not have {built.system.state_dim} entries",
                              cfg.source)
    rep = validate(built.spec)
    if not rep.ok:
        raise ConfigError(f"specification is invalid:\n{rep}", cfg.source)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = min(jobs, os.cpu_count() or 1, len(ics))
    if jobs > 1:
        d = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_worker, [(d, x, k) for k, x in enumerate(ics)]))
    else:
        results = [run_one(built, x, k) for k, x in enumerate(ics)]
    for r in results:
        write_trajectory_csv(r.traj, out / f"traj_{r.index}.csv")
        (out / f"monitor_{r.index}.json").write_text(json.dumps(
            {"x0": r.x0.tolist(), "verdict": r.verdict, "formula": r.report.to_dict(),
             "checks": [{"label": lab, "verdict": v} for lab, v in r.checks]}, indent=2) + "\n")
    stage_cols = [f"reach_{i}_{s.set.name or s.set.kind}" for i, s in enumerate(built.spec.stages) if i > 0]
    write_rows(out / "summary.csv",
               ["ic"] + [f"x0_{j + 1}" for j in range(built.system.state_dim)]
               + ["verdict"] + stage_cols + ["max_slack", "max_unorm", "wall_time"],
               ([r.index] + [float(v) for v in r.x0] + [str(r.verdict).lower()] + r.reach_times
                + [r.max_slack, r.max_unorm, r.wall_time] for r in results))
    return results


# ------------------------------------------------------------------ argparse


def _parse_x0(s: str) -> List[float]:
    try:
        return [float(v) for v in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptcbf", description="Prescribed-time CLF/ZCBF scenario runner.")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate a scenario from each initial condition")
    r.add_argument("--scenario", required=True, help=f"built-in name ({', '.join(BUILTIN_NAMES)}) or TOML path")
    r.add_argument("--x0", type=_parse_x0, action="append", help="initial condition a,b,...; repeatable")
    r.add_argument("--dt", type=float)
    r.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or the config's run.out_dir)")
    r.add_argument("--tol", type=float, help="monitor tolerance on h")
    r.add_argument("--mu", type=float)
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    v = sub.add_parser("validate", help="parse a config and check the reach-avoid assumptions")
    v.add_argument("--scenario", required=True)

    pl = sub.add_parser("plot", help="write plot-ready data for a trajectory CSV")
    pl.add_argument("--traj", required=True)
    pl.add_argument("--scenario", required=True)
    pl.add_argument("--out", help="directory for the plot files (default: next to the CSV)")

    s = sub.add_parser("show", help="print the stage sequence and temporal-logic formula")
    s.add_argument("--scenario", required=True)

    e = sub.add_parser("export", help="write the built-in scenarios as TOML files")
    e.add_argument("--dir", default="scenarios")
    return p


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV]) / cfg.name
    return Path(cfg.run.get("out_dir", f"out/{cfg.name}"))


def _cmd_run(args) -> int:
    cfg = resolve(args.scenario)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    cfg = cfg.replace_run(dt=args.dt, tol=args.tol, mu=args.mu)
    out = _out_dir(args, cfg)
    results = run_scenario(cfg, out, jobs=args.jobs, initial_conditions=args.x0)
    for r in results:
        x0 = ",".join(f"{v:g}" for v in r.x0)
        status = "ok" if r.ok else "FAIL"
        print(f"[{status}] ic {r.index} x0=({x0}) formula={str(r.report.verdict).lower()} "
              f"verdict={str(r.verdict).lower()} "
              f"max_slack={r.max_slack:.3g} max|u|={r.max_unorm:.4g} wall={r.wall_time:.2f}s")
        for c in r.report.failed():
            print(f"    violated: {c}")
        for label, ok in r.checks:
            if not ok:
                print(f"    check failed: {label}")
    print(f"wrote {out}/summary.csv")
    return EXIT_OK if all(r.ok for r in results) else EXIT_VIOLATED


def _cmd_validate(args) -> int:
    cfg = resolve(args.scenario)
    built = cfg.build()
    rep = validate(built.spec)
    print(f"{cfg.name}: {built.spec.N + 1} stages, {len(built.spec.safe_sets)} safe set(s), "
          f"{len(built.initial_conditions)} initial condition(s)")
    if not rep.ok:
        print(rep)
        raise ConfigError("specification violates its assumptions", cfg.source)
    print("valid")
    return EXIT_OK


def _cmd_plot(args) -> int:
    cfg = resolve(args.scenario)
    built = cfg.build()
    try:
        traj = read_trajectory_csv(args.traj)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trajectory: {exc}", args.traj) from None
    out = Path(args.out) if args.out else Path(args.traj).parent
    prefix = Path(args.traj).stem
    for p in emit_plot_data(traj, built.tracked_sets, out, prefix):
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_show(args) -> int:
    cfg = resolve(args.scenario)
    built = cfg.build()
    spec = built.spec
    print(f"{cfg.name}: {cfg.description}")
    print("safe: " + (", ".join(s.name for s in spec.safe_sets) or "none"))
    for i, s in enumerate(spec.stages):
        print(f"  stage {i}: {s.set.name:<10} [{s.t_start:g}, {s.t_end:g}]")
    print(to_stl(spec, half_open=built.half_open, check=False))
    return EXIT_OK


def _cmd_export(args) -> int:
    d = Path(args.dir)
    d.mkdir(parents=True, exist_ok=True)
    for name in BUILTIN_NAMES:
        BUILTINS[name]().save(d / f"{name}.toml")
        print(f"wrote {d / name}.toml")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "plot": _cmd_plot, "show": _cmd_show,
             "export": _cmd_export}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, ControllerError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
