"""Scenario configuration files (TOML) and the three built-in scenarios.

A config names its sets once in ``[sets.<name>]`` tables and refers to them by
name everywhere else. The stage sequence is either listed explicitly in
``[[stages]]`` or generated from a ``[corridor]`` table.
"""

from __future__ import annotations

import copy
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .dynamics import ControlAffineSystem, InputPolytope, get_system, linear_system
from .sets import SmoothSet, ball, ball_exterior, ellipsoid, superellipse, weighted_ball
from .spec import F, G, Interval, ReachAvoidSpec, Stage, corridor_chain

BUILTIN_NAMES = ("scenario1", "scenario2", "scenario3")
DEFAULT_TOL = 1e-6


class ConfigError(ValueError):
    """Invalid scenario configuration; ``source`` and ``line`` locate it when known."""

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None):
        self.message, self.source, self.line = message, source, line
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Check:
    """Extra monitor clause evaluated next to the stage formula."""

    op: str
    set: str
    interval: Tuple[float, float]
    label: str = ""

    def to_dict(self) -> dict:
        d = {"op": self.op, "set": self.set, "interval": [float(a) for a in self.interval]}
        if self.label:
            d["label"] = self.label
        return d


@dataclass
class ScenarioConfig:
    name: str
    system: Dict[str, Any]
    sets: Dict[str, Dict[str, Any]]
    safe: List[str]
    input: Dict[str, Any]
    controller: Dict[str, Any]
    run: Dict[str, Any]
    stages: List[Dict[str, Any]] = field(default_factory=list)
    corridor: Optional[Dict[str, Any]] = None
    checks: List[Check] = field(default_factory=list)
    description: str = ""
    source: Optional[str] = None
    text: Optional[str] = field(default=None, repr=False)

    # ------------------------------------------------------------------ I/O

    def to_dict(self) -> dict:
        d: Dict[str, Any] = {"name": self.name}
        if self.description:
            d["description"] = self.description
        d["safe"] = list(self.safe)
        d["system"] = copy.deepcopy(self.system)
        d["sets"] = copy.deepcopy(self.sets)
        if self.stages:
            d["stages"] = copy.deepcopy(self.stages)
        if self.corridor is not None:
            d["corridor"] = copy.deepcopy(self.corridor)
        d["input"] = copy.deepcopy(self.input)
        d["controller"] = copy.deepcopy(self.controller)
        d["run"] = copy.deepcopy(self.run)
        if self.checks:
            d["checks"] = [c.to_dict() for c in self.checks]
        return d

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, d: dict, source: Optional[str] = None, text: Optional[str] = None) -> "ScenarioConfig":
        ctx = _Ctx(source, text)
        if not isinstance(d, dict):
            raise ctx.error("top level must be a table")
        known = {"name", "description", "safe", "system", "sets", "stages", "corridor",
                 "input", "controller", "run", "checks"}
        extra = set(d) - known
        if extra:
            raise ctx.error(f"unknown top-level key(s): {sorted(extra)}", token=sorted(extra)[0])
        for key in ("name", "system", "sets", "input", "controller", "run"):
            if key not in d:
                raise ctx.error(f"missing required key {key!r}")
        if ("stages" in d) == ("corridor" in d):
            raise ctx.error("exactly one of [[stages]] or [corridor] is required")
        checks = []
        for c in d.get("checks", []):
            try:
                checks.append(Check(str(c["op"]), str(c["set"]), tuple(float(a) for a in c["interval"]),
                                    str(c.get("label", ""))))
            except (KeyError, TypeError, ValueError) as exc:
                raise ctx.error(f"malformed check entry {c!r}: {exc}") from None
        cfg = cls(
            name=str(d["name"]),
            description=str(d.get("description", "")),
            system=dict(d["system"]),
            sets={str(k): dict(v) for k, v in d["sets"].items()},
            safe=[str(s) for s in d.get("safe", [])],
            stages=[dict(s) for s in d.get("stages", [])],
            corridor=dict(d["corridor"]) if "corridor" in d else None,
            input=dict(d["input"]),
            controller=dict(d["controller"]),
            run=dict(d["run"]),
            checks=checks,
            source=source,
            text=text,
        )
        cfg.build()  # resolve every name and parameter now
        return cfg

    @classmethod
    def loads(cls, text: str, source: Optional[str] = None) -> "ScenarioConfig":
        try:
            d = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"TOML syntax error: {exc}", source, int(m.group(1)) if m else None) from None
        return cls.from_dict(d, source=source, text=text)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
        return cls.loads(text, source=str(p))

    # ------------------------------------------------------------ building

    def build(self) -> "BuiltScenario":
        ctx = _Ctx(self.source, self.text)
        sets = {}
        for name, sd in self.sets.items():
            try:
                sets[name] = _make_set(name, sd)
            except (KeyError, TypeError, ValueError) as exc:
                raise ctx.error(f"set {name!r}: {exc}", token=f"sets.{name}") from None
        dims = {s.dim for s in sets.values()}
        if len(dims) > 1:
            raise ctx.error(f"sets have mixed dimensions {sorted(dims)}")

        def ref(name, where):
            if name not in sets:
                raise ctx.error(f"{where} refers to unknown set {name!r}", token=f'"{name}"')
            return sets[name]

        system = _make_system(self.system, ctx)
        U = _make_input(self.input, system.input_dim, ctx)
        safe = [ref(n, "safe") for n in self.safe]

        if self.corridor is not None:
            c = self.corridor
            try:
                spec = corridor_chain(
                    [ref(n, "corridor.targets") for n in c["targets"]],
                    ref(c["obstacle"], "corridor.obstacle") if c.get("obstacle") else None,
                    [ref(n, "corridor.waypoints") for n in c["waypoints"]],
                    [float(t) for t in c["deadlines"]],
                    safe_sets=safe, input_polytope=U, t0=float(c.get("t0", 0.0)),
                    final_hold=c.get("final_hold"), breakpoints=c.get("breakpoints"),
                )
            except KeyError as exc:
                raise ctx.error(f"corridor is missing key {exc}", token="corridor") from None
            except ValueError as exc:
                raise ctx.error(f"corridor: {exc}", token="corridor") from None
            min_dwell = float(self.controller.get("T_bar", spec.min_dwell))
            spec = ReachAvoidSpec(spec.safe_sets, spec.stages, spec.input_polytope, min_dwell)
        else:
            try:
                stages = tuple(Stage(ref(s["set"], "stages"), float(s["t_start"]), float(s["t_end"]))
                               for s in self.stages)
            except KeyError as exc:
                raise ctx.error(f"stage entry is missing key {exc}", token="stages") from None
            dwell = min(s.t_end - s.t_start for s in stages)
            min_dwell = float(self.controller.get("T_bar", dwell))
            try:
                spec = ReachAvoidSpec(tuple(safe), stages, U, min_dwell)
            except ValueError as exc:
                raise ctx.error(str(exc), token="stages") from None

        if {s.dim for s in spec.all_sets()} != {system.state_dim}:
            raise ctx.error(f"sets do not match the system state dimension {system.state_dim}")

        mu = float(self.controller.get("mu", 5.0))
        if not mu > 1:
            raise ctx.error("controller.mu must be > 1", token="mu")

        run = self.run
        dt = float(run.get("dt", 1e-3))
        if not dt > 0:
            raise ctx.error("run.dt must be positive", token="dt")
        t_span = tuple(float(t) for t in run.get("t_span", (spec.stages[0].t_start, spec.t_final)))
        if len(t_span) != 2 or not t_span[1] > t_span[0]:
            raise ctx.error("run.t_span must be [t_a, t_b] with t_b > t_a", token="t_span")
        ics = [np.asarray(x, dtype=float) for x in run.get("initial_conditions", [])]
        for x in ics:
            if x.shape != (system.state_dim,):
                raise ctx.error(f"initial condition {x.tolist()} does not have {system.state_dim} entries",
                                token="initial_conditions")
        tol = float(run.get("tol", DEFAULT_TOL))
        if tol < 0:
            raise ctx.error("run.tol must be nonnegative", token="tol")

        checks = []
        for c in self.checks:
            if c.op not in ("F", "G"):
                raise ctx.error(f"check op must be 'F' or 'G', got {c.op!r}", token=c.op)
            a, b = c.interval
            node = (F if c.op == "F" else G)(Interval(a, b), _predicate(ref(c.set, "checks")))
            checks.append((c.label or f"{c.op}_[{a:g},{b:g}] {c.set}", node))
        return BuiltScenario(self, system, spec, sets, mu, dt, t_span, ics, tol,
                             bool(run.get("half_open", False)), checks)

    def replace_run(self, **kw) -> "ScenarioConfig":
        """Copy with entries of the [run] / [controller] tables overridden (None values ignored)."""
        new = copy.deepcopy(self)
        for k, v in kw.items():
            if v is None:
                continue
            if k == "mu":
                new.controller["mu"] = float(v)
            else:
                new.run[k] = v
        new.text = None
        new.build()
        return new


@dataclass
class BuiltScenario:
    config: ScenarioConfig
    system: ControlAffineSystem
    spec: ReachAvoidSpec
    sets: Dict[str, SmoothSet]
    mu: float
    dt: float
    t_span: Tuple[float, float]
    initial_conditions: List[np.ndarray]
    tol: float
    half_open: bool
    checks: list

    @property
    def tracked_sets(self) -> List[SmoothSet]:
        return list(self.sets.values())


class _Ctx:
    def __init__(self, source, text):
        self.source, self.text = source, text

    def line_of(self, token: Optional[str]) -> Optional[int]:
        if not token or not self.text:
            return None
        for i, line in enumerate(self.text.splitlines(), 1):
            if token in line:
                return i
        return None

    def error(self, msg, token=None) -> ConfigError:
        return ConfigError(msg, self.source, self.line_of(token))


def _predicate(s: SmoothSet):
    from .spec import Predicate

    return Predicate(s)


def _make_set(name: str, d: dict) -> SmoothSet:
    d = dict(d)
    d.setdefault("name", name)
    if d["name"] != name:
        raise ValueError(f"name field {d['name']!r} differs from the table name")
    return SmoothSet.from_dict(d)


def _make_system(d: dict, ctx: _Ctx) -> ControlAffineSystem:
    d = dict(d)
    name = d.get("name")
    if name is None:
        raise ctx.error("system.name is required", token="[system]")
    try:
        if name == "linear":
            return linear_system(d["A"], d["B"])
        return get_system(name, **d.get("params", {}))
    except KeyError as exc:
        raise ctx.error(f"system {name!r} is missing key {exc}", token="[system]") from None
    except (TypeError, ValueError) as exc:
        raise ctx.error(f"system {name!r}: {exc}", token=str(name)) from None


def _make_input(d: dict, m: int, ctx: _Ctx) -> InputPolytope:
    try:
        if "box" in d:
            b = float(d["box"])
            if not math.isfinite(b) or b <= 0:
                raise ValueError("box bound must be a positive number")
            return InputPolytope.box(b, m)
        if d.get("unbounded"):
            return InputPolytope.unbounded(m)
        U = InputPolytope(np.asarray(d["A_u"], dtype=float).reshape(-1, m), d["b_u"])
    except KeyError as exc:
        raise ctx.error(f"input table is missing key {exc}", token="[input]") from None
    except ValueError as exc:
        raise ctx.error(f"input: {exc}", token="[input]") from None
    return U


# --------------------------------------------------------------------------
# built-in scenarios


def _sets(*items: SmoothSet) -> Dict[str, dict]:
    out = {}
    for s in items:
        d = s.to_dict()
        d.pop("name", None)
        out[s.name] = d
    return out


def scenario1() -> ScenarioConfig:
    S1 = ball((0.0, 0.0), 1.0, name="S1")
    S2 = ellipsoid((0.0, 0.0), (9.0, 0.9), name="S2")
    return ScenarioConfig(
        name="scenario1",
        description="Reach the unit disc S1 by t = 10 while staying in the ellipse S2; unstable planar drift, scalar input.",
        system={"name": "scenario1"},
        sets=_sets(S1, S2),
        safe=["S2"],
        stages=[{"set": "S2", "t_start": 0.0, "t_end": 10.0}, {"set": "S1", "t_start": 10.0, "t_end": 20.0}],
        input={"box": 50.0},
        controller={"mu": 5.0, "T_bar": 10.0},
        run={"dt": 1e-3, "t_span": [0.0, 20.0], "tol": DEFAULT_TOL,
             "initial_conditions": [[4.0, 0.5], [-4.0, 0.5], [4.0, -0.5], [-4.0, -0.5]],
             "out_dir": "out/scenario1"},
    )


def scenario2() -> ScenarioConfig:
    S1 = ball((10.0, 5.0), 10.0, name="S1")
    S2 = ball((10.0, 0.0), 5.0, name="S2")
    W = ball((10.0, 5.0), 40.0, name="workspace")
    # zero-slack points on the radius-11 ring about (10, 5)
    ics = [[2.93, -3.43], [4.5, -4.53], [15.5, -4.53], [17.07, -3.43]]
    return ScenarioConfig(
        name="scenario2",
        description="F_[5,15] S2 and G_[5,15] S1 with S1 reached by t = 5; single integrator, inputs boxed to +/-7.",
        system={"name": "single_integrator", "params": {"m": 2}},
        sets=_sets(W, S1, S2),
        safe=[],
        stages=[{"set": "workspace", "t_start": 0.0, "t_end": 5.0},
                {"set": "S1", "t_start": 5.0, "t_end": 15.0},
                {"set": "S2", "t_start": 15.0, "t_end": 20.0}],
        input={"box": 7.0},
        controller={"mu": 5.0, "T_bar": 5.0},
        run={"dt": 1e-3, "t_span": [0.0, 20.0], "tol": DEFAULT_TOL, "initial_conditions": ics,
             "out_dir": "out/scenario2"},
        checks=[Check("F", "S1", (0.0, 5.0), "reach S1 by t=5"),
                Check("G", "S1", (5.0, 15.0), "phi2: G_[5,15] S1"),
                Check("F", "S2", (5.0, 15.0), "phi1: F_[5,15] S2")],
    )


def scenario3(obstacle_radius: float = 1.0, u_max: float = 10.0, n: int = 8) -> ScenarioConfig:
    corners = {"C1": (-1.5, 1.5), "C2": (1.5, 1.5), "C3": (1.5, -1.5), "C4": (-1.5, -1.5)}
    P1, P2 = (1.2, 0.5), (0.5, 1.2)
    way = [
        ball(corners["C1"], 1.0, name="Sb1"),
        weighted_ball((0.0, 1.5), P1, 1.0, name="Sb2"),
        ball(corners["C2"], 1.0, name="Sb3"),
        weighted_ball((1.5, 0.0), P2, 1.0, name="Sb4"),
        ball(corners["C3"], 1.0, name="Sb5"),
        weighted_ball((0.0, -1.5), P1, 1.0, name="Sb6"),
        ball(corners["C4"], 1.0, name="Sb7"),
        weighted_ball((-1.5, 0.0), P2, 1.0, name="Sb8"),
    ]
    targets = [superellipse(c, 0.5, n, name=k) for k, c in corners.items()]
    square = superellipse((0.0, 0.0), 2.0, n, name="square")
    obstacle = ball_exterior((0.0, 0.0), obstacle_radius, name="obstacle")
    deadlines = [2.0, 4.0, 6.0, 8.0]
    order = ["C2", "C3", "C4", "C1"]
    return ScenarioConfig(
        name="scenario3",
        description="Visit C2, C3, C4, C1 by t = 2, 4, 6, 8 inside the square and outside the obstacle, "
                    "through a closed chain of eight overlapping waypoint sets.",
        system={"name": "single_integrator", "params": {"m": 2}},
        sets=_sets(square, obstacle, *targets, *way),
        safe=["square"],
        corridor={"targets": order, "obstacle": "obstacle", "waypoints": [w.name for w in way],
                  "deadlines": deadlines},
        input={"box": float(u_max)},
        controller={"mu": 5.0},
        run={"dt": 1e-3, "tol": DEFAULT_TOL, "half_open": True,
             "initial_conditions": [[-1.5, 1.9]], "out_dir": "out/scenario3"},
        checks=[Check("F", t, (0.0 if i == 0 else deadlines[i - 1], deadlines[i]), f"visit {t} by t={deadlines[i]:g}")
                for i, t in enumerate(order)],
    )


BUILTINS = {"scenario1": scenario1, "scenario2": scenario2, "scenario3": scenario3}


def resolve(name_or_path: str) -> ScenarioConfig:
    """Built-in scenario by name, else a TOML file path."""
    if name_or_path in BUILTINS:
        return BUILTINS[name_or_path]()
    return ScenarioConfig.load(name_or_path)
