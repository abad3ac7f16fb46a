"""Timed reach-avoid specifications and their STL formulas.

A specification is a list of safe sets (all of which must hold at every
time) and an ordered list of stages. Stage i is active on [t_i, t_{i+1}):
the state must stay in its set while reaching the next stage's set by
t_{i+1}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .dynamics import InputPolytope
from .sets import SmoothSet, boundary_points

TIME_TOL = 1e-9
OVERLAP_TOL = 1e-9


@dataclass(frozen=True)
class Stage:
    set: SmoothSet
    t_start: float
    t_end: float


@dataclass(frozen=True)
class ReachAvoidSpec:
    safe_sets: Tuple[SmoothSet, ...]
    stages: Tuple[Stage, ...]
    input_polytope: InputPolytope
    min_dwell: float

    def __post_init__(self):
        object.__setattr__(self, "safe_sets", tuple(self.safe_sets))
        stages = tuple(s if isinstance(s, Stage) else Stage(*s) for s in self.stages)
        object.__setattr__(self, "stages", stages)

    @property
    def N(self) -> int:
        """Index of the final stage (number of stage transitions)."""
        return len(self.stages) - 1

    @property
    def breakpoints(self) -> List[float]:
        """[t_0, t_1, ..., t_{N+1}]."""
        if not self.stages:
            return []
        return [s.t_start for s in self.stages] + [self.stages[-1].t_end]

    @property
    def t_final(self) -> float:
        return self.stages[-1].t_end

    def stage_index(self, t: float) -> int:
        """Unique i with t in [t_i, t_{i+1}); the final stage also owns its end point."""
        bp = self.breakpoints
        if not bp or t < bp[0] - TIME_TOL or t > bp[-1] + TIME_TOL:
            raise ValueError(f"time {t} outside the specification horizon [{bp[0]}, {bp[-1]}]")
        i = int(np.searchsorted(bp, t + TIME_TOL, side="right")) - 1
        return min(max(i, 0), len(self.stages) - 1)

    def all_sets(self) -> List[SmoothSet]:
        seen, out = set(), []
        for s in list(self.safe_sets) + [st.set for st in self.stages]:
            key = s.name or repr(s)
            if key not in seen:
                seen.add(key)
                out.append(s)
        return out


# --------------------------------------------------------------------------
# STL formula tree


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    left_open: bool = False

    def __post_init__(self):
        if self.a > self.b:
            raise ValueError(f"interval [{self.a}, {self.b}] is not ordered")

    def __str__(self):
        return f"{'(' if self.left_open else '['}{_fmt(self.a)},{_fmt(self.b)}]"


@dataclass(frozen=True)
class Predicate:
    set: SmoothSet

    def __str__(self):
        return f"phi_{self.set.name or self.set.kind}"


@dataclass(frozen=True)
class Not:
    child: "Formula"

    def __str__(self):
        return f"!{self.child}"


@dataclass(frozen=True)
class And:
    children: Tuple["Formula", ...]

    def __str__(self):
        return " & ".join(str(c) for c in self.children)


@dataclass(frozen=True)
class G:
    interval: Interval
    child: "Formula"

    def __str__(self):
        return f"G_{self.interval} {self.child}"


@dataclass(frozen=True)
class F:
    interval: Interval
    child: "Formula"

    def __str__(self):
        return f"F_{self.interval} {self.child}"


@dataclass(frozen=True)
class Until:
    """Representable for completeness; the monitor does not evaluate it."""

    interval: Interval
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"({self.left} U_{self.interval} {self.right})"


Formula = object


def _fmt(t: float) -> str:
    return f"{t:g}"


def count_conjuncts(f) -> int:
    if isinstance(f, And):
        return sum(count_conjuncts(c) for c in f.children)
    return 1


# --------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    kind: str
    message: str
    indices: Tuple[int, ...] = ()


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(f"[{v.kind}] {v.message}" for v in self.violations)


def _bbox(s: SmoothSet):
    c = np.array(s.center)
    if s.kind == "ball-exterior":
        return None
    if s.kind in ("ball-interior", "superellipse-interior"):
        r = np.full(s.dim, s.radius)
    elif s.kind == "ellipsoid-interior":
        r = np.array(s.semi_axes)
    else:
        r = s.radius * np.array(s.semi_axes)
    return c - r, c + r


def find_overlap(s1: SmoothSet, s2: SmoothSet, grid: int = 21):
    """Minimise max(h1, h2); returns (value, witness). value <= 0 means overlap."""
    b1, b2 = _bbox(s1), _bbox(s2)
    if b1 is None and b2 is None:
        lo = np.minimum(np.array(s1.center), np.array(s2.center)) - 3 * max(s1.radius, s2.radius)
        hi = np.maximum(np.array(s1.center), np.array(s2.center)) + 3 * max(s1.radius, s2.radius)
    elif b1 is None or b2 is None:
        lo, hi = b2 if b1 is None else b1
    else:
        lo, hi = np.maximum(b1[0], b2[0]), np.minimum(b1[1], b2[1])
        if np.any(lo > hi + 1e-12):
            # Bounding boxes are disjoint; report the gap between the centres' boxes.
            lo, hi = np.minimum(b1[0], b2[0]), np.maximum(b1[1], b2[1])
    pad = 1e-6 * np.maximum(1.0, hi - lo)
    lo, hi = lo - pad, hi + pad

    def obj(x):
        return max(s1.value(x), s2.value(x))

    axes = [np.linspace(l, h, grid) for l, h in zip(lo, hi)]
    best_x, best_v = None, np.inf
    for pt in itertools.product(*axes):
        v = obj(np.array(pt))
        if v < best_v:
            best_x, best_v = np.array(pt), v
    if best_v <= -OVERLAP_TOL:
        return best_v, best_x
    res = minimize(obj, best_x, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    if res.fun < best_v:
        best_x, best_v = res.x, float(res.fun)
    return best_v, best_x


def validate(spec: ReachAvoidSpec) -> ValidationReport:
    """List every violated assumption; an empty report means the problem is usable."""
    rep = ValidationReport()
    st = spec.stages
    for i, s in enumerate(st):
        if s.t_end <= s.t_start:
            rep.violations.append(Violation("time-order", f"stage {i} has t_end <= t_start", (i,)))
        if s.t_end - s.t_start < spec.min_dwell - TIME_TOL:
            rep.violations.append(Violation(
                "dwell", f"stage {i} lasts {s.t_end - s.t_start:g} s < minimum dwell {spec.min_dwell:g} s", (i,)))
    for i in range(len(st) - 1):
        if abs(st[i].t_end - st[i + 1].t_start) > TIME_TOL:
            rep.violations.append(Violation(
                "time-order", f"stage {i} ends at {st[i].t_end:g} but stage {i + 1} starts at {st[i + 1].t_start:g}",
                (i, i + 1)))
        if st[i + 1].t_start <= st[i].t_start:
            rep.violations.append(Violation("time-order", f"stage {i + 1} does not start after stage {i}", (i, i + 1)))
    if spec.min_dwell <= 0:
        rep.violations.append(Violation("dwell", "minimum dwell must be positive"))

    dims = {s.dim for s in spec.all_sets()}
    if len(dims) > 1:
        rep.violations.append(Violation("dimension", f"sets have mixed dimensions {sorted(dims)}"))
        return rep

    if spec.input_polytope.n_rows and not spec.input_polytope._nonempty():
        rep.violations.append(Violation("input", "input polytope is empty"))

    for i in range(len(st) - 1):
        v, w = find_overlap(st[i].set, st[i + 1].set)
        if v > OVERLAP_TOL:
            rep.violations.append(Violation(
                "overlap", f"stage sets {i} ({_label(st[i].set)}) and {i + 1} ({_label(st[i + 1].set)}) do not overlap "
                f"(min max(h_i, h_i+1) = {v:.3g})", (i, i + 1)))
        else:
            rep.witnesses[("stage", i, i + 1)] = w
    if st:
        for j, s in enumerate(spec.safe_sets):
            v, w = find_overlap(st[0].set, s)
            if v > OVERLAP_TOL:
                rep.violations.append(Violation(
                    "safe-overlap", f"first stage set does not meet safe set {j} ({_label(s)})", (j,)))
            else:
                rep.witnesses[("safe", j)] = w
    return rep


def _label(s: SmoothSet) -> str:
    return s.name or s.kind


# --------------------------------------------------------------------------
# STL translation


def to_stl(spec: ReachAvoidSpec, half_open: bool = False, check: bool = True) -> And:
    """Conjunction of G over the safe sets and a (G, F) pair per stage transition.

    With ``half_open`` every stage window after the first is written (t_i, t_{i+1}].
    """
    if check:
        rep = validate(spec)
        if not rep.ok:
            raise ValueError(f"invalid specification:\n{rep}")
    bp = spec.breakpoints
    N = spec.N
    clauses: list = []
    if bp:
        horizon = Interval(bp[0], bp[N])
        clauses += [G(horizon, Predicate(s)) for s in spec.safe_sets]
    for i in range(N):
        iv = Interval(bp[i], bp[i + 1], left_open=half_open and i > 0)
        clauses.append(G(iv, Predicate(spec.stages[i].set)))
        clauses.append(F(iv, Predicate(spec.stages[i + 1].set)))
    return And(tuple(clauses))


# --------------------------------------------------------------------------
# corridor construction


def _sample_surface(s: SmoothSet, k: int = 180) -> np.ndarray:
    if s.dim == 2:
        return boundary_points(s, k)
    rng = np.random.default_rng(0)
    d = rng.normal(size=(k, s.dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    lo, hi = _bbox(s)
    return np.array(s.center) + d * (hi - lo) / 2


def is_contained(inner: SmoothSet, outer: SmoothSet, tol: float = 1e-9) -> bool:
    pts = np.vstack([_sample_surface(inner), np.array(inner.center)[None, :]])
    return bool(np.all(outer.values(pts) <= tol))


def corridor_chain(
    targets: Sequence[SmoothSet],
    obstacle: Optional[SmoothSet],
    waypoint_sets: Sequence[SmoothSet],
    deadlines: Sequence[float],
    safe_sets: Sequence[SmoothSet] = (),
    input_polytope: Optional[InputPolytope] = None,
    t0: float = 0.0,
    final_hold: Optional[float] = None,
    breakpoints: Optional[Sequence[float]] = None,
) -> ReachAvoidSpec:
    """Package a hand-built chain of overlapping waypoint sets into a timed spec.

    Targets are matched in order to the first later waypoint containing them;
    if the last targets only fit the starting waypoint the chain is closed by
    repeating it. Breakpoints split each deadline window evenly across the
    waypoints traversed in it; ``breakpoints`` overrides the stage start
    times (deadlines must stay in place).
    """
    targets, waypoints = list(targets), list(waypoint_sets)
    deadlines = [float(d) for d in deadlines]
    if len(deadlines) != len(targets):
        raise ValueError("one deadline per target is required")
    if not waypoints:
        raise ValueError("at least one waypoint set is required")
    if any(b <= a for a, b in zip([t0] + deadlines, deadlines)):
        raise ValueError("deadlines must be strictly increasing and after t0")

    for i in range(len(waypoints) - 1):
        v, _ = find_overlap(waypoints[i], waypoints[i + 1])
        if v > OVERLAP_TOL:
            raise ValueError(f"waypoint sets {i} ({_label(waypoints[i])}) and {i + 1} "
                             f"({_label(waypoints[i + 1])}) do not overlap")

    def assign(seq):
        idx, prev = [], -1
        for j, tgt in enumerate(targets):
            start = prev + 1 if (prev >= 0 or j > 0) else 0
            k = next((k for k in range(start, len(seq)) if is_contained(tgt, seq[k])), None)
            if k is None:
                return None, j
            idx.append(k)
            prev = k
        return idx, None

    seq = waypoints
    idx, bad = assign(seq)
    if idx is None and len(waypoints) > 1:
        v, _ = find_overlap(waypoints[-1], waypoints[0])
        if v <= OVERLAP_TOL:
            seq = waypoints + [waypoints[0]]
            idx, bad = assign(seq)
    if idx is None:
        raise ValueError(f"target {bad} ({_label(targets[bad])}) is not contained in any remaining waypoint set")
    seq = seq[: idx[-1] + 1]

    # breakpoint times t_k for k = 0..len(seq)-1 (reach time of stage k)
    times = np.full(len(seq), np.nan)
    times[0] = t0
    prev_k, prev_t = 0, t0
    for k, d in zip(idx, deadlines):
        if k == 0:
            continue
        times[prev_k: k + 1] = np.linspace(prev_t, d, k - prev_k + 1)
        prev_k, prev_t = k, d
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        if bp.shape != times.shape:
            raise ValueError(f"{bp.size} breakpoints given, the chain has {times.size} stages")
        if np.any(np.abs(bp[[0] + idx] - times[[0] + idx]) > 1e-12):
            raise ValueError("breakpoint override must keep t0 and every target deadline in place")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        times = bp
    windows = np.diff(times)
    if idx[-1] == 0:
        end = deadlines[0]
    else:
        hold = final_hold if final_hold is not None else float(windows.min())
        end = times[-1] + hold
    ends = list(times[1:]) + [end]
    stages = tuple(Stage(s, float(a), float(b)) for s, a, b in zip(seq, times, ends))
    dwell = float(min(b - a for a, b in zip(times, ends)))

    safe = list(safe_sets) + ([obstacle] if obstacle is not None else [])
    U = input_polytope if input_polytope is not None else InputPolytope.unbounded(waypoints[0].dim)
    spec = ReachAvoidSpec(tuple(safe), stages, U, dwell)
    rep = validate(spec)
    if not rep.ok:
        raise ValueError(f"corridor specification is invalid:\n{rep}")
    return spec
