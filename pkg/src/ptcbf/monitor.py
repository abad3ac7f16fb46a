"""Boolean STL monitoring of sampled trajectories.

Intervals are absolute times. Only samples are inspected, so a violation
strictly between two samples goes unnoticed. A left-open interval (a, b]
starts at the first sample strictly after a.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .sets import SmoothSet
from .sim import Trajectory
from .spec import And, F, G, Interval, Not, Predicate

TIME_EPS = 1e-9


def _as_interval(interval) -> Interval:
    if isinstance(interval, Interval):
        return interval
    a, b = interval
    return Interval(float(a), float(b))


def _window(traj: Trajectory, interval) -> np.ndarray:
    iv = _as_interval(interval)
    t = traj.times
    if t.size == 0 or iv.a < t[0] - TIME_EPS or iv.b > t[-1] + TIME_EPS:
        raise ValueError(f"interval {iv} is outside the trajectory range "
                         f"[{t[0] if t.size else np.nan:g}, {t[-1] if t.size else np.nan:g}]")
    lo = t > iv.a + TIME_EPS if iv.left_open else t >= iv.a - TIME_EPS
    return np.flatnonzero(lo & (t <= iv.b + TIME_EPS))


def check_G(traj: Trajectory, s: SmoothSet, interval, tol: float = 0.0) -> bool:
    """h(x(t_k)) <= tol at every sample t_k in the interval."""
    idx = _window(traj, interval)
    return bool(np.all(s.values(traj.states[idx]) <= tol))


def check_F(traj: Trajectory, s: SmoothSet, interval, tol: float = 0.0) -> bool:
    """h(x(t_k)) <= tol at some sample t_k in the interval."""
    idx = _window(traj, interval)
    return bool(np.any(s.values(traj.states[idx]) <= tol))


@dataclass
class ClauseResult:
    op: str
    label: str
    interval: Interval
    verdict: bool
    first_violation: Optional[float] = None
    first_satisfaction: Optional[float] = None

    def __str__(self):
        s = f"{self.op}_{self.interval} {self.label}: {'true' if self.verdict else 'FALSE'}"
        if self.first_violation is not None:
            s += f" (first violation t={self.first_violation:g})"
        return s


@dataclass
class MonitorReport:
    verdict: bool
    clauses: List[ClauseResult] = field(default_factory=list)

    def failed(self) -> List[ClauseResult]:
        return [c for c in self.clauses if not c.verdict]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "clauses": [
                {"op": c.op, "formula": c.label, "interval": str(c.interval), "verdict": c.verdict,
                 "first_violation": c.first_violation, "first_satisfaction": c.first_satisfaction}
                for c in self.clauses
            ],
        }


def _pointwise(traj: Trajectory, node, idx, tol) -> np.ndarray:
    """Truth values of a state formula (no temporal operators) at samples idx."""
    if isinstance(node, Predicate):
        return node.set.values(traj.states[idx]) <= tol
    if isinstance(node, Not):
        return ~_pointwise(traj, node.child, idx, tol)
    if isinstance(node, And):
        out = np.ones(idx.size, dtype=bool)
        for c in node.children:
            out &= _pointwise(traj, c, idx, tol)
        return out
    raise ValueError(f"unsupported formula node inside a temporal operator: {type(node).__name__}")


def _eval(traj: Trajectory, node, tol, clauses) -> bool:
    if isinstance(node, (Predicate, Not)) and not _has_temporal(node):
        return bool(_pointwise(traj, node, np.array([0]), tol)[0])
    if isinstance(node, Not):
        return not _eval(traj, node.child, tol, clauses)
    if isinstance(node, And):
        results = [_eval(traj, c, tol, clauses) for c in node.children]
        return all(results)
    if isinstance(node, (G, F)):
        idx = _window(traj, node.interval)
        truth = _pointwise(traj, node.child, idx, tol)
        t = traj.times[idx]
        if isinstance(node, G):
            ok = bool(np.all(truth))
            bad = np.flatnonzero(~truth)
            first_bad = float(t[bad[0]]) if bad.size else None
            good = np.flatnonzero(truth)
            clauses.append(ClauseResult("G", str(node.child), node.interval, ok, first_bad,
                                        float(t[good[0]]) if good.size else None))
        else:
            ok = bool(np.any(truth))
            good = np.flatnonzero(truth)
            clauses.append(ClauseResult("F", str(node.child), node.interval, ok, None,
                                        float(t[good[0]]) if good.size else None))
        return ok
    raise ValueError(f"unsupported formula node: {type(node).__name__}")


def _has_temporal(node) -> bool:
    if isinstance(node, (G, F)):
        return True
    if isinstance(node, Not):
        return _has_temporal(node.child)
    if isinstance(node, And):
        return any(_has_temporal(c) for c in node.children)
    if isinstance(node, Predicate):
        return False
    return True


def check_formula(traj: Trajectory, formula, tol: float = 0.0) -> MonitorReport:
    """Evaluate ``formula`` at the first sample; report every G/F clause."""
    clauses: List[ClauseResult] = []
    verdict = _eval(traj, formula, tol, clauses)
    return MonitorReport(verdict, clauses)
