"""Closed-loop simulation with zero-order-hold control and fixed-step RK4."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .dynamics import ControlAffineSystem, InputPolytope
from .sets import SmoothSet

DEFAULT_DT = 1e-3
SETTLE_TOL = 1e-3


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    h_values: Dict[str, np.ndarray] = field(default_factory=dict)
    stage: np.ndarray = None
    slack: np.ndarray = None

    def __len__(self):
        return self.times.size

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def h(self, s: SmoothSet) -> np.ndarray:
        return s.values(self.states)

    def truncated(self, k: int) -> "Trajectory":
        return Trajectory(
            self.times[:k], self.states[:k], self.inputs[:k],
            {n: v[:k] for n, v in self.h_values.items()},
            None if self.stage is None else self.stage[:k],
            None if self.slack is None else self.slack[:k],
        )


class SimulationError(RuntimeError):
    """Raised when a run cannot continue; ``trajectory`` holds the samples so far."""

    def __init__(self, message, trajectory: Optional[Trajectory] = None):
        super().__init__(message)
        self.trajectory = trajectory


class DivergenceError(SimulationError):
    pass


def time_grid(t_span, dt: float, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Sample times with every interior breakpoint on the grid.

    Each window between consecutive breakpoints gets ceil(width / dt) equal
    steps, so the step is at most ``dt``.
    """
    t_a, t_b = map(float, t_span)
    if not t_b > t_a:
        raise ValueError("t_span must satisfy t_b > t_a")
    if dt <= 0:
        raise ValueError("dt must be positive")
    knots = sorted({t_a, t_b} | {float(t) for t in breakpoints if t_a < t < t_b})
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        pieces.append(a + (b - a) * np.arange(n) / n)
    pieces.append(np.array([t_b]))
    return np.concatenate(pieces)


def _unpack(res):
    u = getattr(res, "u", res)
    return (np.atleast_1d(np.asarray(u, dtype=float)),
            getattr(res, "active_stage", 0),
            getattr(res, "slack_used", 0.0))


def simulate(sys: ControlAffineSystem, controller, x0, t_span, dt: float = DEFAULT_DT,
             breakpoints: Sequence[float] = (), tracked_sets: Sequence[SmoothSet] = (),
             input_polytope: Optional[InputPolytope] = None) -> Trajectory:
    """Integrate x' = f(x) + g(x) u_k with u_k = controller(x_k, t_k) held over each step.

    ``controller`` may return a ControlResult or a bare input vector. The
    controller is also queried at the final sample so every sample has an input.
    """
    times = time_grid(t_span, dt, breakpoints)
    K = times.size
    n, m = sys.state_dim, sys.input_dim
    X = np.empty((K, n))
    Uarr = np.empty((K, m))
    stage = np.zeros(K, dtype=int)
    slack = np.zeros(K)
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (n,):
        raise ValueError(f"x0 has shape {x.shape}, system state is ({n},)")
    f, g = sys.drift, sys.actuation

    def partial(k):
        tr = Trajectory(times[:k], X[:k].copy(), Uarr[:k].copy(), {}, stage[:k].copy(), slack[:k].copy())
        tr.h_values = {s.name: s.values(tr.states) for s in tracked_sets if s.name} if k else {}
        return tr

    for k in range(K):
        X[k] = x
        try:
            u, stg, sl = _unpack(controller(x, times[k]))
        except Exception as exc:
            raise SimulationError(f"controller failed at t={times[k]:g}: {exc}", partial(k)) from exc
        Uarr[k], stage[k], slack[k] = u, stg, sl
        if k == K - 1:
            break
        h = times[k + 1] - times[k]
        k1 = f(x) + g(x) @ u
        x2 = x + 0.5 * h * k1
        k2 = f(x2) + g(x2) @ u
        x3 = x + 0.5 * h * k2
        k3 = f(x3) + g(x3) @ u
        x4 = x + h * k3
        k4 = f(x4) + g(x4) @ u
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state diverged after t={times[k]:g}", partial(k + 1))

    traj = Trajectory(times, X, Uarr, {}, stage, slack)
    traj.h_values = {s.name: s.values(X) for s in tracked_sets if s.name}
    if input_polytope is not None and input_polytope.n_rows:
        viol = np.max(Uarr @ input_polytope.A_u.T - input_polytope.b_u)
        if viol > 1e-8:
            raise SimulationError(f"applied input leaves the input polytope by {viol:.3g}", traj)
    return traj


def measure_settling(traj: Trajectory, target: SmoothSet, tol: float = SETTLE_TOL) -> Optional[float]:
    """Earliest sample time after which h(x) <= tol at every sample, or None.

    Sampled semantics: a crossing between samples is dated at the first
    sample inside.
    """
    if target.name and target.name in traj.h_values:
        h = traj.h_values[target.name]
    else:
        h = traj.h(target)
    if h.size == 0:
        return None
    outside = np.flatnonzero(h > tol)
    if outside.size == 0:
        return float(traj.times[0])
    last = outside[-1]
    if last == h.size - 1:
        return None
    return float(traj.times[last + 1])
