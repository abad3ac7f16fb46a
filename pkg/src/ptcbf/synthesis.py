"""Prescribed-time CLF / ZCBF quadratic programs and the controllers built on them.

Two controllers are provided, both with the scikit-learn estimator interface
(``get_params`` / ``set_params``, ``fit`` then ``predict``):

``ReachController``
    reaches a single target set within a prescribed time T and keeps the
    state there afterwards.
``MultiStageController``
    follows a ``ReachAvoidSpec``: on [t_i, t_{i+1}) it keeps the safe sets and
    stage set i invariant while driving the state into stage set i+1.

Each query solves one small QP. The decision vector stacks the input v, the
decay gains, free ZCBF multipliers and a slack delta on the CLF row. The
slack is penalised by W*(delta + delta^2), so it stays at exactly zero
whenever the unrelaxed QP is feasible.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import ControlAffineSystem, InputPolytope, lie_derivatives
from .qp import QPProblem, QPSolution, solve_on_active_set, solve_qp
from .sets import SmoothSet
from .spec import ReachAvoidSpec, validate

GAIN_REG = 1e-6
SLACK_WEIGHT = 1e6


class ControllerError(RuntimeError):
    """The control QP has no solution (safety rows and input bounds conflict)."""

    def __init__(self, message, x=None, t=None, solution=None):
        super().__init__(message)
        self.x, self.t, self.solution = x, t, solution


# --------------------------------------------------------------------------
# settling-time arithmetic


def settling_time_bound_general(a, b, p, q, k=1.0) -> float:
    """Fixed-time settling bound for V' <= -(a V^p + b V^q)^k.

    Returns 1/(a^k (1 - pk)) + 1/(b^k (qk - 1)); requires pk < 1 < qk.
    """
    if min(a, b, p, q, k) <= 0:
        raise ValueError("a, b, p, q, k must all be positive")
    if p * k >= 1 or q * k <= 1:
        raise ValueError("need p*k < 1 and q*k > 1")
    return 1.0 / (a ** k * (1.0 - p * k)) + 1.0 / (b ** k * (q * k - 1.0))


@dataclass(frozen=True)
class FxTSGains:
    """Exponents gamma1 = 1 + 1/mu, gamma2 = 1 - 1/mu and the gain floors for a time budget.

    The floors 2/(T (gamma1 - 1)) and 2/(T (1 - gamma2)) each use half of the
    budget, so gains at the floors give a settling bound of exactly T.
    """

    mu: float = 5.0
    T_budget: float = 10.0

    def __post_init__(self):
        if self.mu <= 1:
            raise ValueError("mu must be > 1")
        if self.T_budget <= 0:
            raise ValueError("time budget must be positive")

    @property
    def gamma1(self) -> float:
        return 1.0 + 1.0 / self.mu

    @property
    def gamma2(self) -> float:
        return 1.0 - 1.0 / self.mu

    @property
    def alpha_floor1(self) -> float:
        return 2.0 / (self.T_budget * (self.gamma1 - 1.0))

    @property
    def alpha_floor2(self) -> float:
        return 2.0 / (self.T_budget * (1.0 - self.gamma2))


def settling_time_bound(g: FxTSGains, alpha1: float, alpha2: float) -> float:
    """1/(alpha1 (gamma1 - 1)) + 1/(alpha2 (1 - gamma2))."""
    if alpha1 <= 0 or alpha2 <= 0:
        raise ValueError("gains must be positive")
    return settling_time_bound_general(alpha2, alpha1, g.gamma2, g.gamma1, 1.0)


def decay_terms(h: float, g: FxTSGains) -> Tuple[float, float]:
    """(max(0,h)^gamma1, max(0,h)^gamma2); clamping happens before the power."""
    hp = h if h > 0.0 else 0.0
    return hp ** g.gamma1, hp ** g.gamma2


# --------------------------------------------------------------------------
# QP construction


@dataclass
class ControlResult:
    u: np.ndarray
    alpha: Tuple[float, float]
    lambdas: Tuple[float, ...] = ()
    qp_status: str = "optimal"
    slack_used: float = 0.0
    active_stage: int = 0
    iterations: int = 0
    z: Optional[np.ndarray] = field(default=None, repr=False)


@functools.lru_cache(maxsize=64)
def _objective(m: int, n_extra: int, eps: float, W: float):
    # ½|v|² + eps * (gains² + multipliers²) + W (delta² + delta); cached, read-only
    n_z = m + n_extra + 1
    d = np.concatenate([np.ones(m), np.full(n_extra, 2.0 * eps), [2.0 * W]])
    H = np.diag(d)
    f = np.zeros(n_z)
    f[-1] = W
    H.flags.writeable = False
    f.flags.writeable = False
    return H, f


def build_reach_qp(sys: ControlAffineSystem, target: SmoothSet, U: InputPolytope, g: FxTSGains, x,
                   eps: float = GAIN_REG, W: float = SLACK_WEIGHT, h_true=None) -> QPProblem:
    """QP over z = [v; alpha1; alpha2; delta] for reaching ``target`` within ``g.T_budget``.

    Rows: CLF decrease with the clamped decay (relaxed by delta), the two gain
    floors, the input polytope, delta >= 0. With ``h_true`` the decay terms use
    powers of h_true instead of the target's own field.
    """
    x = np.asarray(x, dtype=float)
    m = sys.input_dim
    Lf, Lg = lie_derivatives(target, sys, x)
    h = target.value(x) if h_true is None else float(h_true(x))
    p1, p2 = decay_terms(h, g)
    l = U.n_rows
    n_z = m + 3
    A = np.zeros((3 + l + 1, n_z))
    b = np.zeros(3 + l + 1)
    A[0, :m] = Lg
    A[0, m:m + 3] = (p1, p2, -1.0)
    b[0] = -Lf
    A[1, m] = -1.0
    b[1] = -g.alpha_floor1
    A[2, m + 1] = -1.0
    b[2] = -g.alpha_floor2
    if l:
        A[3:3 + l, :m] = U.A_u
        b[3:3 + l] = U.b_u
    A[-1, -1] = -1.0
    labels = ["clf", "gain-lower-bound", "gain-lower-bound"] + ["input-bound"] * l + ["slack"]
    H, f = _objective(m, 2, eps, W)
    return QPProblem.trusted(H, f, A, b, labels)


def relaxed_reach_qp(sys: ControlAffineSystem, V_proxy: SmoothSet, h_true, U: InputPolytope, g: FxTSGains, x,
                     eps: float = GAIN_REG, W: float = SLACK_WEIGHT) -> QPProblem:
    """Reach QP whose CLF row uses grad V_proxy but decay powers of h_true.

    ``h_true`` may be a SmoothSet or any callable x -> float (e.g. a non-smooth
    box field). Passing the proxy itself reproduces ``build_reach_qp``.
    """
    return build_reach_qp(sys, V_proxy, U, g, x, eps=eps, W=W, h_true=h_true)


@dataclass(frozen=True)
class SandwichReport:
    """h <= V <= h + c checked on sample points."""

    lower_violation: float
    offset_estimate: float
    ok: bool


def check_sandwich(V_proxy: SmoothSet, h_true, points, offset: Optional[float] = None, tol: float = 1e-6):
    """Largest violation of h <= V and the smallest c with V <= h + c over ``points``.

    Violations beyond ``tol`` produce a warning, not an error.
    """
    pts = np.asarray(points, dtype=float)
    V = V_proxy.values(pts)
    h = np.array([h_true(p) for p in pts])
    low = float(np.max(h - V, initial=0.0))
    c_est = float(max(np.max(V - h), 0.0))
    ok = low <= tol and (offset is None or c_est <= offset + tol)
    if not ok:
        warnings.warn(f"sandwich h <= V <= h + c violated: lower {low:.3g}, c estimate {c_est:.3g}")
    return SandwichReport(low, c_est, ok)


def build_multi_qp(sys: ControlAffineSystem, spec: ReachAvoidSpec, i: int, g: FxTSGains, x,
                   eps: float = GAIN_REG, W: float = SLACK_WEIGHT) -> QPProblem:
    """QP for stage ``i`` over z = [v; a1; a2; lambda_safe...; lambda_stage; delta].

    Rows: one ZCBF row per safe set, the ZCBF row of stage set i, the clamped CLF
    row of stage set i+1 (omitted at the final stage), the input polytope, the
    two gain floors (omitted at the final stage) and delta >= 0. The ZCBF
    multipliers are free in sign.
    """
    x = np.asarray(x, dtype=float)
    if not 0 <= i <= spec.N:
        raise ValueError(f"stage index {i} outside 0..{spec.N}")
    m = sys.input_dim
    ns = len(spec.safe_sets)
    final = i == spec.N
    U = spec.input_polytope
    l = U.n_rows
    n_extra = 2 + ns + 1
    n_z = m + n_extra + 1
    i_lam = m + 2
    rows, rhs, labels = [], [], []

    for j, s in enumerate(spec.safe_sets):
        Lf, Lg = lie_derivatives(s, sys, x)
        r = np.zeros(n_z)
        r[:m] = Lg
        r[i_lam + j] = s.value(x)
        rows.append(r)
        rhs.append(-Lf)
        labels.append("zcbf-safe")

    stage_set = spec.stages[i].set
    Lf, Lg = lie_derivatives(stage_set, sys, x)
    r = np.zeros(n_z)
    r[:m] = Lg
    r[i_lam + ns] = stage_set.value(x)
    rows.append(r)
    rhs.append(-Lf)
    labels.append("zcbf-stage")

    if not final:
        nxt = spec.stages[i + 1].set
        Lf, Lg = lie_derivatives(nxt, sys, x)
        p1, p2 = decay_terms(nxt.value(x), g)
        r = np.zeros(n_z)
        r[:m] = Lg
        r[m], r[m + 1], r[-1] = p1, p2, -1.0
        rows.append(r)
        rhs.append(-Lf)
        labels.append("clf")

    for k in range(l):
        r = np.zeros(n_z)
        r[:m] = U.A_u[k]
        rows.append(r)
        rhs.append(U.b_u[k])
        labels.append("input-bound")

    if not final:
        for k, floor in enumerate((g.alpha_floor1, g.alpha_floor2)):
            r = np.zeros(n_z)
            r[m + k] = -1.0
            rows.append(r)
            rhs.append(-floor)
            labels.append("gain-lower-bound")

    r = np.zeros(n_z)
    r[-1] = -1.0
    rows.append(r)
    rhs.append(0.0)
    labels.append("slack")

    H, f = _objective(m, n_extra, eps, W)
    return QPProblem.trusted(H, f, np.array(rows), np.array(rhs, dtype=float), labels)


def _start_point(p: QPProblem, m: int, v0, free_cols: Sequence[int]):
    """A feasible point for a control QP, if one is cheap to construct.

    Takes v0, sets each free ZCBF multiplier so its row holds with margin, puts
    gains at their floors and picks delta to satisfy the CLF row.
    """
    z = np.zeros(p.n_vars)
    z[:m] = v0
    labels = p.row_labels
    for k, lab in enumerate(labels):
        if lab == "gain-lower-bound":
            col = int(np.flatnonzero(p.A[k])[0])
            z[col] = -p.b[k]
    for k, lab in enumerate(labels):
        if lab.startswith("zcbf"):
            cols = [c for c in free_cols if p.A[k, c] != 0.0]
            base = p.A[k, :m] @ z[:m] - p.b[k]
            if not cols:
                if base > 0:
                    return None
                continue
            c = cols[0]
            hval = p.A[k, c]
            z[c] = -base / hval - np.sign(hval)
    for k, lab in enumerate(labels):
        if lab == "clf":
            resid = p.A[k, :-1] @ z[:-1] - p.b[k]
            z[-1] = max(resid, 0.0) + 1.0
    return z


# --------------------------------------------------------------------------
# controllers


def _check_state(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"state has shape {x.shape}, expected ({n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("state is not finite")
    return x


def _require_fitted(est):
    # Cheap per-step variant of check_is_fitted.
    if not hasattr(est, "system_"):
        raise NotFittedError(f"{type(est).__name__} is not fitted; call fit(system) first")


class _QPController(BaseEstimator):
    def __call__(self, x, t: float = 0.0) -> ControlResult:
        return self.control(x, t)

    def predict(self, X, t=0.0) -> np.ndarray:
        """Inputs for each row of X (all evaluated at time(s) t)."""
        check_is_fitted(self, "system_")
        X = check_array(X, ensure_2d=True, dtype=float)
        ts = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        return np.vstack([self.control(x, float(tk)).u for x, tk in zip(X, ts)])

    def _solve(self, p: QPProblem, x, t, stage, free_cols):
        m = self.system_.input_dim
        key = (stage, p.n_rows)
        sol = None
        if key in self._last_active:
            # Hot start: the previous step's active set usually still certifies.
            sol = solve_on_active_set(p, self._last_active[key])
        if sol is None:
            v0 = self._last_v if self._last_v is not None else self.U_.interior_point()
            if not self.U_.contains(v0, 0.0):
                v0 = self.U_.interior_point()
            sol = solve_qp(p, x0=_start_point(p, m, v0, free_cols))
        if sol.status != "optimal":
            raise ControllerError(f"control QP {sol.status} at t={t:g}, x={x}", x=x, t=t, solution=sol)
        v = sol.z_star[:m]
        self._last_v = v.copy()
        self._last_active[key] = sol.active_set
        return sol, v


class ReachController(_QPController):
    """Prescribed-time reach-and-stay controller for one target set.

    Parameters
    ----------
    target : SmoothSet
        Set to reach. Its field doubles as the Lyapunov function.
    input_polytope : InputPolytope or None
        Admissible inputs; None means unconstrained.
    mu : float
        Exponent parameter, gamma = 1 +/- 1/mu.
    T : float
        Prescribed reaching time.
    h_true : callable or None
        Field whose powers enter the decay terms (relaxed mode). Defaults to
        the target's own field.
    """

    def __init__(self, target=None, input_polytope=None, mu=5.0, T=10.0, h_true=None,
                 gain_reg=GAIN_REG, slack_weight=SLACK_WEIGHT):
        self.target = target
        self.input_polytope = input_polytope
        self.mu = mu
        self.T = T
        self.h_true = h_true
        self.gain_reg = gain_reg
        self.slack_weight = slack_weight

    def fit(self, system: ControlAffineSystem, y=None):
        if self.target is None:
            raise ValueError("target set is required")
        if self.target.dim != system.state_dim:
            raise ValueError(f"target has dimension {self.target.dim}, system state has {system.state_dim}")
        U = self.input_polytope if self.input_polytope is not None else InputPolytope.unbounded(system.input_dim)
        if U.input_dim != system.input_dim:
            raise ValueError(f"input polytope acts on {U.input_dim} inputs, system has {system.input_dim}")
        self.system_ = system
        self.U_ = U
        self.gains_ = FxTSGains(self.mu, self.T)
        self._last_v = None
        self._last_active = {}
        return self

    def build_qp(self, x) -> QPProblem:
        _require_fitted(self)
        return build_reach_qp(self.system_, self.target, self.U_, self.gains_, x,
                              eps=self.gain_reg, W=self.slack_weight, h_true=self.h_true)

    def control(self, x, t: float = 0.0) -> ControlResult:
        _require_fitted(self)
        x = _check_state(x, self.system_.state_dim)
        p = self.build_qp(x)
        sol, v = self._solve(p, x, t, 0, ())
        m = self.system_.input_dim
        return ControlResult(v, (float(sol.z_star[m]), float(sol.z_star[m + 1])), (), sol.status,
                             max(float(sol.z_star[-1]), 0.0), 0, sol.iterations, sol.z_star)


class MultiStageController(_QPController):
    """Switching CLF/ZCBF controller for a timed sequence of stage sets.

    Parameters
    ----------
    spec : ReachAvoidSpec
    mu : float
        Exponent parameter, gamma = 1 +/- 1/mu.
    T_bar : float or None
        Time budget for each reach; defaults to the minimum stage dwell.
    check_spec : bool
        Validate the reach-avoid problem in ``fit``; when False, violations only warn.
    """

    def __init__(self, spec=None, mu=5.0, T_bar=None, check_spec=True,
                 gain_reg=GAIN_REG, slack_weight=SLACK_WEIGHT):
        self.spec = spec
        self.mu = mu
        self.T_bar = T_bar
        self.check_spec = check_spec
        self.gain_reg = gain_reg
        self.slack_weight = slack_weight

    def fit(self, system: ControlAffineSystem, y=None):
        if self.spec is None:
            raise ValueError("a ReachAvoidSpec is required")
        dims = {s.dim for s in self.spec.all_sets()}
        if dims != {system.state_dim}:
            raise ValueError(f"spec sets have dimension(s) {sorted(dims)}, system state has {system.state_dim}")
        if self.spec.input_polytope.input_dim != system.input_dim:
            raise ValueError("input polytope dimension does not match the system")
        rep = validate(self.spec)
        if not rep.ok:
            if self.check_spec:
                raise ValueError(f"invalid specification:\n{rep}")
            warnings.warn(f"specification violates its assumptions:\n{rep}")
        self.system_ = system
        self.U_ = self.spec.input_polytope
        T_bar = self.T_bar if self.T_bar is not None else self.spec.min_dwell
        self.gains_ = FxTSGains(self.mu, T_bar)
        self.report_ = rep
        self._last_v = None
        self._last_active = {}
        return self

    def build_qp(self, x, i: int) -> QPProblem:
        _require_fitted(self)
        return build_multi_qp(self.system_, self.spec, i, self.gains_, x,
                              eps=self.gain_reg, W=self.slack_weight)

    def control(self, x, t: float = 0.0) -> ControlResult:
        _require_fitted(self)
        x = _check_state(x, self.system_.state_dim)
        i = self.spec.stage_index(t)
        p = self.build_qp(x, i)
        m = self.system_.input_dim
        ns = len(self.spec.safe_sets)
        free = tuple(range(m + 2, m + 2 + ns + 1))
        sol, v = self._solve(p, x, t, i, free)
        z = sol.z_star
        lambdas = tuple(float(c) for c in z[m + 2:m + 3 + ns])
        slack = max(float(z[-1]), 0.0) if i < self.spec.N else 0.0
        return ControlResult(v, (float(z[m]), float(z[m + 1])), lambdas, sol.status, slack, i,
                             sol.iterations, z)


def reach_controller(sys: ControlAffineSystem, target: SmoothSet, U: Optional[InputPolytope] = None,
                     g: Optional[FxTSGains] = None, **kwargs) -> ReachController:
    g = g or FxTSGains()
    return ReachController(target, U, mu=g.mu, T=g.T_budget, **kwargs).fit(sys)


def multi_controller(sys: ControlAffineSystem, spec: ReachAvoidSpec, g: Optional[FxTSGains] = None,
                     **kwargs) -> MultiStageController:
    g = g or FxTSGains(5.0, spec.min_dwell)
    return MultiStageController(spec, mu=g.mu, T_bar=g.T_budget, **kwargs).fit(sys)
