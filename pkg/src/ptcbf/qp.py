"""Small dense convex quadratic programs.

Solves

    min  1/2 z'Hz + f'z
    s.t. Az <= b

with a primal active-set method. A phase-1 LP supplies the starting point and
detects empty feasible regions. ``oracle_solve`` enumerates active sets and is
meant for tests only.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

ROW_LABELS = ("clf", "zcbf-safe", "zcbf-stage", "input-bound", "gain-lower-bound", "slack", "generic")

SYM_TOL = 1e-12
PSD_SHIFT = 1e-9
REG_EPS = 1e-6
FEAS_TOL = 1e-8
KKT_TOL = 1e-6


@dataclass
class QPProblem:
    """min 1/2 z'Hz + f'z subject to Az <= b."""

    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    b: np.ndarray
    row_labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.f = np.atleast_1d(np.asarray(self.f, dtype=float)).ravel()
        n = self.f.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        self.A = np.atleast_2d(A)
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.b.size
        if self.row_labels is None:
            self.row_labels = ["generic"] * m
        self.row_labels = list(self.row_labels)

        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected ({n}, {n})")
        if self.A.shape != (m, n):
            raise ValueError(f"A has shape {self.A.shape}, expected ({m}, {n})")
        if len(self.row_labels) != m:
            raise ValueError(f"{len(self.row_labels)} row labels for {m} rows")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > SYM_TOL:
            raise ValueError("H is not symmetric")
        try:
            np.linalg.cholesky(self.H + PSD_SHIFT * np.eye(n))
        except np.linalg.LinAlgError:
            raise ValueError("H is not positive semidefinite") from None

    @classmethod
    def trusted(cls, H, f, A, b, row_labels) -> "QPProblem":
        """Build without validation; for callers that construct well-formed data."""
        p = object.__new__(cls)
        p.H, p.f, p.A, p.b, p.row_labels = H, f, A, b, row_labels
        return p

    @property
    def n_vars(self) -> int:
        return self.f.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.f @ z)


@dataclass
class QPSolution:
    z_star: np.ndarray
    duals: np.ndarray
    status: str
    objective: float
    iterations: int = 0
    active_set: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    primal: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


def kkt_residuals(p: QPProblem, s: QPSolution) -> KKTResiduals:
    z = np.asarray(s.z_star, dtype=float).ravel()
    lam = np.asarray(s.duals, dtype=float).ravel()
    if z.size != p.n_vars or lam.size != p.n_rows:
        raise ValueError("solution dimensions do not match the problem")
    r = p.A @ z - p.b
    stat = p.H @ z + p.f + p.A.T @ lam
    return KKTResiduals(
        stationarity=float(np.max(np.abs(stat), initial=0.0)),
        primal=float(np.max(np.maximum(r, 0.0), initial=0.0)),
        complementarity=float(np.max(np.abs(lam * r), initial=0.0)),
    )


def _phase1(A, b):
    """Minimise the uniform slack t in Az - t <= b, t >= -1 (rows pre-normalised)."""
    m, n = A.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A, -np.ones((m, 1))])
    bounds = [(None, None)] * n + [(-1.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    return res.x[:n], float(res.x[-1]), -np.asarray(res.ineqlin.marginals)


def solve_on_active_set(p: QPProblem, S) -> Optional[QPSolution]:
    """KKT point of the QP with rows S held at equality, if it is optimal for ``p``.

    Returns None unless the point is primal feasible with nonnegative
    multipliers and small (scale-relative) KKT residuals. For a convex QP
    these conditions certify the global optimum.
    """
    S = sorted(S)
    m = p.n_rows
    if any(i < 0 or i >= m for i in S):
        return None
    for careful in (False, True):
        z, lam = _eq_qp(p.H, p.f, p.A, p.b, S, careful)
        if not np.all(np.isfinite(z)):
            return None
        if len(S):
            # Degenerate rows carry multipliers that are zero up to rounding.
            if lam.min() < -1e-12 * max(1.0, np.abs(lam).max()):
                return None
            lam = np.maximum(lam, 0.0)
        duals = np.zeros(m)
        duals[S] = lam
        if kkt_ok(p, z, duals):
            break
    else:
        return None
    return QPSolution(z, duals, "optimal", p.objective(z), 0, tuple(S))


def _eq_qp(H, f, A, b, W, careful: bool = True):
    """Minimiser of 1/2 z'Hz + f'z subject to A[W] z = b[W], with multipliers.

    Solved as one KKT system with normalised constraint rows. ``careful``
    adds symmetric Ruiz equilibration and two steps of iterative refinement,
    which the badly scaled control QPs (cost weights from 1e-6 to 1e6) need.
    """
    n, k = f.size, len(W)
    Aw = A[W]
    r = np.sqrt((Aw * Aw).sum(axis=1))
    r[r == 0.0] = 1.0
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = Aw.T / r
    K[n:, :n] = Aw / r[:, None]
    rhs = np.concatenate([-f, b[W] / r])
    if not careful:
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        return sol[:n], sol[n:] / r
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        D = np.ones(n + k)
        for _ in range(3):
            s = np.abs(K).max(axis=1)
            s = np.where(s > 0.0, 1.0 / np.sqrt(s), 1.0)
            K = K * s[:, None] * s[None, :]
            D *= s
        Ds = D * rhs
        lu = scipy.linalg.lu_factor(K, check_finite=False)
        y = scipy.linalg.lu_solve(lu, Ds, check_finite=False)
        for _ in range(2):
            y = y + scipy.linalg.lu_solve(lu, Ds - K @ y, check_finite=False)
        if not np.all(np.isfinite(y)):
            y = np.linalg.lstsq(K, Ds, rcond=None)[0]
    sol = D * y
    return sol[:n], sol[n:] / r


def kkt_ok(p: QPProblem, z, duals, tol: float = KKT_TOL) -> bool:
    """Scale-relative KKT test: each residual is compared with the size of the terms producing it."""
    if duals.size and duals.min() < 0.0:
        return False
    absA = np.abs(p.A)
    az = np.abs(z)
    ad = np.abs(duals)
    stat = np.abs(p.H @ z + p.f + p.A.T @ duals)
    stat_ref = np.abs(p.H) @ az + np.abs(p.f) + absA.T @ ad
    if (stat - tol * np.maximum(1.0, stat_ref)).max(initial=-1.0) > 0.0:
        return False
    if p.n_rows:
        r = p.A @ z - p.b
        r_ref = np.maximum(1.0, absA @ az + np.abs(p.b))
        # Primal feasibility is held much tighter than the other residuals.
        if (r - 1e-12 * r_ref).max() > 0.0:
            return False
        if (np.abs(duals * r) - tol * np.maximum(1.0, ad * r_ref)).max() > 0.0:
            return False
    return True


def solve_qp(p: QPProblem, x0=None, max_iter: Optional[int] = None, active_guess=None) -> QPSolution:
    """Primal active-set solve of ``p``.

    ``x0`` is an optional starting point; if it is feasible the phase-1 LP is
    skipped. ``active_guess`` is a candidate optimal active set (typically the
    previous solve's); it is accepted only if its KKT point passes the
    optimality checks. On an empty feasible region the returned duals are a
    Farkas certificate: ``y >= 0``, ``A'y = 0``, ``b'y < 0``.
    """
    n, m = p.n_vars, p.n_rows
    if active_guess is not None:
        hit = solve_on_active_set(p, active_guess)
        if hit is not None:
            return hit
    if max_iter is None:
        max_iter = 10 * (n + m)

    H = p.H
    # Cholesky alone accepts numerically singular H, so test the spectrum of
    # the Jacobi-scaled matrix (the control QPs mix weights 1e-6 and 1e6).
    d = np.diag(H)
    if n == 0:
        regularized = False
    elif (d <= 0.0).any():
        regularized = True
    else:
        s = 1.0 / np.sqrt(d)
        regularized = bool(np.linalg.eigvalsh(H * s[:, None] * s[None, :])[0] <= 1e-10)
    if regularized:
        H = H + REG_EPS * np.eye(n)

    # Row-normalised copies drive the tolerances; iterates stay in the
    # original coordinates, where each working-set KKT system is solved by LU.
    scale = np.linalg.norm(p.A, axis=1)
    live = scale > 1e-14
    safe_scale = np.where(live, scale, 1.0)
    An = p.A / safe_scale[:, None]
    bn = p.b / safe_scale

    # Rows with (numerically) zero coefficients are constant conditions.
    dead_bad = ~live & (p.b < -FEAS_TOL)
    if dead_bad.any():
        y = np.zeros(m)
        y[int(np.flatnonzero(dead_bad)[0])] = 1.0
        return QPSolution(np.zeros(n), y, "infeasible", np.nan, 0)

    ftol = FEAS_TOL * np.maximum(1.0, np.abs(p.b))

    def feasible(zc):
        return m == 0 or bool(np.all(p.A @ zc - p.b <= ftol))

    z_unc = np.linalg.solve(H, -p.f)
    if feasible(z_unc):
        z = z_unc
    elif x0 is not None and feasible(np.asarray(x0, dtype=float)):
        z = np.asarray(x0, dtype=float)
    else:
        z_lp, t_star, cert = _phase1(An[:, :], bn)
        if t_star > FEAS_TOL:
            return QPSolution(z_lp, cert / safe_scale, "infeasible", np.nan, 0)
        z = z_lp

    # An empty starting working set is always valid: active rows join as
    # blocking constraints, and a row dependent on the working set never blocks.
    in_W = np.zeros(m, dtype=bool)
    W: list = []
    lam = np.zeros(m)
    status = "max-iter"
    it = 0
    while it < max_iter:
        it += 1
        z_w, mult = _eq_qp(H, p.f, p.A, p.b, W)
        step = z_w - z
        Mp = An @ step
        cand = (~in_W) & live & (Mp > 1e-13 * max(1.0, np.abs(step).max()))
        block = -1
        if cand.any():
            idx = np.flatnonzero(cand)
            ratios = np.maximum(bn[idx] - An[idx] @ z, 0.0) / Mp[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                block = int(idx[j])
                z = z + ratios[j] * step
        if block >= 0:
            W.append(block)
            W.sort()
            in_W[block] = True
            continue
        z = z_w
        if mult.size == 0 or mult.min() >= -1e-12 * max(1.0, np.abs(mult).max()):
            lam[:] = 0.0
            lam[W] = np.maximum(mult, 0.0)
            status = "optimal"
            break
        # Most negative multiplier leaves; lowest index wins ties.
        drop = W[int(np.argmin(mult))]
        W.remove(drop)
        in_W[drop] = False

    if status == "optimal" and regularized:
        z, lam = _polish(p, z, lam, W)
    return QPSolution(z, lam, status, p.objective(z), it, tuple(W))


def _polish(p, z, duals, W):
    # Re-solve the final working-set KKT system with the unregularised H.
    z2, lam_w = _eq_qp(p.H, p.f, p.A, p.b, W)
    d2 = np.zeros(p.n_rows)
    d2[W] = lam_w
    if np.all(np.isfinite(z2)) and kkt_ok(p, z2, d2):
        return z2, d2
    return z, duals


def oracle_solve(p: QPProblem, tol: float = 1e-9) -> QPSolution:
    """Global optimum by enumerating every active set of size <= n_z.

    Each candidate set is solved as an equality-constrained QP; the feasible
    KKT point with the least objective wins. Exponential cost, so the budget
    is n_z <= 8 and m <= 16.
    """
    n, m = p.n_vars, p.n_rows
    if n > 8 or m > 16:
        raise ValueError(f"oracle budget exceeded (n_z={n}, m={m}; limits 8, 16)")

    best = None
    best_obj = np.inf
    count = 0
    for k in range(0, min(n, m) + 1):
        for S in itertools.combinations(range(m), k):
            count += 1
            S = list(S)
            z, lam = _eq_qp(p.H, p.f, p.A, p.b, S)
            if not np.all(np.isfinite(z)):
                continue
            # Singular (dependent-row) systems show up as a poor residual.
            if k and np.abs(p.A[S] @ z - p.b[S]).max() > tol * max(1.0, np.abs(p.A[S]).max() * np.abs(z).max()):
                continue
            if k and lam.min() < -tol * max(1.0, np.abs(lam).max()):
                continue
            if m and np.any(p.A @ z - p.b > tol * np.maximum(1.0, np.abs(p.A) @ np.abs(z) + np.abs(p.b))):
                continue
            obj = p.objective(z)
            if obj < best_obj - 1e-12:
                duals = np.zeros(m)
                duals[S] = np.maximum(lam, 0.0)
                best, best_obj = QPSolution(z, duals, "optimal", obj, count, tuple(S)), obj
    if best is None:
        return QPSolution(np.full(n, np.nan), np.zeros(0), "infeasible", np.nan, count)
    best.iterations = count
    return best
