"""Control-affine systems x' = f(x) + g(x) u and polytopic input sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np
from scipy.optimize import linprog

from .sets import SmoothSet


@dataclass(frozen=True)
class ControlAffineSystem:
    state_dim: int
    input_dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    actuation: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def f(self, x) -> np.ndarray:
        return self.drift(x)

    def g(self, x) -> np.ndarray:
        return self.actuation(x)

    def __call__(self, x, u) -> np.ndarray:
        return self.drift(x) + self.actuation(x) @ u

    def check(self, x) -> None:
        """Raise if f or g have the wrong shape or are non-finite at ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.state_dim,):
            raise ValueError(f"state has shape {x.shape}, system {self.name!r} expects ({self.state_dim},)")
        fx, gx = np.asarray(self.drift(x)), np.asarray(self.actuation(x))
        if fx.shape != (self.state_dim,) or gx.shape != (self.state_dim, self.input_dim):
            raise ValueError(f"system {self.name!r} returned f{fx.shape}, g{gx.shape}")
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(gx))):
            raise ValueError(f"system {self.name!r} is not finite at {x}")


class InputPolytope:
    """U = {u : A_u u <= b_u}; emptiness is rejected at construction."""

    def __init__(self, A_u, b_u):
        A_u = np.atleast_2d(np.asarray(A_u, dtype=float))
        b_u = np.asarray(b_u, dtype=float).ravel()
        if A_u.shape[0] != b_u.size:
            raise ValueError(f"A_u has {A_u.shape[0]} rows but b_u has {b_u.size} entries")
        self.A_u = A_u
        self.b_u = b_u
        if b_u.size and not self._nonempty():
            raise ValueError("input polytope is empty")
        self._interior = None

    @property
    def input_dim(self) -> int:
        return self.A_u.shape[1]

    @property
    def n_rows(self) -> int:
        return self.b_u.size

    def _nonempty(self) -> bool:
        m = self.input_dim
        A = np.hstack([self.A_u, -np.ones((self.n_rows, 1))])
        c = np.zeros(m + 1)
        c[-1] = 1.0
        res = linprog(c, A_ub=A, b_ub=self.b_u, bounds=[(None, None)] * m + [(-1.0, None)], method="highs")
        return res.status == 0 and res.x[-1] <= 1e-9

    def contains(self, u, tol: float = 1e-8) -> bool:
        if self.n_rows == 0:
            return True
        return bool(np.all(self.A_u @ np.asarray(u, dtype=float) <= self.b_u + tol))

    def interior_point(self) -> np.ndarray:
        """Chebyshev centre of U (origin when unconstrained)."""
        if self._interior is None:
            m = self.input_dim
            if self.n_rows == 0:
                self._interior = np.zeros(m)
            else:
                norms = np.linalg.norm(self.A_u, axis=1)
                A = np.hstack([self.A_u, norms[:, None]])
                c = np.zeros(m + 1)
                c[-1] = -1.0
                res = linprog(c, A_ub=A, b_ub=self.b_u, bounds=[(None, None)] * m + [(0.0, 1e3)],
                              method="highs")
                self._interior = res.x[:m]
        return self._interior

    @classmethod
    def box(cls, bound, dim: int) -> "InputPolytope":
        """|u_k| <= bound for every component, rows ordered (+e1, -e1, +e2, -e2, ...)."""
        A = np.zeros((2 * dim, dim))
        for k in range(dim):
            A[2 * k, k] = 1.0
            A[2 * k + 1, k] = -1.0
        return cls(A, np.full(2 * dim, float(bound)))

    @classmethod
    def unbounded(cls, dim: int) -> "InputPolytope":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def to_dict(self) -> dict:
        return {"A_u": self.A_u.tolist(), "b_u": self.b_u.tolist(), "input_dim": self.input_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "InputPolytope":
        A = np.asarray(d.get("A_u", []), dtype=float)
        if A.size == 0:
            return cls.unbounded(int(d["input_dim"]))
        return cls(A, d["b_u"])

    def __repr__(self):
        return f"InputPolytope(rows={self.n_rows}, input_dim={self.input_dim})"


def lie_derivatives(s: SmoothSet, sys: ControlAffineSystem, x):
    """(L_f h, L_g h) of the set function h at x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.state_dim,) or s.dim != sys.state_dim:
        raise ValueError(f"dimension mismatch: state {x.shape}, set {s.dim}, system {sys.state_dim}")
    dh = s.gradient(x)
    return float(dh @ sys.drift(x)), dh @ sys.actuation(x)


def scenario1_system() -> ControlAffineSystem:
    """Planar system with unstable drift and state-scaled scalar input.

    x1' = -x2 + x1^2 + x1 u,  x2' = x1 + x2 tanh(x2) + x2 u.
    """

    def drift(x):
        return np.array([-x[1] + x[0] ** 2, x[0] + x[1] * np.tanh(x[1])])

    def actuation(x):
        return np.array([[x[0]], [x[1]]])

    return ControlAffineSystem(2, 1, drift, actuation, name="scenario1")


def single_integrator(m: int = 2) -> ControlAffineSystem:
    if m < 1:
        raise ValueError("dimension must be >= 1")
    zero = np.zeros(m)
    eye = np.eye(m)
    return ControlAffineSystem(m, m, lambda x: zero.copy(), lambda x: eye, name=f"single_integrator{m}")


def linear_decay(n: int = 1) -> ControlAffineSystem:
    """x' = -x with one unused input; a reference for integrator accuracy."""
    return ControlAffineSystem(n, 1, lambda x: -np.asarray(x, dtype=float),
                               lambda x: np.zeros((n, 1)), name=f"linear_decay{n}")


def linear_system(A, B, name: str = "linear") -> ControlAffineSystem:
    """x' = A x + B u."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError(f"incompatible shapes A {A.shape}, B {B.shape}")
    return ControlAffineSystem(n, B.shape[1], lambda x: A @ x, lambda x: B, name=name)


SYSTEMS: Dict[str, Callable[..., ControlAffineSystem]] = {
    "scenario1": scenario1_system,
    "single_integrator": single_integrator,
    "linear_decay": linear_decay,
    "linear": linear_system,
}


def get_system(name: str, **kwargs) -> ControlAffineSystem:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; known: {sorted(SYSTEMS)}") from None
    return factory(**kwargs)
