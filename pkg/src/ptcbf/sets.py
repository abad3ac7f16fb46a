"""Sets given as sublevel sets {x : h(x) <= 0} of smooth scalar fields.

Every set carries an analytic gradient. Squared-distance forms are used so
that h stays differentiable at the centre.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

KINDS = (
    "ball-interior",
    "ellipsoid-interior",
    "weighted-ball-interior",
    "ball-exterior",
    "superellipse-interior",
)


@dataclass(frozen=True)
class SmoothSet:
    kind: str
    center: Tuple[float, ...]
    radius: float = 1.0
    semi_axes: Optional[Tuple[float, ...]] = None
    exponent: int = 1
    offset: float = 0.0
    name: str = ""
    _c: np.ndarray = field(init=False, repr=False, compare=False)
    _w: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")
        center = tuple(float(c) for c in np.atleast_1d(self.center))
        object.__setattr__(self, "center", center)
        if self.semi_axes is not None:
            axes = tuple(float(a) for a in np.atleast_1d(self.semi_axes))
            if len(axes) != len(center):
                raise ValueError("semi_axes and center differ in dimension")
            if min(axes) <= 0:
                raise ValueError("semi-axes must be positive")
            object.__setattr__(self, "semi_axes", axes)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if int(self.exponent) != self.exponent or self.exponent < 1:
            raise ValueError("exponent must be a positive integer")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")
        object.__setattr__(self, "_c", np.array(center))
        w = np.array(self.semi_axes) if self.semi_axes is not None else np.full(len(center), self.radius)
        object.__setattr__(self, "_w", w)

    @property
    def dim(self) -> int:
        return len(self.center)

    def __call__(self, x) -> float:
        return self.value(x)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"state has shape {x.shape}, set dimension is {self.dim}")
        return float(self._h(x - self._c))

    def values(self, X) -> np.ndarray:
        """h evaluated row-wise on an (N, n) array of states."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected states of dimension {self.dim}, got shape {X.shape}")
        return self._h(X - self._c)

    def _h(self, Z):
        if self.kind == "ball-interior":
            return np.sum(Z * Z, axis=-1) - self.radius ** 2
        if self.kind == "ball-exterior":
            return self.radius ** 2 - np.sum(Z * Z, axis=-1)
        if self.kind == "ellipsoid-interior":
            return np.sum((Z / self._w) ** 2, axis=-1) - 1.0
        if self.kind == "weighted-ball-interior":
            return np.sum((Z / self._w) ** 2, axis=-1) - self.radius ** 2
        return np.sum((Z / self._w) ** (2 * self.exponent), axis=-1) - 1.0

    def gradient(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float) - self._c
        if self.kind == "ball-interior":
            return 2.0 * z
        if self.kind == "ball-exterior":
            return -2.0 * z
        if self.kind in ("ellipsoid-interior", "weighted-ball-interior"):
            return 2.0 * z / self._w ** 2
        n2 = 2 * self.exponent
        return n2 * (z / self._w) ** (n2 - 1) / self._w

    def reference_point(self) -> np.ndarray:
        """A point strictly inside the set."""
        if self.kind == "ball-exterior":
            e = np.zeros(self.dim)
            e[0] = 2.0 * self.radius
            return self._c + e
        return self._c.copy()

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "center": [float(c) for c in self.center]}
        if self.kind in ("ball-interior", "ball-exterior", "weighted-ball-interior"):
            d["radius"] = float(self.radius)
        if self.kind in ("ellipsoid-interior", "weighted-ball-interior"):
            d["semi_axes"] = [float(a) for a in self.semi_axes]
        if self.kind == "superellipse-interior":
            d["half_width"] = float(self.radius)
            d["exponent"] = int(self.exponent)
        if self.offset:
            d["offset"] = float(self.offset)
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SmoothSet":
        kind = d["kind"]
        name = d.get("name", "")
        if kind == "ball-interior":
            s = ball(d["center"], d["radius"], name=name)
        elif kind == "ball-exterior":
            s = ball_exterior(d["center"], d["radius"], name=name)
        elif kind == "ellipsoid-interior":
            s = ellipsoid(d["center"], d["semi_axes"], name=name)
        elif kind == "weighted-ball-interior":
            s = weighted_ball(d["center"], d["semi_axes"], d.get("radius", 1.0), name=name)
        elif kind == "superellipse-interior":
            s = superellipse(d["center"], d["half_width"], d["exponent"], name=name)
        else:
            raise ValueError(f"unknown set kind {kind!r}")
        if d.get("offset"):
            s = replace(s, offset=float(d["offset"]))
        return s

    def with_name(self, name: str) -> "SmoothSet":
        return replace(self, name=name)


def ball(center, radius, name="") -> SmoothSet:
    """h(x) = |x - c|^2 - r^2."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return SmoothSet("ball-interior", tuple(np.atleast_1d(center)), radius=float(radius), name=name)


def ellipsoid(center, semi_axes, name="") -> SmoothSet:
    """h(x) = sum(((x_k - c_k) / a_k)^2) - 1."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    axes = np.atleast_1d(np.asarray(semi_axes, dtype=float))
    if center.size == 1 and axes.size > 1:
        center = np.full(axes.size, center[0])
    if np.any(axes <= 0):
        raise ValueError("semi-axes must be positive")
    return SmoothSet("ellipsoid-interior", tuple(center), semi_axes=tuple(axes), name=name)


def weighted_ball(center, weights, radius=1.0, name="") -> SmoothSet:
    """Ball of a diagonally weighted norm: sum((z_k / w_k)^2) - r^2 with z = x - c."""
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    if radius <= 0:
        raise ValueError("radius must be positive")
    return SmoothSet(
        "weighted-ball-interior", tuple(np.atleast_1d(center)), radius=float(radius),
        semi_axes=tuple(weights), name=name,
    )


def ball_exterior(center, radius, name="") -> SmoothSet:
    """Complement of an open ball: h(x) = r^2 - |x - c|^2."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return SmoothSet("ball-exterior", tuple(np.atleast_1d(center)), radius=float(radius), name=name)


def superellipse(center, half_width, n, name="") -> SmoothSet:
    """Smooth inner approximation of an axis-aligned square (box) of half-width w.

    h(x) = sum(((x_k - c_k) / w)^(2n)) - 1. For n = 1 this is the ball of radius w;
    as n grows the set fills out the box.
    """
    if int(n) != n or n < 1:
        raise ValueError("exponent n must be an integer >= 1")
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    return SmoothSet(
        "superellipse-interior", tuple(np.atleast_1d(center)), radius=float(half_width),
        exponent=int(n), name=name,
    )


def evaluate(s: SmoothSet, x) -> tuple:
    """(h(x), grad h(x)) for a single state."""
    x = np.asarray(x, dtype=float)
    if x.shape != (s.dim,):
        raise ValueError(f"state has shape {x.shape}, set dimension is {s.dim}")
    return s.value(x), s.gradient(x)


def contains(s: SmoothSet, x, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return s.value(x) <= tol


def boundary_points(s: SmoothSet, k: int = 360) -> np.ndarray:
    """k points on the h = 0 contour of a planar set."""
    if s.dim != 2:
        raise ValueError("boundary sampling is only defined for planar sets")
    th = np.linspace(0.0, 2.0 * np.pi, k, endpoint=False)
    c, s_ = np.cos(th), np.sin(th)
    if s.kind in ("ball-interior", "ball-exterior"):
        Z = s.radius * np.column_stack([c, s_])
    elif s.kind == "ellipsoid-interior":
        Z = np.column_stack([c, s_]) * s._w
    elif s.kind == "weighted-ball-interior":
        Z = s.radius * np.column_stack([c, s_]) * s._w
    else:
        p = 1.0 / s.exponent
        Z = s.radius * np.column_stack([np.sign(c) * np.abs(c) ** p, np.sign(s_) * np.abs(s_) ** p])
    return Z + s._c


def box_function(center, half_width, n) -> "callable":
    """Non-smooth box field max_k (|z_k| / w)^(2n) - 1.

    Shares its zero level set with the box of half-width w and satisfies
    h_box <= h_super <= h_box + (d - 1) against ``superellipse(center, w, n)``
    on the box boundary.
    """
    c = np.asarray(center, dtype=float)

    def h(x):
        z = np.abs(np.asarray(x, dtype=float) - c) / half_width
        return float(np.max(z) ** (2 * n) - 1.0)

    return h


def estimate_offset(proxy: SmoothSet, h_true, points) -> float:
    """Largest proxy - h_true over sample points: the gap c with h <= V <= h + c."""
    gaps = [proxy.value(p) - h_true(p) for p in points]
    return float(max(gaps))
