"""Normed spaces: norm evaluation, norm gradients, and dual pairing.

Four families are offered: euclidean(d), lp_sequence(d, p), Lp_grid(m, p)
and L1_grid(m).  Grid spaces hold functions sampled on a uniform grid over
[0, 1] with quadrature weights (trapezoid by default).  Sup-type norms are
not offered: every space here has an a.e. Gateaux-differentiable norm, which
is what the gradient machinery downstream requires.

Gradients are returned in a "folded dual" convention: for grid spaces the
quadrature weights are folded into the dual vector, so that
``dual_pairing(grad, h)`` (a plain componentwise sum) equals the directional
derivative of the norm along h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePoint, DimensionMismatch, NotDifferentiable

__all__ = [
    "NormedSpace",
    "Euclidean",
    "LpSequence",
    "LpGrid",
    "L1Grid",
    "trapezoid_weights",
    "space_from_json",
]


def trapezoid_weights(m: int, length: float = 1.0) -> np.ndarray:
    """Trapezoid quadrature weights on a uniform m-point grid of given length."""
    if m < 2:
        raise ValueError(f"grid needs at least 2 points, got {m}")
    h = length / (m - 1)
    w = np.full(m, h)
    w[0] = w[-1] = h / 2.0
    return w


class NormedSpace:
    """Base class; concrete spaces implement the norm and its gradient.

    All operations act on the last axis, so a single point ``(dim,)`` and a
    batch ``(N, dim)`` are both accepted.  Everything is pure and re-entrant.
    """

    kind: str = ""
    dim: int = 0
    smooth_ae: bool = True
    strictly_convex: bool = False
    is_hilbert: bool = False

    def check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"point of dimension {x.shape[-1]} in space of dimension {self.dim}"
            )
        if not np.all(np.isfinite(x)):
            raise DimensionMismatch("point has non-finite entries")
        return x

    def norm(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def norm_gradient(self, x: np.ndarray, *, ae: bool = False) -> np.ndarray:
        """Gateaux gradient of the norm at x != 0, as a folded dual vector.

        With ``ae=True``, L1-type degenerate points (zero coordinates) use
        sign(0) = 0 instead of raising; the degenerate set has measure zero
        under the continuous distributions shipped with the package.
        """
        raise NotImplementedError

    def norm_gradient_ae(self, x: np.ndarray) -> np.ndarray:
        return self.norm_gradient(x, ae=True)

    def gradient_degenerate(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of points where the gradient needs the a.e. fallback."""
        x = self.check_point(x)
        return np.zeros(x.shape[:-1], dtype=bool)

    def dual_pairing(self, u: np.ndarray, y: np.ndarray) -> np.ndarray:
        u = self.check_point(u)
        y = self.check_point(y)
        return np.sum(u * y, axis=-1)

    def dual_norm(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dual_to_primal(self, u: np.ndarray) -> np.ndarray:
        """Fold a dual vector back into a primal direction (Riesz map when p=2)."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other) -> bool:
        return isinstance(other, NormedSpace) and self.to_json() == other.to_json()

    def __hash__(self):
        # weights are derived from (kind, dim, p); json captures identity
        return hash(repr(sorted(self.to_json().items(), key=lambda kv: kv[0])))


@dataclass(frozen=True, eq=False)
class Euclidean(NormedSpace):
    """R^d with the euclidean norm."""

    d: int

    kind = "euclidean"
    smooth_ae = True
    strictly_convex = True
    is_hilbert = True

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.d

    def norm(self, x):
        x = self.check_point(x)
        return np.linalg.norm(x, axis=-1)

    def norm_gradient(self, x, *, ae: bool = False):
        x = self.check_point(x)
        n = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(n == 0.0):
            raise NotDifferentiable("euclidean norm has no gradient at 0")
        return x / n

    def dual_norm(self, u):
        u = self.check_point(u)
        return np.linalg.norm(u, axis=-1)

    def dual_to_primal(self, u):
        return self.check_point(u)

    def to_json(self):
        return {"kind": "euclidean", "d": self.d}


class _WeightedLp(NormedSpace):
    """Shared machinery for weighted l^p norms (weights all 1 for sequences)."""

    p: float
    weights: np.ndarray

    def norm(self, x):
        x = self.check_point(x)
        if self.p == 1.0:
            return np.sum(self.weights * np.abs(x), axis=-1)
        if self.p == 2.0:
            return np.sqrt(np.sum(self.weights * x * x, axis=-1))
        return np.sum(self.weights * np.abs(x) ** self.p, axis=-1) ** (1.0 / self.p)

    def norm_gradient(self, x, *, ae: bool = False):
        x = self.check_point(x)
        n = self.norm(x)
        if np.any(n == 0.0):
            raise NotDifferentiable("norm has no gradient at 0")
        if self.p == 1.0:
            degenerate = (x == 0.0) & (self.weights > 0.0)
            if not ae and np.any(degenerate):
                raise DegeneratePoint(
                    "l1 norm gradient at a point with a zero coordinate; "
                    "use norm_gradient_ae for the sign(0)=0 variant"
                )
            return self.weights * np.sign(x)
        scale = np.expand_dims(n, -1) ** (self.p - 1.0)
        return self.weights * np.sign(x) * np.abs(x) ** (self.p - 1.0) / scale

    def gradient_degenerate(self, x):
        x = self.check_point(x)
        if self.p > 1.0:
            return np.zeros(x.shape[:-1], dtype=bool)
        return np.any((x == 0.0) & (self.weights > 0.0), axis=-1)

    def dual_norm(self, u):
        u = self.check_point(u)
        v = u / self.weights
        if self.p == 1.0:
            return np.max(np.abs(v), axis=-1)
        q = self.p / (self.p - 1.0)
        return np.sum(self.weights * np.abs(v) ** q, axis=-1) ** (1.0 / q)

    def dual_to_primal(self, u):
        u = self.check_point(u)
        return u / self.weights

    def _validate(self):
        if self.p < 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.weights.shape != (self.dim,):
            raise DimensionMismatch("quadrature weights do not match the grid size")
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")


@dataclass(frozen=True, eq=False)
class LpSequence(_WeightedLp):
    """R^d with the (unweighted) l^p norm, p >= 1."""

    d: int
    p: float

    kind = "lp_sequence"

    def __post_init__(self):
        object.__setattr__(self, "weights", np.ones(self.d))
        self._validate()

    @property
    def dim(self) -> int:
        return self.d

    @property
    def strictly_convex(self) -> bool:
        return self.p > 1.0

    @property
    def is_hilbert(self) -> bool:
        return self.p == 2.0

    def to_json(self):
        return {"kind": "lp_sequence", "d": self.d, "p": self.p}


@dataclass(frozen=True, eq=False)
class LpGrid(_WeightedLp):
    """L^p([0,1]) discretized on a uniform m-point grid with quadrature weights."""

    m: int
    p: float
    quad_weights: np.ndarray | None = field(default=None, repr=False)

    kind = "Lp_grid"

    def __post_init__(self):
        w = (
            trapezoid_weights(self.m)
            if self.quad_weights is None
            else np.asarray(self.quad_weights, dtype=float)
        )
        object.__setattr__(self, "quad_weights", w)
        object.__setattr__(self, "weights", w)
        self._validate()

    @property
    def dim(self) -> int:
        return self.m

    @property
    def strictly_convex(self) -> bool:
        return self.p > 1.0

    @property
    def is_hilbert(self) -> bool:
        return self.p == 2.0

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m)

    def to_json(self):
        return {"kind": "Lp_grid", "m": self.m, "p": self.p, "domain": [0.0, 1.0]}


@dataclass(frozen=True, eq=False)
class L1Grid(LpGrid):
    """L^1([0,1]) on a uniform grid; gradient defined a.e. (sign pattern)."""

    m: int
    p: float = 1.0

    kind = "L1_grid"

    def __post_init__(self):
        if self.p != 1.0:
            raise ValueError("L1Grid has p fixed to 1")
        super().__post_init__()

    def to_json(self):
        return {"kind": "L1_grid", "m": self.m, "domain": [0.0, 1.0]}


def space_from_json(obj: dict) -> NormedSpace:
    kind = obj.get("kind")
    if kind == "euclidean":
        return Euclidean(int(obj["d"]))
    if kind == "lp_sequence":
        return LpSequence(int(obj["d"]), float(obj["p"]))
    if kind == "Lp_grid":
        return LpGrid(int(obj["m"]), float(obj["p"]))
    if kind == "L1_grid":
        return L1Grid(int(obj["m"]))
    raise ValueError(f"unknown space kind: {kind!r}")
