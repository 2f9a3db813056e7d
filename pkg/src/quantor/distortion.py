"""Distortion of a quantizer: Voronoi assignment, Monte-Carlo estimates,
exact 1-D values, admissibility, and the distortion gradient.

The level-n distortion of an n-tuple a = (a_1, ..., a_n) under a law P is
E min_i ||X - a_i||^r; its r-th root is the quantization error e_r.  The
gradient of the distortion at an admissible tuple has components

    r * E[ 1{X in C_i, X != a_i} * ||X - a_i||^(r-1) * grad||.||(a_i - X) ],

one dual vector per codepoint, where C_i is the Voronoi cell of a_i.  Cells
here always use the lowest-index tie rule, which makes runs reproducible and
the gradient well-defined even at non-admissible tuples.

Monte-Carlo estimators shard their draws into fixed-size chunks and reduce
in a fixed order, so a given (seed, stream, count) is bit-reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .distributions import Distribution, GaussianIso, UniformInterval
from .errors import (
    DimensionMismatch,
    NumericRange,
    PreconditionError,
    UnsupportedOperation,
)
from .spaces import NormedSpace, space_from_json

__all__ = [
    "Quantizer",
    "VoronoiAssignment",
    "DistortionEstimate",
    "AdmissibilityEstimate",
    "GradientValue",
    "voronoi_assign",
    "project",
    "distortion",
    "pool_distortion",
    "distortion_exact_1d",
    "admissibility",
    "distortion_gradient",
    "pool_gradient",
]

_CHUNK = 1 << 16
_TIE_TOL = 1e-12
_SELF_EXCLUSION = 1e-14
_DEGENERACY_WARN_FRACTION = 1e-3


@dataclass
class Quantizer:
    """An ordered n-tuple of codepoints with the distortion exponent r.

    Duplicate codepoints are permitted (tuples like (0, 3, 3) are needed for
    the non-strict local-minimum experiments).
    """

    space: NormedSpace
    r: float
    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.r <= 0:
            raise ValueError("r must be positive")
        if self.points.shape[0] < 1:
            raise ValueError("a quantizer needs at least one point")
        self.space.check_point(self.points)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray) -> "Quantizer":
        return Quantizer(self.space, self.r, points)

    def min_pairwise_distance(self) -> float:
        if self.n == 1:
            return np.inf
        d = np.inf
        for i in range(self.n - 1):
            d = min(d, float(np.min(self.space.norm(self.points[i + 1 :] - self.points[i]))))
        return d

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "r": self.r,
            "points": self.points.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Quantizer":
        return cls(
            space=space_from_json(obj["space"]),
            r=float(obj["r"]),
            points=np.asarray(obj["points"], dtype=float),
        )


@dataclass
class VoronoiAssignment:
    """Nearest-codepoint assignment of a sample batch (lowest-index ties)."""

    owner: np.ndarray
    tie_flag: np.ndarray
    min_dist: np.ndarray
    cell_mass: np.ndarray

    def to_csv(self, fh) -> None:
        fh.write("sample_index,owner,tie_flag\n")
        for k, (o, t) in enumerate(zip(self.owner, self.tie_flag)):
            fh.write(f"{k},{o},{int(t)}\n")


@dataclass
class DistortionEstimate:
    value: float
    std_error: float
    n_samples: int
    r: float

    @property
    def e_r(self) -> float:
        """Quantization error: the r-th root of the distortion."""
        return self.value ** (1.0 / self.r)

    @property
    def e_r_std_error(self) -> float:
        if self.value == 0.0:
            return 0.0
        return self.std_error * self.value ** (1.0 / self.r - 1.0) / self.r


@dataclass
class AdmissibilityEstimate:
    open_mass: float
    per_cell_open_mass: np.ndarray
    n_samples: int

    def admissible(self, mc_tol: float) -> bool:
        return self.open_mass >= 1.0 - mc_tol


@dataclass
class GradientValue:
    """Per-codepoint dual vectors (folded convention) with standard errors."""

    components: np.ndarray
    std_error: np.ndarray
    n_samples: int
    degenerate_fraction: float = 0.0


def _distances(space: NormedSpace, points: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """(N, n) matrix of ||x_k - a_i||.

    Hilbert-like norms expand the square through one matmul; the result can
    lose relative precision only where the distance is itself near zero,
    which never matters for nearest-codepoint selection.
    """
    if space.is_hilbert:
        w = getattr(space, "weights", None)
        xw = xs if w is None else xs * w
        aw = points if w is None else points * w
        xx = np.einsum("ij,ij->i", xw, xs)
        aa = np.einsum("ij,ij->i", aw, points)
        d2 = xx[:, None] - 2.0 * (xw @ points.T) + aa[None, :]
        return np.sqrt(np.clip(d2, 0.0, None))
    out = np.empty((xs.shape[0], points.shape[0]))
    for i, a in enumerate(points):
        out[:, i] = space.norm(xs - a)
    return out


def _assign_chunk(space, points, xs):
    d = _distances(space, points, xs)
    owner = np.argmin(d, axis=1)
    dmin = d[np.arange(len(xs)), owner]
    near = d <= (dmin + _TIE_TOL * np.maximum(1.0, dmin))[:, None]
    tie = near.sum(axis=1) > 1
    return owner, tie, dmin


def voronoi_assign(q: Quantizer, xs: np.ndarray) -> VoronoiAssignment:
    """Assign each sample to its nearest codepoint, ties to the lowest index.

    ``tie_flag`` marks samples whose two nearest codepoints are within 1e-12
    of each other; those samples lie outside the union of open cells.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[0] == 0:
        raise DimensionMismatch("empty sample batch")
    q.space.check_point(xs)
    owner, tie, dmin = _assign_chunk(q.space, q.points, xs)
    mass = np.bincount(owner, minlength=q.n) / len(xs)
    return VoronoiAssignment(owner=owner, tie_flag=tie, min_dist=dmin, cell_mass=mass)


def project(q: Quantizer, x: np.ndarray) -> np.ndarray:
    """Nearest-codepoint projection (Voronoi quantization of x)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    owner, _, _ = _assign_chunk(q.space, q.points, xs)
    out = q.points[owner]
    return out[0] if single else out


def pool_distortion(q: Quantizer, xs: np.ndarray) -> DistortionEstimate:
    """Distortion estimate on a fixed, caller-supplied sample pool."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = len(xs)
    total = 0.0
    total_sq = 0.0
    for lo in range(0, n, _CHUNK):
        chunk = xs[lo : lo + _CHUNK]
        _, _, dmin = _assign_chunk(q.space, q.points, chunk)
        with np.errstate(over="ignore"):
            v = dmin**q.r
        total += float(v.sum())
        total_sq += float((v * v).sum())
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    if not np.isfinite(mean):
        raise NumericRange(f"distortion overflow at r={q.r}")
    return DistortionEstimate(mean, float(np.sqrt(var / n)), n, q.r)


def distortion(
    dist: Distribution, q: Quantizer, n_samples: int, stream: int = 0
) -> DistortionEstimate:
    """Monte-Carlo estimate of E min_i ||X - a_i||^r with its standard error."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = dist.rng(stream)
    total = 0.0
    total_sq = 0.0
    left = n_samples
    while left > 0:
        k = min(_CHUNK, left)
        xs = dist._draw(rng, k)
        _, _, dmin = _assign_chunk(q.space, q.points, xs)
        with np.errstate(over="ignore"):
            v = dmin**q.r
        total += float(v.sum())
        total_sq += float((v * v).sum())
        left -= k
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    if not np.isfinite(mean):
        raise NumericRange(f"distortion overflow at r={q.r}")
    return DistortionEstimate(mean, float(np.sqrt(var / n_samples)), n_samples, q.r)


def admissibility(
    dist: Distribution, q: Quantizer, n_samples: int, stream: int = 0
) -> AdmissibilityEstimate:
    """Estimated mass of the union of open cells, and per-cell open masses.

    A tuple is admissible when the open-cell mass is 1 up to Monte-Carlo
    tolerance; a duplicated codepoint has open mass exactly 0.
    """
    rng = dist.rng(stream)
    open_count = 0
    per_cell = np.zeros(q.n)
    left = n_samples
    while left > 0:
        k = min(_CHUNK, left)
        xs = dist._draw(rng, k)
        owner, tie, _ = _assign_chunk(q.space, q.points, xs)
        keep = ~tie
        open_count += int(keep.sum())
        per_cell += np.bincount(owner[keep], minlength=q.n)
        left -= k
    return AdmissibilityEstimate(open_count / n_samples, per_cell / n_samples, n_samples)


def _check_gradient_preconditions(dist: Distribution, q: Quantizer) -> None:
    if q.r < 1.0:
        raise PreconditionError("the distortion gradient requires r >= 1")
    if not q.space.smooth_ae:
        raise PreconditionError("the distortion gradient needs an a.e. smooth norm")
    if q.r == 1.0 and dist.atoms:
        for a in q.points:
            for atom, _ in dist.atoms:
                if float(q.space.norm(a - atom)) <= 1e-12:
                    raise PreconditionError(
                        "r = 1 gradient undefined: codepoint coincides with an atom"
                    )


def _gradient_accumulate(q, xs, grad_sum, grad_sq, degenerate):
    owner, _, _ = _assign_chunk(q.space, q.points, xs)
    r = q.r
    for i, a in enumerate(q.points):
        mask = owner == i
        if not np.any(mask):
            continue
        diffs = a - xs[mask]
        # exact norms here: the assignment's fast path is not reliable near 0
        d = q.space.norm(diffs)
        keep = d > _SELF_EXCLUSION
        if not np.any(keep):
            continue
        diffs, d = diffs[keep], d[keep]
        degenerate[0] += int(q.space.gradient_degenerate(diffs).sum())
        u = q.space.norm_gradient(diffs, ae=True)
        contrib = r * (d ** (r - 1.0))[:, None] * u
        grad_sum[i] += contrib.sum(axis=0)
        grad_sq[i] += (contrib * contrib).sum(axis=0)


def pool_gradient(q: Quantizer, xs: np.ndarray, *, check: bool = True) -> GradientValue:
    """Distortion gradient estimated on a fixed sample pool.

    Samples falling exactly on their codepoint (within 1e-14) are excluded,
    matching the cell-minus-center indicator in the gradient formula.
    """
    if check and q.r < 1.0:
        raise PreconditionError("the distortion gradient requires r >= 1")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = len(xs)
    grad_sum = np.zeros_like(q.points)
    grad_sq = np.zeros_like(q.points)
    degenerate = [0]
    for lo in range(0, n, _CHUNK):
        _gradient_accumulate(q, xs[lo : lo + _CHUNK], grad_sum, grad_sq, degenerate)
    mean = grad_sum / n
    var = np.maximum(grad_sq / n - mean * mean, 0.0)
    frac = degenerate[0] / n
    if frac > _DEGENERACY_WARN_FRACTION:
        warnings.warn(
            f"norm gradient degenerate on {frac:.2%} of samples; "
            "estimates use the sign(0)=0 convention",
            RuntimeWarning,
            stacklevel=2,
        )
    return GradientValue(mean, np.sqrt(var / n), n, frac)


def distortion_gradient(
    dist: Distribution, q: Quantizer, n_samples: int, stream: int = 0
) -> GradientValue:
    """Monte-Carlo estimate of the distortion gradient (one dual vector per
    codepoint, quadrature weights folded in) with per-component standard errors."""
    _check_gradient_preconditions(dist, q)
    rng = dist.rng(stream)
    grad_sum = np.zeros_like(q.points)
    grad_sq = np.zeros_like(q.points)
    degenerate = [0]
    left = n_samples
    while left > 0:
        k = min(_CHUNK, left)
        _gradient_accumulate(q, dist._draw(rng, k), grad_sum, grad_sq, degenerate)
        left -= k
    mean = grad_sum / n_samples
    var = np.maximum(grad_sq / n_samples - mean * mean, 0.0)
    frac = degenerate[0] / n_samples
    if frac > _DEGENERACY_WARN_FRACTION:
        warnings.warn(
            f"norm gradient degenerate on {frac:.2%} of samples; "
            "estimates use the sign(0)=0 convention",
            RuntimeWarning,
            stacklevel=2,
        )
    return GradientValue(mean, np.sqrt(var / n_samples), n_samples, frac)


def _phi(z):
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def _zphi(z):
    return 0.0 if np.isinf(z) else z * _phi(z)


def _uniform_cell_integral(lo, hi, a, b, point, r):
    """integral of |x - point|^r dx over [a, b] inside [lo, hi], unnormalized."""
    a, b = max(a, lo), min(b, hi)
    if b <= a:
        return 0.0

    def f(u):
        return np.sign(u) * np.abs(u) ** (r + 1.0) / (r + 1.0)

    return f(b - point) - f(a - point)


def _gaussian_cell_integral(mu, sigma, a, b, point, r):
    """integral of |x - point|^r dN(mu, sigma^2) over [a, b]."""
    alpha = (a - mu) / sigma
    beta = (b - mu) / sigma
    c = mu - point
    if r == 2:
        # E[(sigma Z + c)^2 ; alpha <= Z <= beta]
        i0 = ndtr(beta) - ndtr(alpha)
        i1 = _phi(alpha) - _phi(beta)
        i2 = i0 + _zphi(alpha) - _zphi(beta)
        return sigma * sigma * i2 + 2.0 * sigma * c * i1 + c * c * i0
    if r == 1:
        z0 = np.clip((point - mu) / sigma, alpha, beta)

        def signed(zl, zr, sign):
            i0 = ndtr(zr) - ndtr(zl)
            i1 = _phi(zl) - _phi(zr)
            return sign * (sigma * i1 + c * i0)

        return signed(z0, beta, +1.0) + signed(alpha, z0, -1.0)
    raise UnsupportedOperation(f"gaussian exact distortion supports r in {{1, 2}}, got {r}")


def distortion_exact_1d(dist: Distribution, q: Quantizer) -> float:
    """Closed-form distortion for 1-D uniform and gaussian laws.

    Integrates piecewise over the midpoint intervals of the sorted codepoint
    set; this is the brute-force oracle that validates the Monte-Carlo path.
    """
    if q.space.dim != 1:
        raise UnsupportedOperation("exact distortion is 1-D only")
    pts = np.unique(q.points.reshape(-1))
    mids = (pts[:-1] + pts[1:]) / 2.0
    edges_lo = np.concatenate([[-np.inf], mids])
    edges_hi = np.concatenate([mids, [np.inf]])

    if isinstance(dist, UniformInterval):
        total = sum(
            _uniform_cell_integral(dist.lo, dist.hi, a, b, p, q.r)
            for a, b, p in zip(edges_lo, edges_hi, pts)
        )
        return float(total / (dist.hi - dist.lo))
    if isinstance(dist, GaussianIso) and dist.d == 1:
        if q.r not in (1.0, 2.0):
            raise UnsupportedOperation("gaussian exact distortion needs r in {1, 2}")
        mu = float(np.asarray(dist.mean).reshape(-1)[0])
        return float(
            sum(
                _gaussian_cell_integral(mu, dist.sigma, a, b, p, q.r)
                for a, b, p in zip(edges_lo, edges_hi, pts)
            )
        )
    raise UnsupportedOperation(
        f"exact distortion not available for ({dist.kind}, r={q.r})"
    )
