"""Constructors of (locally) optimal quantizers.

``lloyd`` and ``cellwise_update`` iterate the fixed-point map "replace each
codepoint by the 1-level optimum of its own cell" on a fixed sample pool, so
each run is a deterministic map with detectable convergence.  ``gradient_descent``
follows the distortion gradient with step halving on non-decrease, and
``stochastic_gradient`` is the online one-sample counterpart (each draw moves
only the owning codepoint).  ``split_init`` grows a level-(n-1) quantizer by a
fresh support point, which strictly decreases the optimal distortion.

None of this certifies global optimality: the level-n distortion is not
convex for n >= 2, which is why ``multistart`` exists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .distortion import (
    DistortionEstimate,
    Quantizer,
    _assign_chunk,
    distortion,
    pool_distortion,
    pool_gradient,
)
from .distributions import Distribution
from .errors import DegenerateInput, NoSplitPoint, PreconditionError
from .spaces import NormedSpace

__all__ = [
    "OptimizerConfig",
    "IterationRecord",
    "OptimizeTrace",
    "lloyd",
    "cellwise_update",
    "gradient_descent",
    "stochastic_gradient",
    "split_init",
    "random_init",
    "multistart",
    "best_trace",
]

_MIN_STEP = 1e-16
_SPLIT_REJECT_TOL = 1e-9
_SPLIT_MAX_DRAWS = 10_000


@dataclass
class OptimizerConfig:
    method: str = "lloyd"
    max_iters: int = 200
    n_samples: int = 100_000
    step0: float = 0.5
    empty_cell_policy: str = "resample_from_support"  # or "freeze"
    rel_tol: float = 1e-8
    move_tol: float = 1e-7
    stream: int = 0
    # stochastic schedule: gamma_t = sg_step0 / (1 + t / sg_tau)
    sg_step0: float = 0.1
    sg_tau: float = 1e4
    sg_steps: int = 100_000

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0 or self.move_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.empty_cell_policy not in ("resample_from_support", "freeze"):
            raise ValueError(f"unknown empty_cell_policy {self.empty_cell_policy!r}")


@dataclass
class IterationRecord:
    iteration: int
    distortion: float
    std_error: float
    max_move: float
    empty_cells: int = 0
    residual: float | None = None

    def to_json(self) -> dict:
        out = {
            "iter": self.iteration,
            "distortion": self.distortion,
            "std_error": self.std_error,
            "max_move": self.max_move,
            "empty_cells": self.empty_cells,
        }
        if self.residual is not None:
            out["residual"] = self.residual
        return out


@dataclass
class OptimizeTrace:
    method: str
    iterations: list = field(default_factory=list)
    final: Quantizer | None = None
    final_distortion: DistortionEstimate | None = None
    converged: bool = False
    reason: str = ""

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(rec.to_json(), sort_keys=True) for rec in self.iterations)


def _resample_point(dist, rng):
    return dist._draw(rng, 1)[0]


def _cell_lists(owner, n):
    return [np.flatnonzero(owner == i) for i in range(n)]


def _weiszfeld(xs: np.ndarray, y0: np.ndarray, iters: int = 200, tol: float = 1e-10):
    y = y0.copy()
    for _ in range(iters):
        d = np.maximum(np.linalg.norm(xs - y, axis=1), 1e-12)
        w = 1.0 / d
        y_new = (w[:, None] * xs).sum(axis=0) / w.sum()
        if np.linalg.norm(y_new - y) < tol:
            return y_new
        y = y_new
    return y


def _descent_one_level(space, xs, r, y0, iters: int = 100, step0: float = 1.0):
    """Convex descent for min_y mean ||x - y||^r (n=1 objective, r >= 1)."""

    def obj(y):
        return float(np.mean(space.norm(xs - y) ** r))

    y = y0.copy()
    fy = obj(y)
    step = step0
    for _ in range(iters):
        diffs = y - xs
        d = space.norm(diffs)
        keep = d > 1e-14
        if not np.any(keep):
            return y
        u = space.norm_gradient(diffs[keep], ae=True)
        grad = r * ((d[keep] ** (r - 1.0))[:, None] * u).sum(axis=0) / len(xs)
        direction = space.dual_to_primal(grad)
        gnorm = float(space.norm(direction))
        if gnorm < 1e-14:
            return y
        t = step / (1.0 + gnorm)
        while t >= _MIN_STEP:
            y_try = y - t * direction
            f_try = obj(y_try)
            if f_try < fy:
                break
            t /= 2.0
        else:
            return y
        if float(space.norm(y_try - y)) < 1e-12:
            return y_try
        y, fy = y_try, f_try
    return y


def _argmin_one_level(space: NormedSpace, xs: np.ndarray, r: float, y0: np.ndarray):
    """1-level optimum over a sampled cell (the r=2 Hilbert case is the mean)."""
    if r == 2.0 and space.is_hilbert:
        return xs.mean(axis=0)
    if r == 1.0 and space.kind == "euclidean":
        if space.dim == 1:
            return np.median(xs, axis=0)
        return _weiszfeld(xs, y0)
    if r == 1.0 and getattr(space, "p", None) == 1.0:
        # the weighted-l1 objective separates per coordinate
        return np.median(xs, axis=0)
    return _descent_one_level(space, xs, r, y0)


def _fixed_point_loop(dist, q0, cfg, update_cell, mean_update=False):
    pts = q0.points.copy()
    n = len(pts)
    rng = dist.rng(cfg.stream)
    pool = dist._draw(rng, cfg.n_samples)
    trace = OptimizeTrace(method=cfg.method)
    prev = None
    for it in range(cfg.max_iters):
        owner, _, dmin = _assign_chunk(q0.space, pts, pool)
        v = dmin**q0.r
        cur = float(v.mean())
        se = float(np.sqrt(max(float((v * v).mean()) - cur * cur, 0.0) / len(pool)))
        counts = np.bincount(owner, minlength=n)
        new_pts = pts.copy()
        empty = 0
        if mean_update:
            sums = np.zeros_like(pts)
            np.add.at(sums, owner, pool)
            full = counts > 0
            new_pts[full] = sums[full] / counts[full, None]
        else:
            for i in np.flatnonzero(counts > 0):
                new_pts[i] = update_cell(pool[owner == i], pts[i])
        for i in np.flatnonzero(counts == 0):
            empty += 1
            if cfg.empty_cell_policy == "resample_from_support":
                new_pts[i] = _resample_point(dist, rng)
        max_move = float(np.max(q0.space.norm(new_pts - pts)))
        pts = new_pts
        trace.iterations.append(IterationRecord(it, cur, se, max_move, empty))
        rel = np.inf if prev is None else abs(prev - cur) / max(abs(prev), 1e-30)
        prev = cur
        if max_move < cfg.move_tol or rel < cfg.rel_tol:
            trace.converged = True
            trace.reason = "converged"
            break
    else:
        trace.reason = "max_iters"
    trace.final = q0.with_points(pts)
    trace.final_distortion = pool_distortion(trace.final, pool)
    return trace


def lloyd(dist: Distribution, q0: Quantizer, cfg: OptimizerConfig) -> OptimizeTrace:
    """Fixed-point iteration a_i <- conditional mean of its cell (r = 2, Hilbert).

    The conditional mean is the exact 1-level optimum for r = 2 in a Hilbert
    space, so the pool distortion is non-increasing except possibly at
    empty-cell resampling events.
    """
    if q0.r != 2.0 or not q0.space.is_hilbert:
        raise PreconditionError("lloyd requires r = 2 on a Hilbert-like space")
    if cfg.n_samples < 1:
        raise DegenerateInput("empty sample pool")
    cfg = replace(cfg, method="lloyd")
    return _fixed_point_loop(dist, q0, cfg, None, mean_update=True)


def cellwise_update(dist: Distribution, q0: Quantizer, cfg: OptimizerConfig) -> OptimizeTrace:
    """Per-cell 1-level re-optimization for general r >= 1.

    Each iteration solves the (convex) 1-level problem on every sampled cell.
    With r = 2 on a Hilbert space the cell optimum is the mean and the
    iteration coincides with ``lloyd`` on identical streams.
    """
    if q0.r < 1.0:
        raise PreconditionError("cellwise updates require r >= 1")
    cfg = replace(cfg, method="cellwise")
    space, r = q0.space, q0.r
    if r == 2.0 and space.is_hilbert:
        return _fixed_point_loop(dist, q0, cfg, None, mean_update=True)
    return _fixed_point_loop(
        dist, q0, cfg, lambda xs, y: _argmin_one_level(space, xs, r, y)
    )


def gradient_descent(dist: Distribution, q0: Quantizer, cfg: OptimizerConfig) -> OptimizeTrace:
    """Full-pool descent along the distortion gradient, step halving on non-decrease.

    Step underflow (< 1e-16) is reported as stagnation, not failure.
    """
    if q0.r < 1.0:
        raise PreconditionError("the distortion gradient requires r >= 1")
    cfg = replace(cfg, method="gradient_descent")
    rng = dist.rng(cfg.stream)
    pool = dist._draw(rng, cfg.n_samples)
    q = q0
    est = pool_distortion(q, pool)
    trace = OptimizeTrace(method=cfg.method)
    step = cfg.step0
    for it in range(cfg.max_iters):
        grad = pool_gradient(q, pool)
        direction = np.stack(
            [q.space.dual_to_primal(grad.components[i]) for i in range(q.n)]
        )
        residual = float(np.max(q.space.dual_norm(grad.components)))
        q_try = est_try = None
        while step >= _MIN_STEP:
            cand = q.with_points(q.points - step * direction)
            cand_est = pool_distortion(cand, pool)
            if cand_est.value < est.value:
                q_try, est_try = cand, cand_est
                break
            step /= 2.0
        if q_try is None:
            trace.reason = "stagnation"
            trace.converged = True
            break
        max_move = float(np.max(q.space.norm(q_try.points - q.points)))
        q, est = q_try, est_try
        trace.iterations.append(
            IterationRecord(it, est.value, est.std_error, max_move, 0, residual)
        )
        if max_move < cfg.move_tol:
            trace.converged = True
            trace.reason = "converged"
            break
        if len(trace.iterations) >= 2:
            prev = trace.iterations[-2].distortion
            if abs(prev - est.value) / max(abs(prev), 1e-30) < cfg.rel_tol:
                trace.converged = True
                trace.reason = "converged"
                break
    else:
        trace.reason = "max_iters"
    trace.final = q
    trace.final_distortion = pool_distortion(q, pool)
    return trace


def stochastic_gradient(dist: Distribution, q0: Quantizer, cfg: OptimizerConfig) -> OptimizeTrace:
    """Online quantizer learning: each draw moves only its owning codepoint.

    The owning codepoint a moves along -gamma_t * r ||x-a||^(r-1) grad||.||(a-x)
    with gamma_t = sg_step0 / (1 + t / sg_tau).  Zero steps return q0 unchanged.
    """
    if q0.r < 1.0:
        raise PreconditionError("the distortion gradient requires r >= 1")
    cfg = replace(cfg, method="stochastic")
    trace = OptimizeTrace(method=cfg.method)
    rng = dist.rng(cfg.stream)
    pts = q0.points.copy()
    space, r = q0.space, q0.r
    steps = int(cfg.sg_steps)
    if steps > 0:
        euclid = space.kind == "euclidean"
        checkpoint = max(1, steps // 50)
        last = pts.copy()
        chunk = 1 << 16
        t = 0
        while t < steps:
            xs = dist._draw(rng, min(chunk, steps - t))
            for x in xs:
                diffs = pts - x
                if euclid:
                    d = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
                else:
                    d = space.norm(diffs)
                i = int(np.argmin(d))
                gamma = cfg.sg_step0 / (1.0 + t / cfg.sg_tau)
                t += 1
                if d[i] <= 1e-14:
                    continue
                if r == 2.0 and euclid:
                    move = 2.0 * diffs[i]
                else:
                    u = space.norm_gradient(diffs[i], ae=True)
                    move = r * d[i] ** (r - 1.0) * space.dual_to_primal(u)
                pts[i] = pts[i] - gamma * move
                if t % checkpoint == 0:
                    max_move = float(np.max(space.norm(pts - last)))
                    trace.iterations.append(
                        IterationRecord(t - 1, np.nan, np.nan, max_move, 0)
                    )
                    last = pts.copy()
    trace.final = q0.with_points(pts)
    eval_pool = dist._draw(rng, max(cfg.n_samples, 1))
    trace.final_distortion = pool_distortion(trace.final, eval_pool)
    trace.converged = True
    trace.reason = "schedule_exhausted" if steps > 0 else "zero_steps"
    return trace


def split_init(dist: Distribution, q_prev: Quantizer, stream: int = 0) -> Quantizer:
    """Append a fresh support point c (not within 1e-9 of any codepoint).

    Capturing positive mass around a new support point strictly decreases
    the optimal distortion, so this is the natural level n-1 -> n move.
    """
    rng = dist.rng(stream)
    drawn = 0
    while drawn < _SPLIT_MAX_DRAWS:
        batch = dist._draw(rng, min(64, _SPLIT_MAX_DRAWS - drawn))
        drawn += len(batch)
        for c in batch:
            if float(np.min(q_prev.space.norm(q_prev.points - c))) > _SPLIT_REJECT_TOL:
                return q_prev.with_points(np.vstack([q_prev.points, c[None, :]]))
    raise NoSplitPoint(f"no admissible split point in {_SPLIT_MAX_DRAWS} draws")


def random_init(
    dist: Distribution, space: NormedSpace, n: int, r: float, stream: int = 0
) -> Quantizer:
    """n pairwise-distinct support draws as a starting quantizer."""
    rng = dist.rng(stream)
    pts: list[np.ndarray] = []
    drawn = 0
    while len(pts) < n and drawn < _SPLIT_MAX_DRAWS:
        batch = dist._draw(rng, min(64, _SPLIT_MAX_DRAWS - drawn))
        drawn += len(batch)
        for c in batch:
            if len(pts) == n:
                break
            if not pts or float(
                np.min(space.norm(np.asarray(pts) - c))
            ) > _SPLIT_REJECT_TOL:
                pts.append(c)
    if len(pts) < n:
        raise NoSplitPoint(f"could not draw {n} distinct support points")
    return Quantizer(space, r, np.asarray(pts))


def _run_method(dist, q0, cfg):
    if cfg.method == "lloyd":
        return lloyd(dist, q0, cfg)
    if cfg.method == "cellwise":
        return cellwise_update(dist, q0, cfg)
    if cfg.method == "gradient_descent":
        return gradient_descent(dist, q0, cfg)
    if cfg.method == "stochastic":
        return stochastic_gradient(dist, q0, cfg)
    raise ValueError(f"unknown method {cfg.method!r}")


def multistart(
    dist: Distribution,
    space: NormedSpace,
    n: int,
    r: float,
    cfg: OptimizerConfig,
    n_starts: int = 16,
    base_stream: int = 0,
) -> list[OptimizeTrace]:
    """Independent optimizer runs from random support starts.

    Start k draws its initial tuple on stream ``base_stream + 2k + 1`` and
    optimizes on pool stream ``base_stream + 2k``; the level-n distortion is
    typically not convex for n >= 2, so several starts are the only defence.
    """
    traces = []
    for k in range(n_starts):
        q0 = random_init(dist, space, n, r, stream=base_stream + 2 * k + 1)
        run_cfg = replace(cfg, stream=base_stream + 2 * k)
        traces.append(_run_method(dist, q0, run_cfg))
    return traces


def best_trace(
    traces: list[OptimizeTrace],
    dist: Distribution,
    eval_samples: int = 200_000,
    eval_stream: int = 999_983,
):
    """Pick the best final quantizer by re-evaluating on one common stream."""
    best = None
    best_est = None
    for tr in traces:
        est = distortion(dist, tr.final, eval_samples, stream=eval_stream)
        if best_est is None or est.value < best_est.value:
            best, best_est = tr, est
    return best, best_est
