"""Executable verification: stationarity, local-minimum probing, structural
checks on probe-surviving optima, and the non-strict local-minimum suite.

A tuple is reported stationary when every codepoint's cell carries positive
mass and the cell-mean dual residual

    E[ 1{X in C_a, X != a} ||X - a||^(r-1) grad||.||(a - X) ]

vanishes within tolerance.  The pass threshold is ``tol * r * E||X||^(r-1)``,
which makes ``tol`` scale-free across distributions.

"Local minimum" is certified only as evidence here: the probe reports that no
perturbed tuple improved at a given radius and trial count, with common random
numbers so that improvement and flatness are tested against paired Monte-Carlo
error rather than raw noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import w2_probe_stats
from .distortion import (
    Quantizer,
    _assign_chunk,
    _distances,
    distortion_exact_1d,
    distortion_gradient,
)
from .distributions import Distribution
from .errors import PreconditionError
from .optimize import OptimizerConfig, _argmin_one_level, _run_method, multistart
from .spaces import Euclidean

__all__ = [
    "StationarityReport",
    "ProbeVerdict",
    "LocalMinStructureReport",
    "SupportMembershipReport",
    "CounterexampleReport",
    "stationarity_check",
    "local_min_probe",
    "local_min_structure_check",
    "strict_min_support_check",
    "counterexample_suite",
]

_DISTINCT_TOL = 1e-12
_ATOM_TOL = 1e-12
_PROBE_FLOOR = 0.05  # reject probe tuples smaller than this fraction of the radius


@dataclass
class StationarityReport:
    verdict: str  # stationary | not_stationary | inapplicable
    residuals: np.ndarray | None = None
    residual_dual_norms: np.ndarray | None = None
    residual_std_error: np.ndarray | None = None
    cell_mass: np.ndarray | None = None
    positive_mass_ok: bool = False
    admissible_mass: float = np.nan
    atom_collision: bool = False
    tol: float = np.nan
    threshold: float = np.nan
    n_samples: int = 0
    reason: str = ""

    @property
    def stationary(self) -> bool:
        return self.verdict == "stationary"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "residual_dual_norms": None
            if self.residual_dual_norms is None
            else self.residual_dual_norms.tolist(),
            "cell_mass": None if self.cell_mass is None else self.cell_mass.tolist(),
            "positive_mass_ok": self.positive_mass_ok,
            "admissible_mass": None
            if np.isnan(self.admissible_mass)
            else self.admissible_mass,
            "atom_collision": self.atom_collision,
            "tol": self.tol,
            "threshold": self.threshold,
            "n_samples": self.n_samples,
            "reason": self.reason,
        }


def stationarity_check(
    dist: Distribution,
    q: Quantizer,
    n_samples: int = 200_000,
    tol: float = 0.01,
    stream: int = 0,
) -> StationarityReport:
    """Check the critical-point condition: positive cell masses and vanishing
    cell-mean dual residuals, under the lowest-index Voronoi partition.

    Duplicated codepoints make the notion inapplicable (reported, not raised);
    so does a codepoint sitting on an atom when r = 1.
    """
    if q.r < 1.0:
        raise PreconditionError("stationarity is defined for r >= 1")
    if q.min_pairwise_distance() <= _DISTINCT_TOL:
        return StationarityReport(
            verdict="inapplicable", reason="duplicated codepoints", tol=tol
        )
    if q.r == 1.0:
        for atom, _ in dist.atoms:
            if float(np.min(q.space.norm(q.points - atom))) <= _ATOM_TOL:
                return StationarityReport(
                    verdict="inapplicable",
                    atom_collision=True,
                    reason="codepoint on an atom with r = 1",
                    tol=tol,
                )
    grad = distortion_gradient(dist, q, n_samples, stream)
    residuals = grad.components / q.r
    dual_norms = q.space.dual_norm(residuals)
    rng = dist.rng(stream)
    counts = np.zeros(q.n)
    open_counts = 0
    left = n_samples
    while left > 0:
        xs = dist._draw(rng, min(1 << 16, left))
        owner, tie, _ = _assign_chunk(q.space, q.points, xs)
        counts += np.bincount(owner, minlength=q.n)
        open_counts += int((~tie).sum())
        left -= len(xs)
    mass = counts / n_samples
    open_mass = open_counts / n_samples
    positive = bool(np.all(mass > 0.0))
    threshold = tol * q.r * dist.moment_bound(q.r - 1.0, q.space)
    ok = positive and bool(np.all(dual_norms <= threshold))
    return StationarityReport(
        verdict="stationary" if ok else "not_stationary",
        residuals=residuals,
        residual_dual_norms=np.asarray(dual_norms),
        residual_std_error=grad.std_error / q.r,
        cell_mass=mass,
        positive_mass_ok=positive,
        admissible_mass=open_mass,
        atom_collision=False,
        tol=tol,
        threshold=threshold,
        n_samples=n_samples,
    )


@dataclass
class ProbeVerdict:
    strictness: str  # strict | non_strict | refuted
    improved: bool
    flat_fraction: float
    radius: float
    trials: int
    total_probes: int
    n_samples: int
    base_distortion: float
    best_improving_tuple: np.ndarray | None = None
    best_improvement: float = 0.0
    best_improvement_std_error: float = 0.0

    def to_json(self) -> dict:
        return {
            "strictness": self.strictness,
            "improved": self.improved,
            "flat_fraction": self.flat_fraction,
            "radius": self.radius,
            "trials": self.trials,
            "total_probes": self.total_probes,
            "n_samples": self.n_samples,
            "base_distortion": self.base_distortion,
            "best_improving_tuple": None
            if self.best_improving_tuple is None
            else self.best_improving_tuple.tolist(),
            "best_improvement": self.best_improvement,
            "best_improvement_std_error": self.best_improvement_std_error,
        }


def _ball_offset(space, rng, radius):
    """Near-uniform draw from the space-norm ball of the given radius."""
    g = rng.standard_normal(space.dim)
    nrm = float(space.norm(g))
    if nrm < 1e-300:
        return np.zeros(space.dim)
    u = rng.uniform() ** (1.0 / space.dim)
    return (radius * u / nrm) * g


def _probe_statistics(space, pool, r, base_points, probe_tuples):
    """Paired distortion differences of probe tuples against a base tuple.

    Returns (base_value, dg, se): per-probe mean difference and its standard
    error, all on the one supplied pool (common random numbers).  Weighted-l2
    norms go through the fused kernel; other norms fall back to a per-probe
    pass.  A probe identical in effect to the base yields an exact zero.
    """
    t_count = len(probe_tuples)
    npool = len(pool)

    if space.is_hilbert:
        w = getattr(space, "weights", None)
        if w is None:
            w = np.ones(space.dim)
        base_sum, sum_d, sum_sq = w2_probe_stats(pool, w, base_points, probe_tuples, r)
    else:

        def vals_from_dist(d):
            if r == 1.0:
                return d
            if r == 2.0:
                return d * d
            return d**r

        sum_d = np.zeros(t_count)
        sum_sq = np.zeros(t_count)
        d = _distances(space, base_points, pool)
        v0 = vals_from_dist(np.min(d, axis=1))
        base_sum = float(v0.sum())
        for t, tup in enumerate(probe_tuples):
            d = _distances(space, tup, pool)
            diff = vals_from_dist(np.min(d, axis=1)) - v0
            sum_d[t] = float(diff.sum())
            sum_sq[t] = float(diff @ diff)

    dg = sum_d / npool
    var = np.maximum(sum_sq / npool - dg * dg, 0.0)
    return base_sum / npool, dg, np.sqrt(var / npool)


def local_min_probe(
    dist: Distribution,
    q: Quantizer,
    radius: float,
    trials: int = 1000,
    n_samples: int = 200_000,
    stream: int = 0,
    segment_draws: int = 8,
    max_axis_probes: int = 512,
) -> ProbeVerdict:
    """Probe for strict local minimality at a given radius.

    Evaluates the distortion at the tuple itself and at perturbed tuples on
    one common sample pool: ``trials`` random tuples uniform in the product
    ball, axis-aligned single-coordinate moves, and segment moves of each
    codepoint toward sampled support points.  A probe refutes when it improves
    by more than 3 paired standard errors; it is flat when it changes the
    distortion by at most that.  Verdict: refuted if any probe improves,
    otherwise non_strict when any probe is flat, otherwise strict.

    Random tuples whose largest per-point offset is below 5% of the radius
    are redrawn: below Monte-Carlo resolution they carry no evidence either way.
    """
    if radius <= 0:
        raise PreconditionError("radius must be positive")
    if trials < 100:
        raise PreconditionError("need at least 100 trials")
    space, r, n = q.space, q.r, q.n
    rng = dist.rng(stream)
    pool = dist._draw(rng, n_samples)

    probes: list[np.ndarray] = []
    for _ in range(trials):
        while True:
            offsets = np.stack([_ball_offset(space, rng, radius) for _ in range(n)])
            if float(np.max(space.norm(offsets))) >= _PROBE_FLOOR * radius:
                break
        probes.append(q.points + offsets)
    axis_pairs = [(i, j) for i in range(n) for j in range(space.dim)]
    if 2 * len(axis_pairs) > max_axis_probes:
        keep = rng.choice(len(axis_pairs), size=max_axis_probes // 2, replace=False)
        axis_pairs = [axis_pairs[k] for k in keep]
    for i, j in axis_pairs:
        for sgn in (+1.0, -1.0):
            tup = q.points.copy()
            tup[i, j] += sgn * radius
            probes.append(tup)
    for i in range(n):
        zs = dist._draw(rng, segment_draws)
        for z in zs:
            gap = float(space.norm(z - q.points[i]))
            if gap <= 1e-12:
                continue
            s_max = min(1.0, radius / gap)
            for s in (s_max, s_max / 4.0):
                if s * gap < _PROBE_FLOOR * radius:
                    continue  # below Monte-Carlo resolution, carries no evidence
                tup = q.points.copy()
                tup[i] = q.points[i] + s * (z - q.points[i])
                probes.append(tup)

    base, dgs, ses = _probe_statistics(space, pool, r, q.points, np.stack(probes))
    flats = 0
    best = None
    best_margin = 0.0
    best_dg = 0.0
    best_se = 0.0
    improved = False
    for t in range(len(probes)):
        dg, se = float(dgs[t]), float(ses[t])
        if dg < -3.0 * se:
            improved = True
            margin = dg + 3.0 * se
            if margin < best_margin:
                best_margin = margin
                best_dg, best_se = dg, se
                best = probes[t].copy()
        elif abs(dg) <= 3.0 * se:
            flats += 1

    flat_fraction = flats / len(probes)
    if improved:
        strictness = "refuted"
    elif flat_fraction > 0.0:
        strictness = "non_strict"
    else:
        strictness = "strict"
    return ProbeVerdict(
        strictness=strictness,
        improved=improved,
        flat_fraction=flat_fraction,
        radius=radius,
        trials=trials,
        total_probes=len(probes),
        n_samples=n_samples,
        base_distortion=base,
        best_improving_tuple=best,
        best_improvement=best_dg,
        best_improvement_std_error=best_se,
    )


@dataclass
class LocalMinStructureReport:
    """Structural facts that hold at any local minimum whose codepoints are
    non-isolated support points: pairwise distinctness, per-cell 1-level
    optimality, and stationarity."""

    applicable: bool
    reason: str = ""
    distinct_ok: bool = False
    min_pairwise_distance: float = np.nan
    cellwise_optimal_ok: bool = False
    cell_margins: np.ndarray | None = None
    stationarity: StationarityReport | None = None
    passed: bool = False

    def to_json(self) -> dict:
        return {
            "applicable": self.applicable,
            "reason": self.reason,
            "distinct_ok": self.distinct_ok,
            "min_pairwise_distance": self.min_pairwise_distance,
            "cellwise_optimal_ok": self.cellwise_optimal_ok,
            "cell_margins": None if self.cell_margins is None else self.cell_margins.tolist(),
            "stationarity": None if self.stationarity is None else self.stationarity.to_json(),
            "passed": self.passed,
        }


def local_min_structure_check(
    dist: Distribution,
    q: Quantizer,
    n_samples: int = 200_000,
    stream: int = 0,
    probe: ProbeVerdict | None = None,
    refine_starts: int = 8,
    stat_tol: float = 0.01,
) -> LocalMinStructureReport:
    """Check the structure forced at local minima inside the support.

    Requires a non-refuting probe, all codepoints in the support, and a
    support without isolated points (so continuous laws only).  Then asserts
    (i) pairwise distinctness, (ii) that no 1-level re-optimization of any
    sampled cell from ``refine_starts`` random starts improves on its
    codepoint by more than 3 paired standard errors, and (iii) stationarity.
    """
    if probe is not None and probe.strictness == "refuted":
        return LocalMinStructureReport(False, reason="probe refuted local minimality")
    if dist.support_has_isolated_points:
        return LocalMinStructureReport(
            False, reason="support has isolated points (atomic law)"
        )
    for a in q.points:
        if not dist.support_contains(a, tol=1e-9):
            return LocalMinStructureReport(
                False, reason="codepoint outside the support"
            )

    report = LocalMinStructureReport(True)
    dmin_pair = q.min_pairwise_distance()
    report.min_pairwise_distance = float(dmin_pair)
    report.distinct_ok = bool(dmin_pair > 1e-9)

    rng = dist.rng(stream)
    pool = dist._draw(rng, n_samples)
    owner, _, _ = _assign_chunk(q.space, q.points, pool)
    margins = np.full(q.n, np.nan)
    cell_ok = True
    for i in range(q.n):
        xs = pool[owner == i]
        if len(xs) == 0:
            cell_ok = False
            continue
        base_vals = q.space.norm(xs - q.points[i]) ** q.r
        best_gain, best_se = 0.0, 0.0
        for _ in range(refine_starts):
            y0 = xs[rng.integers(len(xs))]
            cand = _argmin_one_level(q.space, xs, q.r, y0)
            diff = q.space.norm(xs - cand) ** q.r - base_vals
            gain = -float(diff.mean())
            se = float(diff.std() / np.sqrt(len(xs)))
            if gain > best_gain:
                best_gain, best_se = gain, se
        margins[i] = best_gain - 3.0 * best_se
        if best_gain > 3.0 * best_se:
            cell_ok = False
    report.cell_margins = margins
    report.cellwise_optimal_ok = cell_ok

    report.stationarity = stationarity_check(
        dist, q, n_samples=n_samples, tol=stat_tol, stream=stream
    )
    report.passed = (
        report.distinct_ok and cell_ok and report.stationarity.verdict == "stationary"
    )
    return report


@dataclass
class SupportMembershipReport:
    """Support membership of strict-classified minima (convex support, Hilbert)."""

    n_starts: int
    strict_count: int = 0
    surviving_count: int = 0
    inconclusive: bool = True
    passed: bool = True
    records: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "n_starts": self.n_starts,
            "strict_count": self.strict_count,
            "surviving_count": self.surviving_count,
            "inconclusive": self.inconclusive,
            "passed": self.passed,
            "records": self.records,
        }


def strict_min_support_check(
    dist: Distribution,
    r: float,
    n: int,
    cfg: OptimizerConfig | None = None,
    n_starts: int = 32,
    base_stream: int = 0,
    probe_radius: float = 0.5,
    probe_trials: int = 150,
    clearance: float = 1e-6,
) -> SupportMembershipReport:
    """Multistart search; every strict-classified minimum must lie in the
    (convex) support, strictly inside it when r >= 2 and an interior exists.

    Probes run on each start's own optimization pool (common random numbers),
    so a pool-optimal output cannot be spuriously refuted by resampling noise.
    No strict minima found is reported as inconclusive, not failure.
    """
    space = dist.native_space
    if not isinstance(space, Euclidean):
        raise PreconditionError("support membership check runs in euclidean spaces")
    if not dist.support_is_convex:
        raise PreconditionError("support membership check needs a convex support")
    if r < 1.0:
        raise PreconditionError("r >= 1 required")
    cfg = cfg or OptimizerConfig(
        method="lloyd" if r == 2.0 else "cellwise", n_samples=200_000, max_iters=300
    )
    traces = multistart(dist, space, n, r, cfg, n_starts=n_starts, base_stream=base_stream)
    report = SupportMembershipReport(n_starts=n_starts)
    check_interior = r >= 2.0 and dist.support_has_interior and (
        dist.continuous or r == 2.0
    )
    for k, tr in enumerate(traces):
        verdict = local_min_probe(
            dist,
            tr.final,
            radius=probe_radius,
            trials=probe_trials,
            n_samples=cfg.n_samples,
            stream=base_stream + 2 * k,
        )
        rec = {
            "start": k,
            "strictness": verdict.strictness,
            "distortion": tr.final_distortion.value,
            "support_ok": None,
            "interior_ok": None,
        }
        if verdict.strictness != "refuted":
            report.surviving_count += 1
        if verdict.strictness == "strict":
            report.strict_count += 1
            support_ok = all(
                dist.support_contains(a, tol=1e-6) for a in tr.final.points
            )
            rec["support_ok"] = support_ok
            ok = support_ok
            if check_interior:
                interior_ok = all(
                    dist.boundary_clearance(a) > clearance for a in tr.final.points
                )
                rec["interior_ok"] = interior_ok
                ok = ok and interior_ok
            if not ok:
                report.passed = False
        report.records.append(rec)
    report.inconclusive = report.strict_count == 0
    return report


@dataclass
class GradientCheckReport:
    """Agreement of the analytic distortion gradient with central finite
    differences of the distortion, on common random numbers."""

    relative_error: float
    gradient_norm: float
    fd_norm: float
    eps: float
    n_samples: int

    def to_json(self) -> dict:
        return {
            "relative_error": self.relative_error,
            "gradient_norm": self.gradient_norm,
            "fd_norm": self.fd_norm,
            "eps": self.eps,
            "n_samples": self.n_samples,
        }


def gradient_fd_check(
    dist: Distribution,
    q: Quantizer,
    n_samples: int = 100_000,
    eps: float = 1e-4,
    stream: int = 0,
) -> GradientCheckReport:
    """Compare the analytic gradient with a central finite difference of the
    pool distortion; both sides see the same pool, so the comparison is exact
    up to O(eps^2) and assignment-boundary effects of measure O(eps)."""
    from .distortion import pool_gradient

    rng = dist.rng(stream)
    pool = dist._draw(rng, n_samples)
    grad = pool_gradient(q, pool).components

    n, dim = q.points.shape
    probes = []
    for i in range(n):
        for j in range(dim):
            for sgn in (+1.0, -1.0):
                tup = q.points.copy()
                tup[i, j] += sgn * eps
                probes.append(tup)
    _, dgs, _ = _probe_statistics(q.space, pool, q.r, q.points, np.stack(probes))
    fd = (dgs[0::2] - dgs[1::2]).reshape(n, dim) / (2.0 * eps)
    num = float(np.linalg.norm(fd - grad))
    den = float(np.linalg.norm(fd))
    return GradientCheckReport(
        relative_error=num / max(den, 1e-30),
        gradient_norm=float(np.linalg.norm(grad)),
        fd_norm=den,
        eps=eps,
        n_samples=n_samples,
    )


@dataclass
class CounterexampleReport:
    """Local minima that are neither strict nor supported: the uniform law on
    [-1, 1] with tuples (0, 3) and (0, 3, 3)."""

    radius: float
    configs: list = field(default_factory=list)
    all_reproduced: bool = True

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "all_reproduced": self.all_reproduced,
            "configs": self.configs,
        }


def counterexample_suite(
    seed: int = 20_240_401,
    radius: float = 0.5,
    trials: int = 2000,
    n_samples: int = 1_000_000,
    probe_samples: int = 200_000,
    r_values: tuple = (1.0, 2.0),
) -> CounterexampleReport:
    """Reproduce the non-strict local minima of the uniform law on [-1, 1].

    For each r, the tuples (0, 3) at n = 2 and (0, 3, 3) at n = 3 are local
    minimizers with a component outside the support; probing at radius <= 1
    must find no improvement but flat directions (non_strict).  At radius > 1
    an improving move exists (the far codepoint can reach mass), so a large
    tampered radius is expected to refute instead.  The two-point global
    candidate (-0.5, 0.5) must be strict and beat (0, 3): 1/12 < 1/3 at r = 2.
    """
    from .distributions import UniformInterval

    dist = UniformInterval(-1.0, 1.0, seed=seed)
    space = Euclidean(1)
    expected = "non_strict" if radius <= 1.0 else "refuted"
    report = CounterexampleReport(radius=radius)

    def add(name, q, expect_strictness, expect_stationary, stream):
        from .distortion import distortion as mc_distortion

        est = mc_distortion(dist, q, n_samples, stream=stream)
        exact = distortion_exact_1d(dist, q)
        probe = local_min_probe(
            dist, q, radius=radius, trials=trials, n_samples=probe_samples, stream=stream
        )
        stat = stationarity_check(dist, q, n_samples=min(n_samples, 200_000), stream=stream)
        support_ok = [bool(dist.support_contains(a, tol=1e-9)) for a in q.points]
        entry = {
            "name": name,
            "r": q.r,
            "points": q.points.reshape(-1).tolist(),
            "distortion": est.value,
            "distortion_std_error": est.std_error,
            "distortion_exact": exact,
            "probe": probe.strictness,
            "expected_probe": expect_strictness,
            "stationarity": stat.verdict,
            "expected_stationarity": expect_stationary,
            "support_membership": support_ok,
            "matches": probe.strictness == expect_strictness
            and stat.verdict == expect_stationary
            and abs(est.value - exact) <= 3.0 * est.std_error,
        }
        report.configs.append(entry)
        if not entry["matches"]:
            report.all_reproduced = False

    stream = 0
    for r in r_values:
        add(
            f"pair_outside_support_r{r:g}",
            Quantizer(space, r, [[0.0], [3.0]]),
            expected,
            "not_stationary",
            stream,
        )
        stream += 1
        add(
            f"duplicate_outside_support_r{r:g}",
            Quantizer(space, r, [[0.0], [3.0], [3.0]]),
            expected,
            "inapplicable",
            stream,
        )
        stream += 1
        add(
            f"two_point_optimum_r{r:g}",
            Quantizer(space, r, [[-0.5], [0.5]]),
            "strict",
            "stationary",
            stream,
        )
        stream += 1
    return report
