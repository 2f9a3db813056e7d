"""Command-line front end.

Subcommands: quantize, verify, sweep, counterexample, gradcheck.  Options
come from flags or a JSON/TOML config file (flags win); the environment
variable QUANTOR_SEED overrides any config-file seed.  Outputs are JSON/CSV
with sorted keys and no timestamps, so identical configs and seeds produce
byte-identical files (sweep timing columns are opt-in for that reason).

Exit codes: 0 ok, 1 assertion failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .distortion import Quantizer, distortion
from .distributions import (
    Distribution,
    Empirical,
    GaussianIso,
    UniformDisk,
    UniformInterval,
    brownian_kl_factory,
    distribution_from_json,
)
from .errors import QuantorError
from .optimize import (
    OptimizerConfig,
    best_trace,
    multistart,
    _run_method,
    random_init,
)
from .spaces import Euclidean, L1Grid, LpGrid, space_from_json
from .verify import (
    counterexample_suite,
    gradient_fd_check,
    local_min_probe,
    local_min_structure_check,
    stationarity_check,
)

_EXIT_OK = 0
_EXIT_ASSERT = 1
_EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    if p.suffix == ".toml":
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        return toml.loads(p.read_text())
    return json.loads(p.read_text())


def parse_dist(spec: str, seed: int) -> Distribution:
    """Parse a distribution descriptor: uniform:lo,hi | gaussian:d[,mean,sigma]
    | disk:cx,cy,radius | brownian:m,K[,p] | empirical:points.csv"""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "uniform":
            lo, hi = (float(v) for v in rest.split(","))
            return UniformInterval(lo, hi, seed=seed)
        if kind == "gaussian":
            parts = rest.split(",")
            d = int(parts[0])
            mean = float(parts[1]) if len(parts) > 1 else 0.0
            sigma = float(parts[2]) if len(parts) > 2 else 1.0
            return GaussianIso(d, mean, sigma, seed=seed)
        if kind == "disk":
            cx, cy, radius = (float(v) for v in rest.split(","))
            return UniformDisk((cx, cy), radius, seed=seed)
        if kind == "brownian":
            parts = rest.split(",")
            m, k = int(parts[0]), int(parts[1])
            p = float(parts[2]) if len(parts) > 2 else 2.0
            return brownian_kl_factory(m, k, seed=seed, p=p)
        if kind == "empirical":
            return Empirical.from_csv(rest, seed=seed)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad distribution descriptor {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {kind!r}")


def _resolve(args, cfg_file: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in cfg_file:
        return cfg_file[key]
    return default


def _resolve_seed(args, cfg_file: dict, default: int = 0) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("QUANTOR_SEED")
    if env is not None:
        return int(env)
    return int(cfg_file.get("seed", default))


def _opt_config(args, cfg_file) -> OptimizerConfig:
    return OptimizerConfig(
        method=_resolve(args, cfg_file, "method", "lloyd"),
        max_iters=int(_resolve(args, cfg_file, "max_iters", 200)),
        n_samples=int(_resolve(args, cfg_file, "samples", 100_000)),
        step0=float(_resolve(args, cfg_file, "step0", 0.5)),
        empty_cell_policy=_resolve(
            args, cfg_file, "empty_cell_policy", "resample_from_support"
        ),
        stream=int(_resolve(args, cfg_file, "stream", 0)),
    )


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def cmd_quantize(args) -> int:
    cfg_file = _load_config(args.config) if args.config else {}
    dist_spec = _resolve(args, cfg_file, "dist", None)
    if dist_spec is None:
        raise ConfigError("--dist is required (flag or config file)")
    seed = _resolve_seed(args, cfg_file)
    dist = parse_dist(dist_spec, seed)
    r = float(_resolve(args, cfg_file, "r", 2.0))
    n = int(_resolve(args, cfg_file, "n", 1))
    starts = int(_resolve(args, cfg_file, "starts", 4))
    cfg = _opt_config(args, cfg_file)
    if cfg.method == "lloyd" and r != 2.0:
        cfg = OptimizerConfig(**{**cfg.__dict__, "method": "cellwise"})
    space = dist.native_space

    traces = multistart(dist, space, n, r, cfg, n_starts=starts, base_stream=cfg.stream)
    best, best_est = best_trace(traces, dist, eval_samples=cfg.n_samples)

    out = Path(_resolve(args, cfg_file, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "quantizer.json", best.final.to_json())
    (out / "trace.jsonl").write_text(best.to_jsonl() + "\n")
    stat = stationarity_check(dist, best.final, n_samples=cfg.n_samples, stream=cfg.stream)
    summary = {
        "distortion": best_est.value,
        "distortion_std_error": best_est.std_error,
        "quantization_error": best_est.e_r,
        "residual_dual_norms": None
        if stat.residual_dual_norms is None
        else stat.residual_dual_norms.tolist(),
        "stationarity": stat.verdict,
        "n": n,
        "r": r,
        "method": cfg.method,
        "starts": starts,
        "seed": seed,
    }
    _write_json(out / "summary.json", summary)
    print(f"distortion {best_est.value:.6g} (e_r {best_est.e_r:.6g}) -> {out}")
    return _EXIT_OK


def cmd_verify(args) -> int:
    cfg_file = _load_config(args.config) if args.config else {}
    try:
        qobj = json.loads(Path(args.quantizer).read_text())
        q = Quantizer.from_json(qobj)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"malformed quantizer file: {exc}") from exc
    dist_spec = _resolve(args, cfg_file, "dist", None)
    if dist_spec is None:
        raise ConfigError("--dist is required")
    seed = _resolve_seed(args, cfg_file)
    dist = parse_dist(dist_spec, seed)
    if dist.dim != q.space.dim:
        raise ConfigError("quantizer space does not match the distribution")
    n_samples = int(_resolve(args, cfg_file, "samples", 200_000))
    radius = float(_resolve(args, cfg_file, "radius", 0.5))
    trials = int(_resolve(args, cfg_file, "trials", 500))
    stream = int(_resolve(args, cfg_file, "stream", 0))

    stat = stationarity_check(dist, q, n_samples=n_samples, stream=stream)
    probe = local_min_probe(
        dist, q, radius=radius, trials=trials, n_samples=n_samples, stream=stream
    )
    report = {
        "stationarity": stat.to_json(),
        "probe": probe.to_json(),
    }
    if probe.strictness != "refuted" and not dist.support_has_isolated_points:
        structure = local_min_structure_check(
            dist, q, n_samples=n_samples, stream=stream, probe=probe
        )
        report["local_min_structure"] = structure.to_json()

    out = Path(args.out or "verify_report.json")
    _write_json(out, report)
    print(
        f"stationarity: {stat.verdict}; probe: {probe.strictness} -> {out}"
    )
    code = _EXIT_OK
    if args.assert_stationary and stat.verdict != "stationary":
        code = _EXIT_ASSERT
    if args.assert_strict and probe.strictness != "strict":
        code = _EXIT_ASSERT
    return code


def cmd_sweep(args) -> int:
    cfg_file = _load_config(args.config) if args.config else {}
    dist_spec = _resolve(args, cfg_file, "dist", None)
    if dist_spec is None:
        raise ConfigError("--dist is required")
    seed = _resolve_seed(args, cfg_file)
    dist = parse_dist(dist_spec, seed)
    r = float(_resolve(args, cfg_file, "r", 2.0))
    n_range = _resolve(args, cfg_file, "n_range", "1:4")
    try:
        lo, hi = (int(v) for v in str(n_range).split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad n-range {n_range!r}, expected LO:HI") from exc
    if not 1 <= lo <= hi:
        raise ConfigError(f"bad n-range {n_range!r}")
    starts = int(_resolve(args, cfg_file, "starts", 16))
    cfg = _opt_config(args, cfg_file)
    if cfg.method == "lloyd" and r != 2.0:
        cfg = OptimizerConfig(**{**cfg.__dict__, "method": "cellwise"})
    eval_samples = int(_resolve(args, cfg_file, "eval_samples", 400_000))
    space = dist.native_space

    rows = []
    for n in range(lo, hi + 1):
        t0 = time.perf_counter()
        traces = multistart(
            dist, space, n, r, cfg, n_starts=starts, base_stream=cfg.stream + 1000 * n
        )
        best, best_est = best_trace(traces, dist, eval_samples=eval_samples)
        stat = stationarity_check(
            dist, best.final, n_samples=cfg.n_samples, stream=cfg.stream + 1000 * n
        )
        elapsed = time.perf_counter() - t0
        residual = (
            float(np.max(stat.residual_dual_norms))
            if stat.residual_dual_norms is not None
            else float("nan")
        )
        rows.append((n, best_est.value, best_est.std_error, residual, elapsed))

    out = Path(args.out or "sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["n", "distortion", "std_error", "residual"]
        if args.timings:
            header.append("wall_time_s")
        writer.writerow(header)
        for n, val, se, res, elapsed in rows:
            row = [n, f"{val:.10g}", f"{se:.6g}", f"{res:.6g}"]
            if args.timings:
                row.append(f"{elapsed:.3f}")
            writer.writerow(row)
    print(f"swept n={lo}..{hi} -> {out}")
    return _EXIT_OK


def cmd_counterexample(args) -> int:
    cfg_file = _load_config(args.config) if args.config else {}
    seed = _resolve_seed(args, cfg_file, default=20_240_401)
    radius = float(_resolve(args, cfg_file, "radius", 0.5))
    trials = int(_resolve(args, cfg_file, "trials", 2000))
    n_samples = int(_resolve(args, cfg_file, "samples", 500_000))
    r_arg = _resolve(args, cfg_file, "r", None)
    r_values = (
        tuple(float(v) for v in str(r_arg).split(",")) if r_arg is not None else (1.0, 2.0)
    )
    report = counterexample_suite(
        seed=seed, radius=radius, trials=trials, n_samples=n_samples, r_values=r_values
    )
    out = Path(args.out or "counterexample_report.json")
    _write_json(out, report.to_json())
    for entry in report.configs:
        tag = "ok" if entry["matches"] else "MISMATCH"
        note = ""
        if radius > 1.0 and "outside_support" in entry["name"]:
            note = " (expected at large radius: improving move within reach)"
        print(
            f"[{tag}] {entry['name']}: probe={entry['probe']} "
            f"stationarity={entry['stationarity']}{note}"
        )
    print(f"report -> {out}")
    return _EXIT_OK if report.all_reproduced else _EXIT_ASSERT


def cmd_gradcheck(args) -> int:
    cfg_file = _load_config(args.config) if args.config else {}
    seed = _resolve_seed(args, cfg_file, default=7)
    n_samples = int(_resolve(args, cfg_file, "samples", 100_000))
    eps = float(_resolve(args, cfg_file, "eps", 1e-4))
    tuples = int(_resolve(args, cfg_file, "tuples", 20))
    threshold = float(_resolve(args, cfg_file, "threshold", 1e-3))
    grid_m = int(_resolve(args, cfg_file, "grid_m", 16))

    cases = []
    gauss = GaussianIso(2, seed=seed)
    l2 = brownian_kl_factory(grid_m, grid_m // 2, seed=seed + 1)
    l1 = brownian_kl_factory(grid_m, grid_m // 2, seed=seed + 2, p=1.0)
    l1_space = L1Grid(grid_m)
    roster = [
        (gauss, gauss.native_space),
        (l2, l2.native_space),
        (l1, l1_space),
    ]
    import itertools
    import warnings as _warnings

    r_cycle = itertools.cycle((1.0, 2.0, 3.0))
    results = []
    worst = 0.0
    for k in range(tuples):
        dist, space = roster[k % len(roster)]
        r = next(r_cycle)
        n = 2 + (k % 3)
        q = random_init(dist, space, n, r, stream=1000 + k)
        q = Quantizer(space, r, q.points)
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore", RuntimeWarning)
            rep = gradient_fd_check(dist, q, n_samples=n_samples, eps=eps, stream=k)
        worst = max(worst, rep.relative_error)
        results.append(
            {
                "case": k,
                "space": space.kind,
                "r": r,
                "n": n,
                "relative_error": rep.relative_error,
            }
        )
    report = {"worst_relative_error": worst, "threshold": threshold, "cases": results}
    out = Path(args.out or "gradcheck_report.json")
    _write_json(out, report)
    status = "ok" if worst < threshold else "FAIL"
    print(f"[{status}] worst relative error {worst:.3g} (threshold {threshold:g}) -> {out}")
    return _EXIT_OK if worst < threshold else _EXIT_ASSERT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantor",
        description="Lr-optimal quantization of probability distributions on normed spaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_dist=True):
        p.add_argument("--config", help="JSON or TOML config file (flags override)")
        p.add_argument("--seed", type=int, help="base seed (QUANTOR_SEED overrides config)")
        if with_dist:
            p.add_argument(
                "--dist",
                help="distribution: uniform:lo,hi | gaussian:d[,mean,sigma] | "
                "disk:cx,cy,radius | brownian:m,K[,p] | empirical:file.csv",
            )
        p.add_argument("--samples", type=int, help="Monte-Carlo samples per estimate")
        p.add_argument("--stream", type=int, help="base RNG stream")

    p = sub.add_parser("quantize", help="construct a quantizer")
    common(p)
    p.add_argument("--r", type=float, help="distortion exponent (default 2)")
    p.add_argument("--n", type=int, help="codebook size (default 1)")
    p.add_argument("--method", choices=["lloyd", "cellwise", "gradient_descent", "stochastic"])
    p.add_argument("--starts", type=int, help="multistart count (default 4)")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--out", help="output directory (default .)")
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("verify", help="verify a quantizer file")
    p.add_argument("quantizer", help="quantizer JSON file")
    common(p)
    p.add_argument("--radius", type=float, help="probe radius (default 0.5)")
    p.add_argument("--trials", type=int, help="probe trials (default 500)")
    p.add_argument("--out", help="report path (default verify_report.json)")
    p.add_argument(
        "--assert-stationary",
        action="store_true",
        help="exit 1 unless the verdict is stationary",
    )
    p.add_argument(
        "--assert-strict",
        action="store_true",
        help="exit 1 unless the probe classifies strict",
    )
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("sweep", help="optimize over a range of levels")
    common(p)
    p.add_argument("--r", type=float)
    p.add_argument("--n-range", dest="n_range", help="LO:HI (default 1:4)")
    p.add_argument("--starts", type=int, help="multistarts per level (default 16)")
    p.add_argument("--method", choices=["lloyd", "cellwise", "gradient_descent"])
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--eval-samples", dest="eval_samples", type=int)
    p.add_argument("--out", help="CSV path (default sweep.csv)")
    p.add_argument(
        "--timings",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="include wall-time column (disable for byte-reproducible output)",
    )
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("counterexample", help="reproduce the non-strict local minima")
    common(p, with_dist=False)
    p.add_argument("--r", help="comma-separated r values (default 1,2)")
    p.add_argument("--radius", type=float, help="probe radius (default 0.5)")
    p.add_argument("--trials", type=int, help="probe trials (default 2000)")
    p.add_argument("--out", help="report path")
    p.set_defaults(fn=cmd_counterexample)

    p = sub.add_parser("gradcheck", help="gradient vs finite-difference check")
    common(p, with_dist=False)
    p.add_argument("--tuples", type=int, help="number of random tuples (default 20)")
    p.add_argument("--eps", type=float, help="finite-difference step (default 1e-4)")
    p.add_argument("--threshold", type=float, help="pass threshold (default 1e-3)")
    p.add_argument("--out", help="report path")
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, QuantorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
