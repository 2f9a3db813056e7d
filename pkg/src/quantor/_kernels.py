"""Fused probe-evaluation kernel.

Probing a tuple means re-scoring the whole pool against a small perturbed
codebook; doing that with numpy temporaries is memory-bound, so the hot path
is a single-pass numba kernel over (probe, sample) pairs.  Falls back to a
chunk-free numpy loop when numba is unavailable.  Accumulation order is fixed
either way, keeping results bit-reproducible.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _w2_probe_stats_py(pool, w, base, probes, r):
    """Numpy fallback: incremental per-codepoint minima, no (N, n) temporaries."""
    xw = pool * w
    xx = np.einsum("ij,ij->i", xw, pool)

    def values(pts):
        m = None
        for a in pts:
            d2 = xx - 2.0 * (xw @ a) + float((w * a) @ a)
            m = d2 if m is None else np.minimum(m, d2, out=m)
        np.clip(m, 0.0, None, out=m)
        if r == 2.0:
            return m
        if r == 1.0:
            return np.sqrt(m)
        return m ** (r * 0.5)

    v0 = values(base)
    base_sum = float(v0.sum())
    sums = np.empty(len(probes))
    sqs = np.empty(len(probes))
    for t, tup in enumerate(probes):
        diff = values(tup) - v0
        sums[t] = float(diff.sum())
        sqs[t] = float(diff @ diff)
    return base_sum, sums, sqs


if HAVE_NUMBA:

    @njit(cache=True)
    def _w2_probe_stats_jit(pool, w, base, probes, r):  # pragma: no cover - jitted
        big, d = pool.shape
        t_count = probes.shape[0]
        n = base.shape[0]
        v0 = np.empty(big)
        base_sum = 0.0
        for k in range(big):
            dmin = np.inf
            for i in range(n):
                s = 0.0
                for j in range(d):
                    diff = pool[k, j] - base[i, j]
                    s += w[j] * diff * diff
                if s < dmin:
                    dmin = s
            if r == 2.0:
                v = dmin
            elif r == 1.0:
                v = np.sqrt(dmin)
            else:
                v = dmin ** (r * 0.5)
            v0[k] = v
            base_sum += v
        sums = np.zeros(t_count)
        sqs = np.zeros(t_count)
        for t in range(t_count):
            acc = 0.0
            acc2 = 0.0
            for k in range(big):
                dmin = np.inf
                for i in range(n):
                    s = 0.0
                    for j in range(d):
                        diff = pool[k, j] - probes[t, i, j]
                        s += w[j] * diff * diff
                    if s < dmin:
                        dmin = s
                if r == 2.0:
                    v = dmin
                elif r == 1.0:
                    v = np.sqrt(dmin)
                else:
                    v = dmin ** (r * 0.5)
                dv = v - v0[k]
                acc += dv
                acc2 += dv * dv
            sums[t] = acc
            sqs[t] = acc2
        return base_sum, sums, sqs


def w2_probe_stats(pool, w, base, probes, r):
    """Paired sums for weighted-l2 norms: (base_sum, sum(diff), sum(diff^2))."""
    pool = np.ascontiguousarray(pool)
    probes = np.ascontiguousarray(probes)
    base = np.ascontiguousarray(base)
    w = np.ascontiguousarray(w)
    if HAVE_NUMBA:
        return _w2_probe_stats_jit(pool, w, base, probes, float(r))
    return _w2_probe_stats_py(pool, w, base, probes, float(r))
