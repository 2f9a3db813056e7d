"""Independent oracles for the test suite.

Everything here is deliberately built on scipy/numpy primitives and brute
force, never on the library's own distance or gradient code, so a test can
check the library against an independent route.
"""

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import norm


def quad_distortion_uniform(lo, hi, points, r, **kw):
    """E min_i |X - a_i|^r for X ~ U[lo, hi], by adaptive quadrature."""
    pts = np.sort(np.asarray(points, dtype=float).reshape(-1))

    def integrand(x):
        return np.min(np.abs(x - pts)) ** r / (hi - lo)

    # split at codepoints and cell boundaries to keep quad happy
    knots = sorted(
        {lo, hi}
        | {p for p in pts if lo < p < hi}
        | {m for m in (pts[:-1] + pts[1:]) / 2 if lo < m < hi}
    )
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        total += quad(integrand, a, b, limit=200, **kw)[0]
    return total


def quad_distortion_gaussian(mu, sigma, points, r, span=12.0):
    """E min_i |X - a_i|^r for X ~ N(mu, sigma^2), by adaptive quadrature."""
    pts = np.sort(np.asarray(points, dtype=float).reshape(-1))

    def integrand(x):
        return np.min(np.abs(x - pts)) ** r * norm.pdf(x, mu, sigma)

    lo, hi = mu - span * sigma, mu + span * sigma
    knots = sorted({lo, hi} | set(pts) | set((pts[:-1] + pts[1:]) / 2))
    knots = [k for k in knots if lo <= k <= hi]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        total += quad(integrand, a, b, limit=200)[0]
    return total


def uniform_cell_mean(lo, hi, a, b):
    """Conditional mean of U[lo, hi] on [a, b]."""
    a, b = max(a, lo), min(b, hi)
    return (a + b) / 2.0


def brute_pool_distortion(norm_fn, points, xs, r):
    """Pool distortion by brute force: explicit loop over codepoints."""
    best = None
    for a in np.atleast_2d(points):
        d = norm_fn(xs - a)
        best = d if best is None else np.minimum(best, d)
    return float(np.mean(best**r))


def fd_pool_gradient(norm_fn, points, xs, r, eps=1e-4):
    """Central finite differences of the brute-force pool distortion."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros_like(points)
    for i in range(points.shape[0]):
        for j in range(points.shape[1]):
            plus = points.copy()
            plus[i, j] += eps
            minus = points.copy()
            minus[i, j] -= eps
            out[i, j] = (
                brute_pool_distortion(norm_fn, plus, xs, r)
                - brute_pool_distortion(norm_fn, minus, xs, r)
            ) / (2.0 * eps)
    return out


def newton_normal_symmetric_pair():
    """Optimal symmetric two-point quantizer (+-a) of N(0, 1) under squared error.

    The distortion of (-a, a) is G(a) = 2 * int_0^inf (x-a)^2 phi(x) dx; its
    critical point is found by root-finding the quadrature derivative.  The
    known value is sqrt(2/pi) ~ 0.7978845608.
    """

    def dG(a):
        return 2.0 * quad(
            lambda x: -2.0 * (x - a) * norm.pdf(x), 0.0, 12.0, limit=200
        )[0]

    return brentq(dG, 0.1, 2.0, xtol=1e-12)


def equispaced_uniform_distortion(n, lo=-1.0, hi=1.0, r=2.0):
    """Distortion of the equispaced n-point codebook on U[lo, hi]."""
    width = (hi - lo) / n
    pts = lo + width * (np.arange(n) + 0.5)
    return quad_distortion_uniform(lo, hi, pts, r)


def brownian_parseval_sum(K):
    """E ||X||_{L2([0,1])}^2 of the K-term expansion: sum of eigenvalues."""
    k = np.arange(1, K + 1)
    return float(np.sum(1.0 / ((k - 0.5) * np.pi) ** 2))
