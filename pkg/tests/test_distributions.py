"""Samplers, support oracles, and the Karhunen-Loeve testbed."""

import numpy as np
import pytest

from quantor.distributions import (
    BrownianKL,
    Empirical,
    GaussianIso,
    UniformDisk,
    UniformInterval,
    brownian_kl_factory,
    distribution_from_json,
)
from quantor.errors import UnsupportedOperation
from quantor.spaces import L1Grid, LpGrid

import oracles

ALL_DISTS = [
    UniformInterval(-1.0, 1.0, seed=5),
    GaussianIso(2, seed=6),
    UniformDisk((0.5, -0.25), 2.0, seed=7),
    Empirical(points=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], seed=8),
    brownian_kl_factory(32, 8, seed=9),
]


def test_sampling_is_deterministic_bytewise():
    for dist in ALL_DISTS:
        a = dist.sample(3, 257)
        b = dist.sample(3, 257)
        assert a.tobytes() == b.tobytes()


def test_streams_are_disjoint():
    u = UniformInterval(-1.0, 1.0, seed=5)
    assert not np.array_equal(u.sample(0, 100), u.sample(1, 100))


def test_uniform_mean_clt_bound():
    # 3 sigma / sqrt(N) with sigma = 1/sqrt(3): |mean| <= 0.0052 at N = 1e6
    s = UniformInterval(-1.0, 1.0, seed=41).sample(0, 1_000_000)
    assert abs(s.mean()) <= 0.0052


def test_gaussian_variance_clt_bound():
    s = GaussianIso(1, seed=42).sample(0, 1_000_000)
    assert 0.99 <= s.var() <= 1.01


def test_single_atom_draws_constant():
    e = Empirical(points=[[2.0, -1.0]], seed=1)
    s = e.sample(0, 50)
    assert np.all(s == np.array([2.0, -1.0]))


def test_empirical_weights_validated():
    with pytest.raises(ValueError):
        Empirical(points=[[0.0], [1.0]], weights=[0.7, 0.2])
    with pytest.raises(ValueError):
        Empirical(points=[[0.0], [1.0]], weights=[1.2, -0.2])


def test_support_contains_basics():
    u = UniformInterval(-1.0, 1.0, seed=0)
    assert u.support_contains([0.3], tol=0.0)
    assert not u.support_contains([3.0], tol=0.5)
    d = UniformDisk((0.0, 0.0), 1.0, seed=0)
    assert d.support_contains([0.6, 0.8], tol=1e-9)
    assert not d.support_contains([1.1, 0.0], tol=0.05)


def test_all_samples_lie_in_declared_support():
    for dist in ALL_DISTS:
        xs = dist.sample(11, 2000)
        assert all(dist.support_contains(x, tol=1e-9) for x in xs)


def test_project_interval_and_disk():
    u = UniformInterval(-1.0, 1.0, seed=0)
    assert u.project_to_support([3.0])[0] == 1.0
    assert u.project_to_support([0.2])[0] == 0.2
    d = UniformDisk((0.0, 0.0), 1.0, seed=0)
    assert np.allclose(d.project_to_support([3.0, 4.0]), [0.6, 0.8])
    inside = np.array([0.1, -0.2])
    assert np.array_equal(d.project_to_support(inside), inside)


def test_projection_variational_inequality():
    # <x - b, y - b> <= 0 for support points y, checked on sampled y
    d = UniformDisk((1.0, 1.0), 1.5, seed=3)
    x = np.array([5.0, -2.0])
    b = d.project_to_support(x)
    ys = d.sample(0, 500)
    assert np.all((ys - b) @ (x - b) <= 1e-9)
    hull = Empirical(
        points=[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]], seed=4, hull_support=True
    )
    x = np.array([2.0, 2.0])
    b = hull.project_to_support(x)
    assert np.allclose(b, [1.0, 1.0], atol=1e-6)
    ys = hull.sample(0, 200)
    assert np.all((ys - b) @ (x - b) <= 1e-6)


def test_atom_support_is_not_projectable():
    e = Empirical(points=[[0.0, 0.0], [1.0, 0.0]], seed=0)
    with pytest.raises(UnsupportedOperation):
        e.project_to_support(np.array([0.4, 0.0]))


def test_brownian_single_mode_is_rank_one():
    b = brownian_kl_factory(64, 1, seed=12)
    paths = b.sample(0, 16)
    t = b.space.grid
    mode = np.sqrt(2.0) * np.sin(0.5 * np.pi * t) / (0.5 * np.pi)
    # every path is a scalar multiple of the first eigenfunction
    coef = paths[:, -1] / mode[-1]
    assert np.allclose(paths, coef[:, None] * mode[None, :], atol=1e-12)


def test_brownian_energy_matches_eigenvalue_sum():
    b = brownian_kl_factory(64, 16, seed=13)
    paths = b.sample(0, 100_000)
    energy = float(np.mean(b.space.norm(paths) ** 2))
    assert energy == pytest.approx(oracles.brownian_parseval_sum(16), rel=0.02)


def test_brownian_paths_start_at_zero():
    b = brownian_kl_factory(16, 4, seed=14)
    assert np.all(b.sample(2, 100)[:, 0] == 0.0)


def test_brownian_requires_grid_space_and_valid_k():
    with pytest.raises(UnsupportedOperation):
        BrownianKL(space=None, K=2)
    with pytest.raises(ValueError):
        brownian_kl_factory(8, 9)


def test_brownian_l1_variant():
    b = brownian_kl_factory(16, 4, seed=2, p=1.0)
    assert isinstance(b.space, LpGrid)
    assert b.space.p == 1.0


def test_moment_bound_caches_and_matches():
    u = UniformInterval(-1.0, 1.0, seed=21)
    m1 = u.moment_bound(1.0)
    assert m1 == pytest.approx(0.5, abs=0.01)
    assert u.moment_bound(1.0) is not None  # cached second call is cheap
    assert u.moment_bound(0.0) == 1.0
    e = Empirical(points=[[3.0], [4.0]], weights=[0.5, 0.5], seed=1)
    assert e.moment_bound(2.0) == pytest.approx(12.5, rel=0.01)


def test_moment_bound_respects_space():
    b = brownian_kl_factory(16, 4, seed=3)
    m_l2 = b.moment_bound(1.0)
    m_l1 = b.moment_bound(1.0, L1Grid(16))
    assert m_l2 != m_l1


def test_json_roundtrip_preserves_sampling():
    import json

    for dist in ALL_DISTS:
        back = distribution_from_json(json.loads(json.dumps(dist.to_json())))
        assert np.array_equal(back.sample(5, 64), dist.sample(5, 64))


def test_empirical_csv_loading(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("0.0,1.0\n2.0,3.0\n4.0,5.0\n")
    e = Empirical.from_csv(path, seed=9)
    assert e.points.shape == (3, 2)
    assert len(e.atoms) == 3
    assert e.support_contains([2.0, 3.0], tol=0.0)
