"""Voronoi assignment, distortion estimates, admissibility, and the gradient."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantor.distortion import (
    Quantizer,
    admissibility,
    distortion,
    distortion_exact_1d,
    distortion_gradient,
    pool_distortion,
    pool_gradient,
    project,
    voronoi_assign,
)
from quantor.distributions import (
    Empirical,
    GaussianIso,
    UniformInterval,
    brownian_kl_factory,
)
from quantor.errors import NumericRange, PreconditionError, UnsupportedOperation
from quantor.spaces import Euclidean, L1Grid

import oracles

E1 = Euclidean(1)
U = UniformInterval(-1.0, 1.0, seed=17)


def q1(points, r=2.0):
    return Quantizer(E1, r, [[p] for p in points])


# -- assignment ---------------------------------------------------------------


def test_equidistant_tie_goes_to_lowest_index():
    va = voronoi_assign(q1([-0.5, 0.5]), np.array([[0.0]]))
    assert va.owner[0] == 0
    assert va.tie_flag[0]


def test_empty_cell_of_faraway_codepoint():
    xs = U.sample(0, 10_000)
    va = voronoi_assign(q1([0.0, 3.0]), xs)
    assert np.all(va.owner == 0)
    assert np.allclose(va.cell_mass, [1.0, 0.0])


def test_single_codepoint_owns_everything():
    xs = U.sample(1, 500)
    va = voronoi_assign(q1([0.3]), xs)
    assert np.all(va.owner == 0)


def test_cell_mass_sums_to_one():
    xs = U.sample(2, 9999)
    va = voronoi_assign(q1([-0.7, -0.1, 0.4]), xs)
    assert va.cell_mass.sum() == pytest.approx(1.0, abs=1e-12)


def test_tie_fraction_negligible_for_continuous_laws():
    xs = U.sample(3, 200_000)
    va = voronoi_assign(q1([-0.5, 0.1, 0.6]), xs)
    assert va.tie_flag.mean() <= 1e-4


def test_assignment_csv_dump():
    va = voronoi_assign(q1([-0.5, 0.5]), np.array([[0.0], [0.9]]))
    buf = io.StringIO()
    va.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "sample_index,owner,tie_flag"
    assert lines[1] == "0,0,1"
    assert lines[2] == "1,1,0"


# -- projection ---------------------------------------------------------------


def test_codepoints_are_fixed_points():
    q = q1([-0.5, 0.5])
    assert project(q, np.array([0.5]))[0] == 0.5


def test_projection_nearest_neighbor():
    assert project(q1([-0.5, 0.5]), np.array([0.9]))[0] == 0.5


def test_projection_idempotent_and_distance_minimizing():
    rng = np.random.default_rng(23)
    pts = rng.normal(size=(5, 2))
    q = Quantizer(Euclidean(2), 2.0, pts)
    xs = rng.normal(size=(10_000, 2)) * 2.0
    proj = project(q, xs)
    # brute-force distance to the codebook
    brute = np.min(
        np.linalg.norm(xs[:, None, :] - pts[None, :, :], axis=2), axis=1
    )
    assert np.allclose(np.linalg.norm(xs - proj, axis=1), brute, atol=1e-12)
    again = project(q, proj)
    assert np.array_equal(proj, again)


# -- distortion ---------------------------------------------------------------


@pytest.mark.parametrize(
    "points,expected",
    [
        ([0.0], 1.0 / 3.0),
        ([0.0, 3.0], 1.0 / 3.0),
        ([-0.5, 0.5], 1.0 / 12.0),
    ],
)
def test_distortion_against_integral_oracle(points, expected):
    oracle = oracles.quad_distortion_uniform(-1, 1, points, 2.0)
    assert oracle == pytest.approx(expected, abs=1e-12)
    est = distortion(U, q1(points), 200_000, stream=4)
    assert abs(est.value - oracle) <= 3.0 * est.std_error


def test_quantization_error_is_distortion_root():
    est = distortion(U, q1([-0.5, 0.5]), 50_000, stream=5)
    assert est.e_r == pytest.approx(est.value**0.5)


def test_exact_1d_uniform_examples():
    assert distortion_exact_1d(U, q1([-0.5, 0.5])) == pytest.approx(1.0 / 12.0, abs=1e-15)
    assert distortion_exact_1d(U, q1([0.0], r=1.0)) == pytest.approx(0.5, abs=1e-15)


def test_exact_1d_gaussian_examples():
    g = GaussianIso(1, seed=0)
    assert distortion_exact_1d(g, q1([0.0])) == pytest.approx(1.0, abs=1e-12)
    a = float(np.sqrt(2.0 / np.pi))
    assert distortion_exact_1d(g, q1([-a, a])) == pytest.approx(
        1.0 - 2.0 / np.pi, abs=1e-12
    )


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_exact_1d_matches_quadrature_on_random_configs(r):
    rng = np.random.default_rng(31)
    g = GaussianIso(1, mean=0.4, sigma=1.3, seed=0)
    for _ in range(5):
        pts = np.sort(rng.normal(size=3)) * 1.5
        qu = Quantizer(E1, r, pts[:, None])
        assert distortion_exact_1d(U, qu) == pytest.approx(
            oracles.quad_distortion_uniform(-1, 1, pts, r), rel=1e-9, abs=1e-12
        )
        assert distortion_exact_1d(g, qu) == pytest.approx(
            oracles.quad_distortion_gaussian(0.4, 1.3, pts, r), rel=1e-7
        )


def test_exact_1d_duplicates_equal_set_value():
    assert distortion_exact_1d(U, q1([0.0, 3.0, 3.0])) == pytest.approx(
        distortion_exact_1d(U, q1([0.0, 3.0])), abs=1e-15
    )


def test_exact_1d_unsupported_combination():
    with pytest.raises(UnsupportedOperation):
        distortion_exact_1d(GaussianIso(1), q1([0.0], r=3.0))
    with pytest.raises(UnsupportedOperation):
        distortion_exact_1d(GaussianIso(2), Quantizer(Euclidean(2), 2.0, [[0.0, 0.0]]))


def test_distortion_overflow_raises():
    with pytest.raises(NumericRange):
        distortion(U, q1([5.0], r=6000.0), 1000, stream=0)


# -- admissibility ------------------------------------------------------------


def test_admissible_two_point_tuple():
    adm = admissibility(U, q1([-0.5, 0.5]), 100_000, stream=6)
    assert adm.open_mass == pytest.approx(1.0, abs=1e-4)
    assert adm.admissible(1e-3)


def test_duplicated_codepoint_has_zero_open_mass():
    adm = admissibility(U, q1([0.0, 3.0, 3.0]), 50_000, stream=7)
    assert adm.per_cell_open_mass[1] == 0.0
    assert adm.per_cell_open_mass[2] == 0.0


def test_atom_on_cell_boundary_is_flagged():
    e = Empirical(points=[[-1.0], [0.0], [1.0]], seed=3)
    adm = admissibility(e, q1([-1.0, 1.0]), 10_000, stream=8)
    # the atom at 0 ties between both cells, so open mass is visibly short of 1
    assert adm.open_mass < 0.9
    assert not adm.admissible(1e-3)


# -- gradient -----------------------------------------------------------------


def test_gradient_vanishes_at_symmetric_center():
    gv = distortion_gradient(U, q1([0.0]), 200_000, stream=9)
    assert abs(gv.components[0, 0]) <= 3.0 * gv.std_error[0, 0]


def test_gradient_vanishes_at_two_point_optimum():
    gv = distortion_gradient(U, q1([-0.5, 0.5]), 200_000, stream=10)
    assert np.all(np.abs(gv.components) <= 3.0 * gv.std_error)


def test_gradient_matches_independent_fd_oracle():
    g2 = GaussianIso(2, seed=29)
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(3, 2))
    q = Quantizer(Euclidean(2), 2.0, pts)
    xs = g2.sample(11, 100_000)
    grad = pool_gradient(q, xs).components
    fd = oracles.fd_pool_gradient(
        lambda d: np.linalg.norm(d, axis=-1), pts, xs, 2.0, eps=1e-4
    )
    rel = np.linalg.norm(fd - grad) / np.linalg.norm(fd)
    assert rel < 1e-3


def test_gradient_refuses_r_below_one():
    with pytest.raises(PreconditionError):
        distortion_gradient(U, q1([0.0], r=0.5), 1000)


def test_gradient_r1_atom_collision_refused():
    e = Empirical(points=[[0.0], [1.0]], seed=4)
    with pytest.raises(PreconditionError):
        distortion_gradient(e, q1([0.0], r=1.0), 1000)
    # distinct codepoints are fine
    distortion_gradient(e, q1([0.25, 0.75], r=1.0), 1000)


def test_degeneracy_warning_on_pinned_coordinate():
    # every Brownian path vanishes at t = 0, so the L1 gradient is degenerate
    # on all samples; the estimator must warn and use sign(0) = 0
    b = brownian_kl_factory(16, 4, seed=5, p=1.0)
    q = Quantizer(L1Grid(16), 2.0, b.sample(0, 2)[:2])
    with pytest.warns(RuntimeWarning, match="degenerate"):
        gv = distortion_gradient(b, q, 5000, stream=1)
    assert gv.degenerate_fraction > 0.999


# -- structural properties ----------------------------------------------------


def test_adding_codepoint_never_increases_distortion():
    rng = np.random.default_rng(37)
    xs = U.sample(12, 20_000)
    for _ in range(100):
        pts = rng.uniform(-1, 1, size=rng.integers(1, 4))
        c = rng.uniform(-1, 1)
        base = pool_distortion(q1(pts), xs)
        grown = pool_distortion(q1(list(pts) + [c]), xs)
        assert grown.value <= base.value  # pointwise domination, same pool


@given(
    move=st.floats(min_value=-0.3, max_value=0.3),
    shift=st.floats(min_value=-0.2, max_value=0.2),
)
@settings(max_examples=30, deadline=None)
def test_quantization_error_is_lipschitz_in_codebook(move, shift):
    xs = U.sample(13, 20_000)
    a = q1([-0.5 + move, 0.5 + shift])
    b = q1([-0.5, 0.5])
    ea = pool_distortion(a, xs)
    eb = pool_distortion(b, xs)
    max_move = max(abs(move), abs(shift))
    assert abs(ea.e_r - eb.e_r) <= max_move + 1e-12


def test_joint_scaling_is_exact_for_power_of_two():
    xs = U.sample(14, 50_000)
    q = q1([-0.5, 0.2, 0.7])
    va = voronoi_assign(q, xs)
    q2 = q1([-1.0, 0.4, 1.4])
    va2 = voronoi_assign(q2, 2.0 * xs)
    assert np.array_equal(va.owner, va2.owner)
    d1 = pool_distortion(q, xs)
    d2 = pool_distortion(q2, 2.0 * xs)
    assert d2.value == 4.0 * d1.value  # exact: scaling by 2 shifts exponents


def test_quantizer_serialization_roundtrip():
    q = Quantizer(Euclidean(2), 1.5, [[0.0, 1.0], [2.0, -1.0]])
    back = Quantizer.from_json(q.to_json())
    assert back.r == q.r
    assert np.array_equal(back.points, q.points)
    assert back.space == q.space


def test_quantizer_validation():
    with pytest.raises(ValueError):
        Quantizer(E1, 0.0, [[0.0]])
    with pytest.raises(ValueError):
        Quantizer(E1, 2.0, np.empty((0, 1)))
