import numpy as np
import pytest

from entrolip._validation import ValidationError
from entrolip.bounds import (
    commuting_bound,
    lower_bound,
    upper_bound,
    verify_commuting_bound,
    verify_hessian_bounds,
    verify_pointwise_inequalities,
)
from entrolip.entropic_maps import entropic_map
from entrolip.measures import DiscreteMeasure, discretize, make_gaussian_potential, make_perturbed_potential
from entrolip.sinkhorn import solve


@pytest.mark.parametrize(
    "args, expected",
    [((1.0, 1.0, 0.0), 1.0), ((1.0, 0.25, 0.0), 2.0), ((1.0, 0.25, 1.0), 1.5615528128088303)],
)
def test_upper_bound_examples(args, expected):
    assert upper_bound(*args) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    "args, expected",
    [((1.0, 1.0, 0.0), 1.0), ((1.0, 4.0, 1.0), 0.20710678118654757), ((1.0, 4.0, 0.0), 0.5)],
)
def test_lower_bound_examples(args, expected):
    assert lower_bound(*args) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("func", [upper_bound, lower_bound])
@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, -0.5)])
def test_bounds_reject_invalid(func, args):
    with pytest.raises(ValidationError):
        func(*args)


def test_upper_bound_large_epsilon_is_accurate():
    # Naive (sqrt(4b/a + e^2 b^2) - e b)/2 cancels to zero here; the root is ~1/(eps a).
    assert upper_bound(1.0, 1.0, 1e9) == pytest.approx(1e-9, rel=1e-12)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (np.eye(2), np.eye(2), np.eye(2)),
        (np.diag([1.0, 4.0]), np.diag([9.0, 16.0]), np.diag([3.0, 2.0])),
        (np.array([[1.0]]), np.array([[4.0]]), np.array([[2.0]])),
    ],
)
def test_commuting_bound_examples(a, b, expected):
    np.testing.assert_allclose(commuting_bound(a, b), expected, atol=1e-12)


def test_commuting_bound_matches_scalar_bound():
    for beta, alpha in [(1.0, 0.25), (2.0, 0.5), (3.0, 3.0)]:
        got = commuting_bound(np.eye(2) / beta, np.eye(2) / alpha)
        np.testing.assert_allclose(got, upper_bound(beta, alpha, 0.0) * np.eye(2), rtol=1e-15)


def test_commuting_bound_rejects_non_commuting():
    with pytest.raises(ValidationError, match="commute"):
        commuting_bound(np.diag([1.0, 2.0]), np.array([[2.0, 1.0], [1.0, 2.0]]))


def test_commuting_bound_non_diagonal_commuting():
    rot = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    a = rot @ np.diag([1.0, 4.0]) @ rot.T
    b = rot @ np.diag([9.0, 16.0]) @ rot.T
    bound = commuting_bound(a, b)
    np.testing.assert_allclose(bound, rot @ np.diag([3.0, 2.0]) @ rot.T, atol=1e-12)
    np.testing.assert_allclose(bound, bound.T, atol=1e-15)


def test_verify_gaussian_is_sharp(gaussian_1d):
    queries = np.linspace(-4, 4, 33)[:, None]
    rep = verify_hessian_bounds(gaussian_1d, queries)
    assert rep.upper_bound == pytest.approx(1.5615528128088303, rel=1e-15)
    np.testing.assert_allclose(rep.lambda_max, rep.upper_bound, rtol=1e-6)
    assert abs(rep.worst_upper_margin) <= 1e-5
    assert rep.passed
    assert not rep.outside_box.any()


def test_verify_perturbed(perturbed_1d):
    queries = np.linspace(-6, 6, 41)[:, None]
    rep = verify_hessian_bounds(perturbed_1d, queries)
    assert rep.upper_bound == pytest.approx(0.9058688457449497, rel=1e-14)
    assert np.all(rep.lambda_max <= rep.upper_bound * (1 + 1e-3))
    assert rep.passed


def test_verify_identical_measures(standard_1d):
    rep = verify_hessian_bounds(standard_1d, np.linspace(-3, 3, 13)[:, None])
    expected = np.sqrt(1.25) - 0.5
    assert rep.upper_bound == pytest.approx(expected, rel=1e-14)
    assert rep.lower_bound == pytest.approx(expected, rel=1e-14)
    np.testing.assert_allclose(rep.lambda_max, expected, rtol=1e-6)
    assert rep.passed


def test_verify_rejects_inconsistent_constants(perturbed_1d):
    with pytest.raises(ValidationError, match="beta_V"):
        verify_hessian_bounds(perturbed_1d, [[0.0]], beta_v=1.0)
    with pytest.raises(ValidationError, match="alpha_W"):
        verify_hessian_bounds(perturbed_1d, [[0.0]], alpha_w=2.0)


def test_verify_accepts_looser_constants(perturbed_1d):
    rep = verify_hessian_bounds(perturbed_1d, [[0.0]], beta_v=3.0, alpha_w=0.5)
    assert rep.upper_bound == pytest.approx(upper_bound(3.0, 0.5, 0.5))
    assert rep.passed


def test_verify_flags_failure(gaussian_1d):
    # Target points from N(0, 9) labelled as N(0, 1): the claimed bound is too small.
    wide = discretize(make_gaussian_potential([0.0], [[9.0]]), 512, box=[[-24, 24]])
    mislabelled = DiscreteMeasure(points=wide.points, weights=wide.weights,
                                  source=make_gaussian_potential([0.0], [[1.0]]))
    duals = solve(gaussian_1d.source, mislabelled, 1.0)
    rep = verify_hessian_bounds(duals, [[0.0], [1.0]])
    assert rep.upper_bound == pytest.approx(np.sqrt(1.25) - 0.5)
    assert not rep.passed
    assert rep.worst_upper_margin < -1.0


def test_pointwise_inequalities_perturbed(perturbed_1d):
    v = make_perturbed_potential(1.0, 0.5, 1.0)
    w = make_gaussian_potential([0.0], [[1.0]])
    qx = np.linspace(-4, 4, 20)[:, None]
    rep = verify_pointwise_inequalities(perturbed_1d, v, w, qx, entropic_map(perturbed_1d, qx))
    assert rep.passed
    assert rep.worst_margin >= -1e-6
    assert rep.margins_x.shape == (20,) and rep.margins_y.shape == (20,)


def test_pointwise_first_inequality_gaussian_equality(standard_1d):
    g = make_gaussian_potential([0.0], [[1.0]])
    qx = np.linspace(-2, 2, 9)[:, None]
    rep = verify_pointwise_inequalities(standard_1d, g, g, qx, qx)
    np.testing.assert_allclose(rep.margins_x, 0.0, atol=1e-6)
    assert rep.passed


def test_pointwise_one_point_target():
    src = discretize(make_gaussian_potential([0.0], [[1.0]]), 64, box=[[-6.0, 6.0]])
    duals = solve(src, DiscreteMeasure.from_points([[0.5]]), 1.0)
    g = make_gaussian_potential([0.0], [[1.0]])
    qx = np.array([[-1.0], [0.0], [2.0]])
    rep = verify_pointwise_inequalities(duals, g, g, qx, np.empty((0, 1)))
    # LHS is the zero matrix. On the target side, conditioning on the lone atom
    # returns the whole source, so the RHS is 1 / (Var(P) / eps + eps * 1).
    var = src.weights @ src.points[:, 0] ** 2 - (src.weights @ src.points[:, 0]) ** 2
    np.testing.assert_allclose(rep.margins_x, 1.0 / (var + 1.0), rtol=1e-10)


def test_pointwise_skips_outside_domain(standard_1d):
    g = make_gaussian_potential([0.0], [[1.0]]).with_domain([[-3.0, 3.0]])
    rep = verify_pointwise_inequalities(standard_1d, g, g, [[0.0], [4.0]], [[5.0]])
    assert rep.queries_x.shape == (1, 1) and rep.queries_y.shape == (0, 1)
    assert len(rep.notes) == 2 and "outside" in rep.notes[0]


def test_verify_commuting_bound_1d(gaussian_1d):
    rep = verify_commuting_bound(gaussian_1d, [[1.0]], [[4.0]], np.linspace(-3, 3, 7)[:, None])
    # The entropic Hessian sits below the unregularized bound 2.
    np.testing.assert_allclose(rep.margins, 2.0 - 1.5615528128088303, atol=1e-5)
    assert rep.passed
    assert rep.tolerance == pytest.approx(0.02)
