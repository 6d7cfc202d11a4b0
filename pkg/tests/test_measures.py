import numpy as np
import pytest

from entrolip._validation import ValidationError
from entrolip.measures import (
    CertificationError,
    DiscreteMeasure,
    Potential,
    certify_bounds,
    certify_matrix_bound,
    convolved_hessian,
    discretize,
    make_gaussian_potential,
    make_perturbed_potential,
    make_quartic_potential,
    make_separable_perturbed_potential,
)

POTENTIALS = [
    make_gaussian_potential([0.0], [[1.0]]),
    make_gaussian_potential([0.5, -1.0], [[2.0, 0.3], [0.3, 1.0]]),
    make_perturbed_potential(1.0, 0.5, 1.0),
    make_perturbed_potential(2.0, 1.0, 2.0),
    make_separable_perturbed_potential([0.75, 0.1875], [0.25, 0.0625], [1.0, 0.5]),
    make_quartic_potential(1),
    make_quartic_potential(2),
]


@pytest.mark.parametrize(
    "mean, cov, alpha, beta",
    [
        ([0.0], [[1.0]], 1.0, 1.0),
        ([0.0, 0.0], np.diag([1.0, 4.0]), 0.25, 1.0),
        ([0.0], [[4.0]], 0.25, 0.25),
    ],
)
def test_gaussian_potential_constants(mean, cov, alpha, beta):
    p = make_gaussian_potential(mean, cov)
    assert p.alpha == pytest.approx(alpha, abs=1e-15)
    assert p.beta == pytest.approx(beta, abs=1e-15)


def test_gaussian_potential_value():
    p = make_gaussian_potential([0.0], [[4.0]])
    x = np.linspace(-3, 3, 7)[:, None]
    np.testing.assert_allclose(p.value(x), x[:, 0] ** 2 / 8, atol=1e-15)


def test_gaussian_potential_rejects_non_spd():
    with pytest.raises(ValidationError, match="eigenvalue"):
        make_gaussian_potential([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_gaussian_default_box_radius():
    p = make_gaussian_potential([1.0, 0.0], np.diag([1.0, 4.0]))
    # mode +- 10 / sqrt(alpha) with alpha = 1/4
    np.testing.assert_allclose(p.domain, [[-19.0, 21.0], [-20.0, 20.0]])


@pytest.mark.parametrize(
    "c, a, w, alpha, beta",
    [(1.0, 0.0, 1.0, 1.0, 1.0), (1.0, 0.5, 1.0, 0.5, 1.5), (2.0, 1.0, 2.0, 1.0, 3.0)],
)
def test_perturbed_constants(c, a, w, alpha, beta):
    p = make_perturbed_potential(c, a, w)
    assert (p.alpha, p.beta) == (alpha, beta)


def test_perturbed_zero_amplitude_is_gaussian():
    p = make_perturbed_potential(1.0, 0.0, 1.0)
    g = make_gaussian_potential([0.0], [[1.0]])
    x = np.linspace(-5, 5, 11)[:, None]
    np.testing.assert_allclose(p.hessian(x), g.hessian(x))
    np.testing.assert_allclose(p.gradient(x), g.gradient(x))


@pytest.mark.parametrize("a", [1.0, 1.5, -1.0])
def test_perturbed_rejects_large_amplitude(a):
    with pytest.raises(ValidationError, match="strongly convex"):
        make_perturbed_potential(1.0, a, 1.0)


@pytest.mark.parametrize("p", POTENTIALS, ids=lambda p: f"{p.name}-{p.dim}d")
def test_gradient_matches_finite_differences(p, rng):
    x = rng.uniform(-2, 2, size=(10, p.dim))
    h = 1e-5
    fd = np.stack([(p.value(x + h * e) - p.value(x - h * e)) / (2 * h) for e in np.eye(p.dim)], axis=-1)
    grad = p.gradient(x)
    assert np.linalg.norm(fd - grad) <= 1e-5 * max(1.0, np.linalg.norm(grad))


@pytest.mark.parametrize("p", POTENTIALS, ids=lambda p: f"{p.name}-{p.dim}d")
def test_hessian_matches_finite_differences(p, rng):
    x = rng.uniform(-2, 2, size=(10, p.dim))
    h = 1e-5
    fd = np.stack([(p.gradient(x + h * e) - p.gradient(x - h * e)) / (2 * h) for e in np.eye(p.dim)], axis=-1)
    hess = p.hessian(x)
    np.testing.assert_allclose(hess, np.swapaxes(hess, -1, -2), atol=1e-12)
    assert np.linalg.norm(fd - hess) <= 1e-4 * max(1.0, np.linalg.norm(hess))


@pytest.mark.parametrize("p", POTENTIALS, ids=lambda p: f"{p.name}-{p.dim}d")
def test_declared_bounds_bracket_certificate(p):
    lo, hi = certify_bounds(p, 401 if p.dim == 1 else 61)
    assert p.alpha <= lo + 1e-8
    assert hi <= p.beta + 1e-8


@pytest.mark.parametrize(
    "p, res, expected",
    [
        (make_gaussian_potential([0.0], [[1.0]]), 50, (1.0, 1.0)),
        (make_perturbed_potential(1.0, 0.5, 1.0).with_domain([[-10, 10]]), 1000, (0.5, 1.5)),
        (make_gaussian_potential([0.0, 0.0], np.diag([1.0, 4.0])), 10, (0.25, 1.0)),
    ],
)
def test_certify_bounds_examples(p, res, expected):
    np.testing.assert_allclose(certify_bounds(p, res), expected, atol=1e-3)


def test_certify_bounds_names_offending_point():
    good = make_perturbed_potential(1.0, 0.5, 1.0)
    liar = Potential(dim=1, value=good.value, gradient=good.gradient, hessian=good.hessian,
                     alpha=0.5, beta=1.2, domain=[[-5.0, 5.0]], name="liar")
    with pytest.raises(CertificationError, match="above beta") as info:
        certify_bounds(liar, 101)
    assert info.value.eigenvalue > 1.2
    assert liar.hessian(info.value.point)[0, 0] == pytest.approx(info.value.eigenvalue)


def test_certify_matrix_bound():
    p = make_separable_perturbed_potential([0.75, 0.1875], [0.25, 0.0625], [1.0, 0.5])
    lower, upper = certify_matrix_bound(p, 81, upper=np.diag([1.0, 0.25]))
    assert lower == np.inf
    assert upper == pytest.approx(0.0, abs=1e-3)
    with pytest.raises(CertificationError):
        certify_matrix_bound(p, 81, upper=np.diag([0.9, 0.25]))


def test_discretize_three_points():
    m = discretize(make_gaussian_potential([0.0], [[1.0]]), 3, box=[[-1.0, 1.0]])
    np.testing.assert_allclose(m.points[:, 0], [-1.0, 0.0, 1.0])
    raw = np.array([np.exp(-0.5), 1.0, np.exp(-0.5)])
    np.testing.assert_allclose(m.weights, raw / raw.sum(), rtol=1e-14)
    np.testing.assert_allclose(m.weights, [0.2740686, 0.4518628, 0.2740686], atol=1e-7)


@pytest.mark.parametrize("p", POTENTIALS[2:4], ids=["perturbed-a", "perturbed-b"])
def test_discretize_two_symmetric_points(p):
    m = discretize(p, 2, box=[[-3.0, 3.0]])
    np.testing.assert_allclose(m.weights, [0.5, 0.5])


def test_discretize_variance():
    m = discretize(make_gaussian_potential([0.0], [[1.0]]), 512, box=[[-8.0, 8.0]])
    var = m.expectation(m.points[:, 0] ** 2) - m.mean()[0] ** 2
    assert abs(var - 1.0) <= 1e-3
    assert abs(m.weights.sum() - 1.0) <= 1e-12


def test_discretize_moments_converge():
    p = make_gaussian_potential([0.3], [[2.0]])
    errors = []
    # Exponential convergence; stop before the roundoff floor.
    for res in (6, 12, 24):
        m = discretize(p, res)
        var = m.expectation((m.points[:, 0] - 0.3) ** 2)
        errors.append(abs(var - 2.0))
    assert errors[0] / errors[1] >= 3 and errors[1] / errors[2] >= 3


def test_discretize_grid_layout():
    m = discretize(make_gaussian_potential([0.0, 0.0], np.eye(2)), 5, box=[[-1, 1], [-2, 2]])
    assert m.grid_shape == (5, 5)
    np.testing.assert_allclose(m.points[:5, 1], np.linspace(-2, 2, 5))
    assert m.cell_volume == pytest.approx(0.5 * 1.0)


def test_discretize_underflow():
    with pytest.raises(ValidationError, match="smaller domain box"):
        discretize(make_quartic_potential(1).with_domain([[-40.0, 40.0]]), 101)


@pytest.mark.parametrize(
    "points, weights, match",
    [
        ([[0.0], [0.0]], [0.5, 0.5], "distinct"),
        ([[0.0], [1.0]], [0.5, 0.6], "sum"),
        ([[0.0], [1.0]], [1.0, 0.0], "positive"),
        ([[0.0], [np.nan]], [0.5, 0.5], "non-finite"),
    ],
)
def test_discrete_measure_invariants(points, weights, match):
    with pytest.raises(ValidationError, match=match):
        DiscreteMeasure(points=np.array(points), weights=np.array(weights))


def test_discrete_measure_is_read_only():
    m = DiscreteMeasure.from_points([[0.0], [1.0]])
    with pytest.raises(ValueError):
        m.weights[0] = 1.0


def test_convolved_hessian_point_mass():
    inner = make_gaussian_potential([0.0], [[1.0]])
    delta = DiscreteMeasure.from_points([[0.0]])
    for y in (-1.0, 0.0, 2.5):
        assert convolved_hessian(inner, delta, [y])[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_convolved_hessian_two_point_mixing():
    inner = make_gaussian_potential([0.0], [[1.0]])
    mix = DiscreteMeasure.from_points([[-1.0], [1.0]])
    assert convolved_hessian(inner, mix, [0.0])[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_convolved_hessian_gaussian_convolution():
    inner = make_gaussian_potential([0.0], [[1.0]])
    mix = discretize(inner, 512, box=[[-8.0, 8.0]])
    ys = np.array([[-2.0], [0.0], [0.7], [3.0]])
    np.testing.assert_allclose(convolved_hessian(inner, mix, ys)[:, 0, 0], 0.5, atol=1e-6)


def test_convolved_hessian_matches_log_density():
    # -log of the mixture density, differentiated twice by finite differences.
    inner = make_perturbed_potential(1.0, 0.5, 1.0)
    mix = discretize(make_gaussian_potential([0.0], [[0.5]]), 201, box=[[-5.0, 5.0]])

    def neg_log(y):
        vals = np.log(mix.weights) - inner.value((y - mix.points[:, 0])[:, None])
        top = vals.max()
        return -(top + np.log(np.exp(vals - top).sum()))

    h = 1e-3
    for y in (-1.5, 0.0, 0.4, 2.0):
        fd = (neg_log(y + h) - 2 * neg_log(y) + neg_log(y - h)) / h**2
        assert convolved_hessian(inner, mix, [y])[0, 0] == pytest.approx(fd, abs=1e-5)


def test_convolved_hessian_below_inner_beta(rng):
    inner = make_separable_perturbed_potential([1.0, 2.0], [0.5, 0.5], [1.0, 2.0])
    pts = rng.normal(size=(30, 2))
    mix = DiscreteMeasure.from_points(pts, rng.uniform(0.1, 1.0, size=30))
    ys = rng.normal(scale=2.0, size=(15, 2))
    hess = convolved_hessian(inner, mix, ys)
    top = np.linalg.eigvalsh(hess)[:, -1]
    assert np.all(top <= inner.beta + 1e-8)


def test_convolved_hessian_underflow():
    # The density exp(-V(y - x)) is exactly zero at every atom.
    inner = make_gaussian_potential([0.0], [[1e-300]])
    mix = DiscreteMeasure.from_points([[0.0], [1.0]])
    with pytest.raises(ValidationError, match="underflow"):
        convolved_hessian(inner, mix, [1e200])
