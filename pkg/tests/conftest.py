import numpy as np
import pytest

from entrolip.measures import (
    DiscreteMeasure,
    discretize,
    make_gaussian_potential,
    make_perturbed_potential,
)
from entrolip.sinkhorn import solve

# Diagonal of the two-point coupling (uniform on {-1, +1}, eps = 1), from a
# bounded scalar minimization of the discrete primal objective over its single
# free entry. Closed form 1 / (2 (1 + exp(-2))).
TWO_POINT_A = 0.44039853898894116


@pytest.fixture(scope="session")
def two_point():
    m = DiscreteMeasure.from_points([[-1.0], [1.0]])
    return solve(m, m, 1.0)


@pytest.fixture(scope="session")
def gaussian_1d():
    """N(0,1) -> N(0,4) on 512-point grids spanning 8 standard deviations, eps = 1."""
    src = discretize(make_gaussian_potential([0.0], [[1.0]]), 512, box=[[-8.0, 8.0]])
    tgt = discretize(make_gaussian_potential([0.0], [[4.0]]), 512, box=[[-16.0, 16.0]])
    return solve(src, tgt, 1.0)


@pytest.fixture(scope="session")
def perturbed_1d():
    """perturbed(1, 0.5, 1) -> N(0, 1), eps = 0.5."""
    src = discretize(make_perturbed_potential(1.0, 0.5, 1.0), 512)
    tgt = discretize(make_gaussian_potential([0.0], [[1.0]]), 512)
    return solve(src, tgt, 0.5)


@pytest.fixture(scope="session")
def standard_1d():
    """N(0,1) -> N(0,1), eps = 1."""
    m = discretize(make_gaussian_potential([0.0], [[1.0]]), 512, box=[[-8.0, 8.0]])
    return solve(m, m, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
