"""Quadrature checks of the Brascamp-Lieb and Cramer-Rao covariance inequalities.

For ``P = exp(-V)`` strictly log-concave,

    (E[hess V])^{-1}  <=  Cov(X)  <=  E[(hess V)^{-1}]

in PSD order. Each check discretizes ``P`` with :func:`measures.discretize` and
evaluates every expectation with the same grid weights.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, extreme_eigenvalues, spd_inverse, symmetrize
from .measures import discretize

__all__ = [
    "PsdMarginReport",
    "brascamp_lieb_check",
    "covariance_of",
    "cramer_rao_check",
    "score_identity_residual",
]


@dataclass(frozen=True)
class PsdMarginReport:
    """``margin`` is the smallest eigenvalue of the correctly signed difference."""

    inequality: str
    lhs: np.ndarray
    rhs: np.ndarray
    margin: float
    slack: float

    @property
    def passed(self):
        return self.margin >= -self.slack


def covariance_of(m):
    """Weighted covariance ``sum_i w_i (x_i - mu)(x_i - mu)^T``."""
    centered = m.points - m.mean()
    return symmetrize(np.einsum("i,ij,ik->jk", m.weights, centered, centered))


def _measure(p, resolution, box):
    if not p.alpha > 0:
        raise ValidationError(f"{p.name}: the potential must be strictly log-concave (alpha > 0)")
    return discretize(p, resolution, box=box)


def brascamp_lieb_check(p, resolution, slack=1e-8, box=None):
    """``Cov(X) <= E[(hess V(X))^{-1}]``; margin is ``lambda_min(rhs - lhs)``."""
    m = _measure(p, resolution, box)
    hess = p.hessian(m.points)
    inv = spd_inverse(hess, name=f"{p.name} Hessian")
    lhs = covariance_of(m)
    rhs = symmetrize(m.expectation(inv))
    margin = float(extreme_eigenvalues(rhs - lhs)[0])
    return PsdMarginReport("brascamp-lieb", lhs, rhs, margin, float(slack))


def cramer_rao_check(p, resolution, slack=1e-8, box=None):
    """``Cov(X) >= (E[hess V(X)])^{-1}``; margin is ``lambda_min(lhs - rhs)``."""
    m = _measure(p, resolution, box)
    mean_hess = symmetrize(m.expectation(p.hessian(m.points)))
    rhs = spd_inverse(mean_hess, name=f"{p.name} expected Hessian")
    lhs = covariance_of(m)
    margin = float(extreme_eigenvalues(lhs - rhs)[0])
    return PsdMarginReport("cramer-rao", lhs, rhs, margin, float(slack))


def score_identity_residual(p, resolution, box=None):
    """Frobenius norm of ``E[grad V grad V^T] - E[hess V]`` under the grid quadrature.

    Integration by parts makes the two expectations equal for any smooth
    density with fast-decaying tails; the residual measures quadrature and
    truncation error.
    """
    m = _measure(p, resolution, box)
    grads = p.gradient(m.points)
    outer = np.einsum("i,ij,ik->jk", m.weights, grads, grads)
    mean_hess = m.expectation(p.hessian(m.points))
    return float(np.linalg.norm(outer - mean_hess))
