"""Lipschitz bounds for entropic Brenier maps and their numerical verification.

``upper_bound`` and ``lower_bound`` are the positive roots of

    alpha_W L^2 + eps alpha_W beta_V L - beta_V = 0,
    beta_W  l^2 + eps alpha_V beta_W l - alpha_V = 0,

written in a form that stays accurate when ``eps`` is large. The verifiers
compare these numbers with Hessians measured from a solved Sinkhorn problem.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import (
    ValidationError,
    as_points,
    check_positive,
    check_spd,
    extreme_eigenvalues,
    spd_function,
    spd_inverse,
    symmetrize,
)
from .entropic_maps import Side, conditional_weights, hessians_at, outside_source_box
from .gaussian_oracle import sqrtm_spd

__all__ = [
    "CommutingBoundReport",
    "PointwiseInequalityReport",
    "SpectralBoundReport",
    "commuting_bound",
    "lower_bound",
    "upper_bound",
    "verify_commuting_bound",
    "verify_hessian_bounds",
    "verify_pointwise_inequalities",
]

COMMUTE_TOL = 1e-10
_CERT_TOL = 1e-12


def _root(a, b, eps):
    # Positive root of a t^2 + eps a b t - b = 0, cancellation-free.
    disc = np.sqrt(4.0 * b / a + (eps * b) ** 2)
    return 2.0 * b / (a * (disc + eps * b))


def upper_bound(beta_v, alpha_w, epsilon):
    """Operator-norm bound ``(sqrt(4 beta/alpha + eps^2 beta^2) - eps beta) / 2``.

    Examples
    --------
    >>> upper_bound(1.0, 0.25, 0.0)
    2.0
    """
    beta_v = check_positive(beta_v, "beta_V")
    alpha_w = check_positive(alpha_w, "alpha_W")
    epsilon = check_positive(epsilon, "epsilon", allow_zero=True)
    return float(_root(alpha_w, beta_v, epsilon))


def lower_bound(alpha_v, beta_w, epsilon):
    """Smallest-eigenvalue bound ``(sqrt(4 alpha/beta + eps^2 alpha^2) - eps alpha) / 2``."""
    alpha_v = check_positive(alpha_v, "alpha_V")
    beta_w = check_positive(beta_w, "beta_W")
    epsilon = check_positive(epsilon, "epsilon", allow_zero=True)
    return float(_root(beta_w, alpha_v, epsilon))


def commuting_bound(a, b):
    """``A^{-1/2} B^{1/2}`` for commuting SPD matrices ``A`` and ``B``."""
    a = check_spd(a, name="A")
    b = check_spd(b, name="B")
    if a.shape != b.shape:
        raise ValidationError(f"A and B must have the same shape, got {a.shape} and {b.shape}")
    gap = np.linalg.norm(a @ b - b @ a)
    if gap > COMMUTE_TOL * np.linalg.norm(a) * np.linalg.norm(b):
        raise ValidationError(f"A and B do not commute (||AB - BA|| = {gap:.3g})")
    a_inv_half = symmetrize(spd_function(a, lambda v: 1.0 / np.sqrt(v)))
    return symmetrize(a_inv_half @ sqrtm_spd(b))


@dataclass(frozen=True)
class SpectralBoundReport:
    """Per-query extreme eigenvalues of entropic Hessians against the two bounds.

    Margins are absolute: ``upper_bound - lambda_max`` and
    ``lambda_min - lower_bound``. A missing bound (``nan``) is not checked.
    """

    epsilon: float
    queries: np.ndarray
    lambda_max: np.ndarray
    lambda_min: np.ndarray
    upper_bound: float
    lower_bound: float
    upper_tolerance: float
    lower_tolerance: float
    box: Optional[np.ndarray] = None
    outside_box: Optional[np.ndarray] = None

    @property
    def upper_margins(self):
        return self.upper_bound - self.lambda_max

    @property
    def lower_margins(self):
        return self.lambda_min - self.lower_bound

    @property
    def worst_upper_margin(self):
        return float(np.min(self.upper_margins)) if np.isfinite(self.upper_bound) else np.inf

    @property
    def worst_lower_margin(self):
        return float(np.min(self.lower_margins)) if np.isfinite(self.lower_bound) else np.inf

    @property
    def passed(self):
        return (self.worst_upper_margin >= -self.upper_tolerance
                and self.worst_lower_margin >= -self.lower_tolerance)


def _resolve(value, declared, name, valid):
    """Pick the supplied curvature constant, or the certified one when ``None``."""
    if value is None:
        return declared
    if declared is not None and not valid(value, declared):
        raise ValidationError(
            f"{name}={value} is inconsistent with the certified value {declared}"
        )
    return value


def verify_hessian_bounds(duals, queries, beta_v=None, alpha_w=None, alpha_v=None, beta_w=None,
                          slack=1e-3, relative=True):
    """Evaluate entropic Hessians at ``queries`` and compare with both bounds.

    Curvature constants default to the certificates of the potentials that
    generated the discrete marginals. Supplied constants must be implied by
    those certificates (e.g. ``beta_v >= V.beta``), otherwise the call is
    rejected before any Hessian is computed.

    ``slack`` is relative to each bound when ``relative`` is true and
    absolute otherwise.
    """
    v_pot, w_pot = duals.source.source, duals.target.source
    tol = _CERT_TOL
    beta_v = _resolve(beta_v, v_pot.beta if v_pot else None, "beta_V",
                      lambda s, c: s >= c * (1 - tol))
    alpha_w = _resolve(alpha_w, w_pot.alpha if w_pot else None, "alpha_W",
                       lambda s, c: s <= c * (1 + tol))
    alpha_v = _resolve(alpha_v, v_pot.alpha if v_pot else None, "alpha_V",
                       lambda s, c: s <= c * (1 + tol))
    beta_w = _resolve(beta_w, w_pot.beta if w_pot else None, "beta_W",
                      lambda s, c: s >= c * (1 - tol))

    eps = duals.epsilon
    have_upper = beta_v is not None and alpha_w is not None and np.isfinite(beta_v) and alpha_w > 0
    have_lower = alpha_v is not None and beta_w is not None and np.isfinite(beta_w) and alpha_v > 0
    upper = upper_bound(beta_v, alpha_w, eps) if have_upper else np.inf
    lower = lower_bound(alpha_v, beta_w, eps) if have_lower else -np.inf

    pts, _ = as_points(queries, duals.dim, "queries")
    lam_min, lam_max = extreme_eigenvalues(hessians_at(duals, pts))
    slack = check_positive(slack, "slack", allow_zero=True)
    up_tol = slack * upper if (relative and have_upper) else slack
    lo_tol = slack * lower if (relative and have_lower) else slack
    return SpectralBoundReport(
        epsilon=eps,
        queries=pts,
        lambda_max=lam_max,
        lambda_min=lam_min,
        upper_bound=upper,
        lower_bound=lower,
        upper_tolerance=float(up_tol),
        lower_tolerance=float(lo_tol),
        box=duals.source.bounding_box(),
        outside_box=outside_source_box(duals, pts),
    )


@dataclass(frozen=True)
class PointwiseInequalityReport:
    """PSD margins of the two pointwise matrix inequalities.

    ``margins_x[k]`` is ``lambda_min(RHS - LHS)`` for
    ``hess phi(x) <= E_{Y|x}[(hess psi(Y) + eps hess W(Y))^{-1}]``;
    ``margins_y[k]`` is ``lambda_min(LHS - RHS)`` for
    ``hess psi(y) >= (E_{X|y}[hess phi(X) + eps hess V(X)])^{-1}``.
    """

    epsilon: float
    queries_x: np.ndarray
    queries_y: np.ndarray
    margins_x: np.ndarray
    margins_y: np.ndarray
    slack: float
    notes: list = field(default_factory=list)

    @property
    def worst_margin(self):
        vals = np.concatenate([self.margins_x, self.margins_y])
        return float(vals.min()) if vals.size else np.inf

    @property
    def passed(self):
        return self.worst_margin >= -self.slack


def verify_pointwise_inequalities(duals, v_potential, w_potential, queries_x, queries_y, slack=1e-6):
    """Check both pointwise inequalities at the given query points.

    Target-side Hessians are needed on the whole target support (and source-side
    Hessians on the whole source support); both come from conditional
    covariances of the same coupling. Queries outside the relevant potential's
    domain are skipped and listed in ``notes``.
    """
    eps = duals.epsilon
    notes = []
    qx, _ = as_points(queries_x, duals.dim, "queries_x") if len(queries_x) else (np.empty((0, duals.dim)), False)
    qy, _ = as_points(queries_y, duals.dim, "queries_y") if len(queries_y) else (np.empty((0, duals.dim)), False)

    keep_x = v_potential.contains(qx)
    keep_y = w_potential.contains(qy)
    for pt in qx[~keep_x]:
        notes.append(f"skipped x={pt.tolist()}: outside source domain")
    for pt in qy[~keep_y]:
        notes.append(f"skipped y={pt.tolist()}: outside target domain")
    qx, qy = qx[keep_x], qy[keep_y]

    margins_x = np.empty(qx.shape[0])
    if qx.shape[0]:
        ys = duals.target.points
        inv_terms = spd_inverse(hessians_at(duals, ys, side=Side.GIVEN_Y)
                                + eps * w_potential.hessian(ys), name="psi-side matrix")
        weights = conditional_weights(duals, qx, Side.GIVEN_X)
        rhs = np.einsum("km,mij->kij", weights, inv_terms)
        lhs = hessians_at(duals, qx)
        margins_x = extreme_eigenvalues(rhs - lhs)[0]

    margins_y = np.empty(qy.shape[0])
    if qy.shape[0]:
        xs = duals.source.points
        terms = hessians_at(duals, xs) + eps * v_potential.hessian(xs)
        weights = conditional_weights(duals, qy, Side.GIVEN_Y)
        rhs = spd_inverse(np.einsum("kn,nij->kij", weights, terms), name="phi-side expectation")
        lhs = hessians_at(duals, qy, side=Side.GIVEN_Y)
        margins_y = extreme_eigenvalues(lhs - rhs)[0]

    return PointwiseInequalityReport(
        epsilon=eps, queries_x=qx, queries_y=qy,
        margins_x=np.asarray(margins_x), margins_y=np.asarray(margins_y),
        slack=float(slack), notes=notes,
    )


@dataclass(frozen=True)
class CommutingBoundReport:
    """PSD margins ``lambda_min(bound - hess phi(x))`` against ``A^{-1/2} B^{1/2}``.

    ``slack`` is relative to the operator norm of ``bound``.
    """

    epsilon: float
    queries: np.ndarray
    bound: np.ndarray
    margins: np.ndarray
    slack: float

    @property
    def worst_margin(self):
        return float(np.min(self.margins))

    @property
    def tolerance(self):
        return self.slack * float(np.linalg.norm(self.bound, 2))

    @property
    def passed(self):
        return self.worst_margin >= -self.tolerance


def verify_commuting_bound(duals, a, b, queries, slack=1e-2):
    """Compare measured entropic Hessians with the commuting-matrix bound.

    For ``eps > 0`` the entropic Hessian need not sit below the bound; the
    guarantee is for the unregularized map, so callers track how the worst
    margin behaves as ``eps`` decreases.
    """
    bound = commuting_bound(a, b)
    pts, _ = as_points(queries, duals.dim, "queries")
    margins = extreme_eigenvalues(bound[None] - hessians_at(duals, pts))[0]
    return CommutingBoundReport(
        epsilon=duals.epsilon, queries=pts, bound=bound, margins=margins,
        slack=check_positive(slack, "slack", allow_zero=True),
    )
