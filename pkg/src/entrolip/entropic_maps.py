"""Entropic Brenier potentials, maps and Hessians evaluated out of sample.

Given solved duals ``(f, g)`` on discrete supports, the source-side potential is
extended to every ``x`` by the softmin

    f(x) = -eps log sum_j q_j exp((g_j - |x - y_j|^2 / 2) / eps),

and the entropic Brenier potential is ``phi(x) = |x|^2 / 2 - f(x)``. Its gradient
is the mean and its Hessian ``1/eps`` times the covariance of the conditional
law of ``Y`` given ``X = x``. Everything mirrors to the target side
(``psi``, conditioning on ``Y = y``) through ``side="given-y"``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from ._validation import ValidationError, as_points, symmetrize

__all__ = [
    "ConditionalLaw",
    "Side",
    "conditional_law",
    "conditional_logdensity_hessian",
    "conditional_weights",
    "entropic_hessian",
    "entropic_map",
    "entropic_potential",
    "fd_step",
    "hessians_at",
    "outside_source_box",
]

_CHUNK_ENTRIES = 1 << 20


class Side(str, Enum):
    GIVEN_X = "given-x"
    GIVEN_Y = "given-y"


def _side(side):
    try:
        return Side(side)
    except ValueError:
        raise ValidationError(f"side must be 'given-x' or 'given-y', got {side!r}") from None


def _opposite(duals, side):
    """(support points, log weights, potential values) of the measure being averaged."""
    if side is Side.GIVEN_X:
        return duals.target.points, np.log(duals.target.weights), duals.g
    return duals.source.points, np.log(duals.source.weights), duals.f


def _log_kernel(duals, queries, side):
    """Unnormalized log conditional weights, shape (k, m)."""
    support, log_w, pot = _opposite(duals, side)
    diff = queries[:, None, :] - support[None, :, :]
    sq = 0.5 * np.einsum("kmd,kmd->km", diff, diff)
    return log_w[None, :] + (pot[None, :] - sq) / duals.epsilon


def _normalized(log_kernel, queries):
    lse = logsumexp(log_kernel, axis=1, keepdims=True)
    if not np.all(np.isfinite(lse)):
        bad = int(np.flatnonzero(~np.isfinite(lse.ravel()))[0])
        raise ValidationError(
            f"conditional law degenerates at query {queries[bad].tolist()}: all weights underflow"
        )
    return np.exp(log_kernel - lse), lse[:, 0]


def _chunks(duals, queries, side):
    support, _, _ = _opposite(duals, side)
    step = max(1, _CHUNK_ENTRIES // (support.shape[0] * support.shape[1]))
    for start in range(0, queries.shape[0], step):
        yield slice(start, min(start + step, queries.shape[0]))


def _moments(duals, queries, side, want_cov=True):
    support, _, _ = _opposite(duals, side)
    k, d = queries.shape
    means = np.empty((k, d))
    covs = np.empty((k, d, d)) if want_cov else None
    for sl in _chunks(duals, queries, side):
        w, _ = _normalized(_log_kernel(duals, queries[sl], side), queries[sl])
        mu = w @ support
        means[sl] = mu
        if want_cov:
            centered = support[None, :, :] - mu[:, None, :]
            covs[sl] = np.einsum("km,kmi,kmj->kij", w, centered, centered)
    return means, covs


def _queries(duals, x):
    return as_points(x, duals.dim, "query")


@dataclass(frozen=True)
class ConditionalLaw:
    """Conditional law of the coupling on the opposite support, for one query point."""

    query: np.ndarray
    side: Side
    weights: np.ndarray
    duals: object

    @property
    def support(self):
        return _opposite(self.duals, self.side)[0]

    def mean(self):
        return self.weights @ self.support

    def covariance(self):
        centered = self.support - self.mean()
        return np.einsum("m,mi,mj->ij", self.weights, centered, centered)

    def expectation(self, values):
        return np.tensordot(self.weights, np.asarray(values, dtype=float), axes=(0, 0))


def conditional_law(duals, x, side=Side.GIVEN_X):
    """Conditional coupling weights for one query, computed in the shifted log domain.

    For ``side="given-x"`` the weights over target points are proportional to
    ``q_j exp((g_j - |x - y_j|^2/2) / eps)``; ``"given-y"`` mirrors this over
    the source support.
    """
    side = _side(side)
    q, single = _queries(duals, x)
    if not single:
        raise ValidationError("conditional_law takes a single query point")
    w, _ = _normalized(_log_kernel(duals, q, side), q)
    return ConditionalLaw(query=q[0], side=side, weights=w[0], duals=duals)


def conditional_weights(duals, points, side=Side.GIVEN_X):
    """Conditional weights for a batch of queries, shape ``(k, m)``."""
    side = _side(side)
    pts, _ = _queries(duals, points)
    return _normalized(_log_kernel(duals, pts, side), pts)[0]


def hessians_at(duals, points, side=Side.GIVEN_X):
    """Batched :func:`entropic_hessian` that always returns shape ``(k, d, d)``."""
    side = _side(side)
    pts, _ = _queries(duals, points)
    _, covs = _moments(duals, pts, side)
    return symmetrize(covs) / duals.epsilon


def entropic_map(duals, x, side=Side.GIVEN_X):
    """Barycentric projection: conditional mean of the opposite coordinate.

    Accepts one point or an ``(n, d)`` array of points.
    """
    side = _side(side)
    q, single = _queries(duals, x)
    means, _ = _moments(duals, q, side, want_cov=False)
    return means[0] if single else means


def entropic_hessian(duals, x, side=Side.GIVEN_X):
    """Hessian of the entropic Brenier potential: conditional covariance over ``eps``."""
    q, single = _queries(duals, x)
    covs = hessians_at(duals, q, side)
    return covs[0] if single else covs


def entropic_potential(duals, x, side=Side.GIVEN_X):
    """``|x|^2 / 2`` minus the softmin extension of the dual potential."""
    side = _side(side)
    q, single = _queries(duals, x)
    out = np.empty(q.shape[0])
    for sl in _chunks(duals, q, side):
        lse = logsumexp(_log_kernel(duals, q[sl], side), axis=1)
        out[sl] = 0.5 * np.sum(q[sl] ** 2, axis=1) + duals.epsilon * lse
    return out[0] if single else out


def conditional_logdensity_hessian(duals, law, y, w_potential):
    """Hessian in ``y`` of ``-log`` of the conditional density ``law``.

    For a ``given-x`` law this is ``hess psi(y) / eps + hess W(y)`` where ``W``
    is the target potential; for a ``given-y`` law the roles of the two sides
    swap (``hess phi / eps + hess V``). The value does not depend on the
    conditioning point; ``law`` only selects the side.
    """
    if law.duals is not duals:
        raise ValidationError("conditional law was built from different duals")
    pts, single = as_points(y, duals.dim, "y")
    inside = w_potential.contains(pts)
    if not np.all(inside):
        bad = pts[np.flatnonzero(~inside)[0]]
        raise ValidationError(f"y={bad.tolist()} lies outside the potential's domain")
    own_side = Side.GIVEN_Y if law.side is Side.GIVEN_X else Side.GIVEN_X
    hess = hessians_at(duals, pts, side=own_side)
    out = hess / duals.epsilon + w_potential.hessian(pts)
    out = symmetrize(out)
    return out[0] if single else out


def fd_step(duals, rel=1e-4):
    """Central finite-difference step: ``rel`` times a sixteenth of the widest source axis."""
    box = duals.source.bounding_box()
    width = float(np.max(box[:, 1] - box[:, 0]))
    if width == 0.0:
        width = 16.0
    return rel * width / 16.0


def outside_source_box(duals, x):
    """Mask of query points outside the bounding box of the source support."""
    q, _ = _queries(duals, x)
    box = duals.source.bounding_box()
    return np.any((q < box[:, 0]) | (q > box[:, 1]), axis=1)
