"""Closed-form ground truth for centered Gaussians and a 1D quantile-map oracle."""

import warnings

import numpy as np

from ._validation import ValidationError, check_positive, check_spd, spd_function, symmetrize

__all__ = [
    "entropic_gaussian_hessian",
    "gelbrich_hessian",
    "quantile_map_1d",
    "sqrtm_spd",
]


def sqrtm_spd(m):
    """Symmetric positive definite square root through ``numpy.linalg.eigh``.

    Examples
    --------
    >>> sqrtm_spd([[4.0, 0.0], [0.0, 9.0]])
    array([[2., 0.],
           [0., 3.]])
    """
    m = check_spd(m, name="M")
    return symmetrize(spd_function(m, np.sqrt))


def _inv_sqrtm(m):
    return symmetrize(spd_function(m, lambda v: 1.0 / np.sqrt(v)))


def gelbrich_hessian(a, b):
    r"""Hessian of the Brenier potential from ``N(0, A)`` to ``N(0, B)``.

    .. math::
        A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}

    The map is linear, so the Hessian does not depend on the base point.
    """
    return entropic_gaussian_hessian(a, b, 0.0)


def entropic_gaussian_hessian(a, b, epsilon):
    r"""Hessian of the entropic Brenier potential between centered Gaussians.

    .. math::
        A^{-1/2} \left(A^{1/2} B A^{1/2} + \tfrac{\varepsilon^2}{4} I\right)^{1/2}
        A^{-1/2} - \tfrac{\varepsilon}{2} A^{-1}

    Parameters
    ----------
    a, b : array-like of shape (d, d)
        Source and target covariances (SPD).
    epsilon : float
        Regularization, ``>= 0``; ``0`` gives :func:`gelbrich_hessian`.

    Returns
    -------
    ndarray of shape (d, d)
    """
    a = check_spd(a, name="A")
    b = check_spd(b, name="B")
    if a.shape != b.shape:
        raise ValidationError(f"A and B must have the same shape, got {a.shape} and {b.shape}")
    epsilon = check_positive(epsilon, "epsilon", allow_zero=True)
    d = a.shape[0]
    a_half = sqrtm_spd(a)
    a_inv_half = _inv_sqrtm(a)
    inner = sqrtm_spd(symmetrize(a_half @ b @ a_half) + 0.25 * epsilon**2 * np.eye(d))
    a_inv = a_inv_half @ a_inv_half
    return symmetrize(a_inv_half @ inner @ a_inv_half - 0.5 * epsilon * a_inv)


def _cdf_knots(measure):
    if measure.dim != 1:
        raise ValidationError("quantile_map_1d needs one-dimensional measures")
    order = np.argsort(measure.points[:, 0])
    x = measure.points[order, 0]
    w = measure.weights[order]
    if x.size == 1:
        # No neighbours to set a cell width; a unit cell centres the atom at the median.
        return np.array([x[0] - 0.5, x[0] + 0.5]), np.array([0.0, 1.0]), x
    mids = 0.5 * (x[1:] + x[:-1])
    lo = x[0] - (mids[0] - x[0])
    hi = x[-1] + (x[-1] - mids[-1])
    edges = np.concatenate([[lo], mids, [hi]])
    cdf = np.concatenate([[0.0], np.cumsum(w)])
    cdf[-1] = 1.0
    return edges, cdf, x


def quantile_map_1d(source, target, x):
    """Monotone rearrangement ``F_Q^{-1}(F_P(x))`` between two 1D discrete measures.

    Each atom's mass is spread uniformly over its cell (cells split at the
    midpoints between neighbouring atoms), which makes both CDFs continuous and
    piecewise linear. Queries outside the source atoms are clamped with a
    warning.
    """
    p_edges, p_cdf, p_atoms = _cdf_knots(source)
    q_edges, q_cdf, _ = _cdf_knots(target)
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs).ravel() if xs.ndim <= 1 else xs[:, 0]
    clamped = np.clip(xs, p_atoms[0], p_atoms[-1])
    if np.any(clamped != xs):
        warnings.warn("quantile_map_1d: query outside the source range was clamped", RuntimeWarning)
    u = np.interp(clamped, p_edges, p_cdf)
    if target.size == 1:
        out = np.full_like(u, target.points[0, 0])
    else:
        out = np.interp(u, q_cdf, q_edges)
    return float(out[0]) if scalar else out
