"""Log-concave density oracles and their grid discretizations.

A :class:`Potential` describes a density ``exp(-V)`` through ``V`` and its first
two derivatives together with certified spectral bounds
``alpha * I <= hess V <= beta * I`` on a box. :func:`discretize` turns a
potential into a weighted point cloud (:class:`DiscreteMeasure`) by evaluating
the density at the nodes of a uniform grid.

All callables stored on a potential are vectorized: they accept points of shape
``(..., d)`` and return arrays of shape ``(...)``, ``(..., d)`` and
``(..., d, d)`` respectively.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from ._validation import (
    ValidationError,
    as_points,
    check_box,
    check_positive,
    check_spd,
    extreme_eigenvalues,
    symmetrize,
)

__all__ = [
    "CertificationError",
    "DiscreteMeasure",
    "Potential",
    "certify_bounds",
    "certify_matrix_bound",
    "convolved_hessian",
    "discretize",
    "make_gaussian_potential",
    "make_perturbed_potential",
    "make_quartic_potential",
    "make_separable_perturbed_potential",
]

BOUND_TOL = 1e-8
# Default box half-width, in units of 1/sqrt(alpha).
BOX_RADIUS = 10.0


class CertificationError(ValueError):
    """A Hessian eigenvalue escaped the declared spectral bounds."""

    def __init__(self, message, point=None, eigenvalue=None):
        super().__init__(message)
        self.point = point
        self.eigenvalue = eigenvalue


def _readonly(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Potential:
    """Smooth negative log-density with certified Hessian bounds.

    ``value`` may omit the normalizing constant. ``alpha`` and ``beta`` bracket
    the spectrum of ``hessian`` on ``domain`` (``beta`` may be ``inf``).
    """

    dim: int
    value: Callable
    gradient: Callable
    hessian: Callable
    alpha: float
    beta: float
    domain: np.ndarray
    name: str = "potential"
    params: dict = field(default_factory=dict)
    mode: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dim must be a positive integer")
        check_positive(self.alpha, "alpha", allow_zero=True)
        check_positive(self.beta, "beta", allow_inf=True)
        if self.alpha > self.beta:
            raise ValidationError(f"alpha={self.alpha} exceeds beta={self.beta}")
        object.__setattr__(self, "domain", _readonly(check_box(self.domain, self.dim, "domain")))
        if self.mode is not None:
            object.__setattr__(self, "mode", _readonly(np.reshape(self.mode, self.dim)))

    def contains(self, x, atol=0.0):
        """Boolean mask of points lying in the (closed) domain box."""
        pts, _ = as_points(x, self.dim)
        lo, hi = self.domain[:, 0] - atol, self.domain[:, 1] + atol
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def with_domain(self, box):
        """Copy of the potential restricted to another box (bounds unchanged)."""
        return Potential(
            dim=self.dim,
            value=self.value,
            gradient=self.gradient,
            hessian=self.hessian,
            alpha=self.alpha,
            beta=self.beta,
            domain=box,
            name=self.name,
            params=dict(self.params),
            mode=self.mode,
        )


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure.

    ``grid_axes`` is set when the support is the tensor grid spanned by the
    given 1D node arrays, in C order (last axis fastest). Solvers use it to
    evaluate the separable quadratic kernel axis by axis.
    """

    points: np.ndarray
    weights: np.ndarray
    cell_volume: float = 0.0
    source: Optional[Potential] = None
    grid_axes: Optional[tuple] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValidationError("points must be a nonempty (n, d) array")
        if weights.shape[0] != points.shape[0]:
            raise ValidationError(
                f"{weights.shape[0]} weights given for {points.shape[0]} points"
            )
        if not np.all(np.isfinite(points)):
            raise ValidationError("points contain non-finite entries")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("weights must be strictly positive and finite")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {weights.sum():.15g}, expected 1")
        if self.grid_axes is None and points.shape[0] > 1:
            if np.unique(points, axis=0).shape[0] != points.shape[0]:
                raise ValidationError("points must be pairwise distinct")
        if self.grid_axes is not None:
            axes = tuple(_readonly(np.ravel(a)) for a in self.grid_axes)
            if len(axes) != points.shape[1] or int(np.prod([a.size for a in axes])) != points.shape[0]:
                raise ValidationError("grid_axes do not match the point array")
            object.__setattr__(self, "grid_axes", axes)
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def from_points(cls, points, weights=None):
        """Point cloud with optional (unnormalized) weights; uniform by default."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if weights is None:
            weights = np.full(points.shape[0], 1.0 / points.shape[0])
        else:
            weights = np.asarray(weights, dtype=float)
            if np.any(weights <= 0):
                raise ValidationError("weights must be strictly positive")
            weights = weights / weights.sum()
        return cls(points=points, weights=weights)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def grid_shape(self):
        return None if self.grid_axes is None else tuple(a.size for a in self.grid_axes)

    def mean(self):
        return self.weights @ self.points

    def expectation(self, values):
        """Weighted average of per-point values of any trailing shape."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def bounding_box(self):
        return np.stack([self.points.min(axis=0), self.points.max(axis=0)], axis=1)


def make_gaussian_potential(mean, covariance):
    """Potential of ``N(mean, covariance)``, normalizing constant omitted.

    Examples
    --------
    >>> p = make_gaussian_potential([0.0], [[4.0]])
    >>> p.alpha, p.beta
    (0.25, 0.25)
    """
    cov = check_spd(np.atleast_2d(covariance), name="covariance")
    d = cov.shape[0]
    mean = np.asarray(mean, dtype=float).reshape(d)
    precision = symmetrize(np.linalg.inv(cov))
    cov_eig = np.linalg.eigvalsh(cov)
    prec_eig = np.linalg.eigvalsh(precision)
    radius = BOX_RADIUS * np.sqrt(cov_eig[-1])
    domain = np.stack([mean - radius, mean + radius], axis=1)

    def value(x):
        z = np.asarray(x, dtype=float) - mean
        return 0.5 * np.einsum("...i,ij,...j->...", z, precision, z)

    def gradient(x):
        z = np.asarray(x, dtype=float) - mean
        return z @ precision

    def hessian(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(precision, x.shape[:-1] + (d, d)).copy()

    return Potential(
        dim=d,
        value=value,
        gradient=gradient,
        hessian=hessian,
        alpha=float(prec_eig[0]),
        beta=float(prec_eig[-1]),
        domain=domain,
        name="gaussian",
        params={"mean": mean.tolist(), "covariance": cov.tolist()},
        mode=mean,
    )


def make_separable_perturbed_potential(base_curvatures, amplitudes, frequencies):
    """Sum over axes of ``c x^2 / 2 + (a / w^2) cos(w x)``.

    The Hessian is ``diag(c - a cos(w x))`` so the spectrum lies in
    ``[min(c - |a|), max(c + |a|)]``. Requires ``|a| < c`` on every axis.
    """
    c = np.atleast_1d(np.asarray(base_curvatures, dtype=float))
    a = np.broadcast_to(np.asarray(amplitudes, dtype=float), c.shape).copy()
    w = np.broadcast_to(np.asarray(frequencies, dtype=float), c.shape).copy()
    if np.any(c <= 0):
        raise ValidationError("base curvatures must be positive")
    if np.any(w <= 0):
        raise ValidationError("frequencies must be positive")
    if np.any(np.abs(a) >= c):
        raise ValidationError(
            "amplitude must be smaller than the base curvature in absolute value "
            "(the potential would not be strongly convex)"
        )
    d = c.size
    lower = c - np.abs(a)
    upper = c + np.abs(a)
    alpha = float(lower.min())
    radius = BOX_RADIUS / np.sqrt(alpha)
    domain = np.stack([np.full(d, -radius), np.full(d, radius)], axis=1)

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.sum(0.5 * c * x**2 + (a / w**2) * np.cos(w * x), axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return c * x - (a / w) * np.sin(w * x)

    def hessian(x):
        x = np.asarray(x, dtype=float)
        diag = c - a * np.cos(w * x)
        return diag[..., :, None] * np.eye(d)

    return Potential(
        dim=d,
        value=value,
        gradient=gradient,
        hessian=hessian,
        alpha=alpha,
        beta=float(upper.max()),
        domain=domain,
        name="separable-perturbed",
        params={
            "base_curvatures": c.tolist(),
            "amplitudes": a.tolist(),
            "frequencies": w.tolist(),
        },
        mode=np.zeros(d),
    )


def make_perturbed_potential(base_curvature, amplitude, frequency):
    """1D potential ``c x^2/2 + (a/w^2) cos(w x)`` with ``V'' = c - a cos(w x)``.

    Examples
    --------
    >>> p = make_perturbed_potential(2.0, 1.0, 2.0)
    >>> p.alpha, p.beta
    (1.0, 3.0)
    """
    p = make_separable_perturbed_potential([base_curvature], [amplitude], [frequency])
    params = {"base_curvature": float(base_curvature), "amplitude": float(amplitude),
              "frequency": float(frequency)}
    return Potential(
        dim=1, value=p.value, gradient=p.gradient, hessian=p.hessian,
        alpha=p.alpha, beta=p.beta, domain=p.domain, name="perturbed",
        params=params, mode=p.mode,
    )


QUARTIC_RADIUS = 6.0


def make_quartic_potential(dim=1):
    """``|x|^2/2 + sum x_k^4/4``: strongly log-concave (alpha = 1) with unbounded Hessian."""
    d = int(dim)
    # exp(-V) is below 1e-148 at the box edge, so the box loses no mass yet avoids underflow.
    domain = np.tile([-QUARTIC_RADIUS, QUARTIC_RADIUS], (d, 1))

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.sum(0.5 * x**2 + 0.25 * x**4, axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return x + x**3

    def hessian(x):
        x = np.asarray(x, dtype=float)
        return (1.0 + 3.0 * x**2)[..., :, None] * np.eye(d)

    return Potential(
        dim=d, value=value, gradient=gradient, hessian=hessian,
        alpha=1.0, beta=np.inf, domain=domain, name="quartic",
        params={"dim": d}, mode=np.zeros(d),
    )


def _grid(box, resolution):
    axes = tuple(np.linspace(lo, hi, resolution) for lo, hi in box)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return axes, points


def certify_bounds(p, resolution, tol=BOUND_TOL):
    """Scan a ``resolution**dim`` grid of the domain and re-check the declared bounds.

    Returns the observed ``(alpha_obs, beta_obs)``. Raises
    :class:`CertificationError` naming the first grid point whose Hessian
    spectrum leaves ``[alpha - tol, beta + tol]``.
    """
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    _, points = _grid(p.domain, int(resolution))
    lo, hi = extreme_eigenvalues(p.hessian(points))
    bad_lo = np.flatnonzero(lo < p.alpha - tol)
    bad_hi = np.flatnonzero(hi > p.beta + tol)
    if bad_lo.size or bad_hi.size:
        if bad_lo.size:
            i, eig, side = bad_lo[0], lo[bad_lo[0]], f"below alpha={p.alpha}"
        else:
            i, eig, side = bad_hi[0], hi[bad_hi[0]], f"above beta={p.beta}"
        raise CertificationError(
            f"{p.name}: Hessian eigenvalue {eig:.12g} at x={points[i].tolist()} is {side}",
            point=points[i],
            eigenvalue=float(eig),
        )
    return float(lo.min()), float(hi.max())


def certify_matrix_bound(p, resolution, upper=None, lower=None, tol=BOUND_TOL):
    """Check ``lower <= hess V(x) <= upper`` in PSD order on a domain grid.

    Returns the worst (smallest) PSD margins ``(lower_margin, upper_margin)``;
    a missing bound yields ``inf``. Raises :class:`CertificationError` if a
    margin drops below ``-tol``.
    """
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    _, points = _grid(p.domain, int(resolution))
    hess = p.hessian(points)
    margins = []
    for bound, sign, label in ((lower, 1.0, "lower"), (upper, -1.0, "upper")):
        if bound is None:
            margins.append(np.inf)
            continue
        bound = np.atleast_2d(np.asarray(bound, dtype=float))
        diff = sign * (hess - bound)
        mins, _ = extreme_eigenvalues(diff)
        i = int(np.argmin(mins))
        if mins[i] < -tol:
            raise CertificationError(
                f"{p.name}: {label} matrix bound violated by {-mins[i]:.3g} at x={points[i].tolist()}",
                point=points[i],
                eigenvalue=float(mins[i]),
            )
        margins.append(float(mins[i]))
    return tuple(margins)


def discretize(p, resolution, box=None):
    """Grid quadrature of ``exp(-V)``: weights proportional to the density at the nodes.

    Parameters
    ----------
    p : Potential
        Requires ``p.alpha > 0`` so that the tails are controlled.
    resolution : int
        Number of nodes per axis (``>= 2``); nodes include the box corners.
    box : array-like of shape (d, 2), optional
        Overrides ``p.domain``.

    Returns
    -------
    DiscreteMeasure
        Grid measure carrying ``p`` as its ``source`` and the grid axes.
    """
    resolution = int(resolution)
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    if not p.alpha > 0:
        raise ValidationError(f"{p.name}: discretization requires alpha > 0")
    if box is not None:
        p = p.with_domain(box)
    axes, points = _grid(p.domain, resolution)
    log_w = -np.asarray(p.value(points), dtype=float)
    if not np.all(np.isfinite(log_w)):
        raise ValidationError(f"{p.name}: potential is not finite on the grid")
    log_w -= logsumexp(log_w)
    weights = np.exp(log_w)
    keep = weights > 0
    if not np.all(keep):
        raise ValidationError(
            f"{p.name}: {np.count_nonzero(~keep)} grid weights underflow; use a smaller domain box"
        )
    weights /= weights.sum()
    cell = float(np.prod([(hi - lo) / (resolution - 1) for lo, hi in p.domain]))
    return DiscreteMeasure(points=points, weights=weights, cell_volume=cell, source=p, grid_axes=axes)


def convolved_hessian(inner, mixing, y):
    """Hessian of ``-log`` of the density of ``exp(-inner) * mixing`` at ``y``.

    Uses the identity ``E_nu[hess V(y - X)] - Cov_nu(grad V(y - X))`` where
    ``nu(dx)`` is proportional to ``exp(-V(y - x)) mixing(dx)``; the weights of
    ``nu`` are formed in the shifted log domain.
    """
    if not np.isfinite(inner.beta):
        raise ValidationError("convolved_hessian requires an inner potential with finite beta")
    ys, single = as_points(y, inner.dim, "y")
    if mixing.dim != inner.dim:
        raise ValidationError("mixing measure dimension does not match the inner potential")
    out = np.empty((ys.shape[0], inner.dim, inner.dim))
    log_mu = np.log(mixing.weights)
    for k, yk in enumerate(ys):
        shifted = yk - mixing.points
        log_nu = log_mu - np.asarray(inner.value(shifted), dtype=float)
        top = np.max(log_nu)
        if not np.isfinite(top):
            raise ValidationError(f"convolution normalizer underflows at y={yk.tolist()}")
        nu = np.exp(log_nu - top)
        total = nu.sum()
        if not total > 0:
            raise ValidationError(f"convolution normalizer underflows at y={yk.tolist()}")
        nu /= total
        grads = inner.gradient(shifted)
        centered = grads - nu @ grads
        cov = np.einsum("i,ij,ik->jk", nu, centered, centered)
        out[k] = symmetrize(np.tensordot(nu, inner.hessian(shifted), axes=(0, 0)) - cov)
    return out[0] if single else out
