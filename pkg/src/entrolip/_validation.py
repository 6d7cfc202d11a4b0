"""Input validation and small symmetric-matrix helpers shared across modules."""

import numpy as np

# Reject matrix inverses above this condition number.
MAX_CONDITION = 1e12


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_points(x, dim=None, name="x"):
    """Coerce ``x`` to a float array of shape ``(n, d)``.

    Returns the array and a flag telling whether the input was a single point,
    so public functions can squeeze their output back.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if dim is None or arr.shape[0] == dim else arr.reshape(-1, 1)
        single = arr.shape[0] == 1
    elif arr.ndim != 2:
        raise ValidationError(f"{name} must be a point or an (n, d) array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValidationError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr, single


def symmetrize(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def check_symmetric_matrix(m, name="matrix", atol=1e-12):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > atol * scale:
        raise ValidationError(f"{name} is not symmetric")
    return symmetrize(m)


def check_spd(m, name="matrix"):
    """Validate a symmetric positive definite matrix and return its symmetrized copy."""
    m = check_symmetric_matrix(m, name=name)
    eigvals = np.linalg.eigvalsh(m)
    if eigvals[0] <= 0:
        raise ValidationError(
            f"{name} is not positive definite (smallest eigenvalue {eigvals[0]:.6g})"
        )
    return m


def extreme_eigenvalues(mats):
    """Smallest and largest eigenvalues of a stack of (symmetrized) matrices."""
    eig = np.linalg.eigvalsh(symmetrize(mats))
    return eig[..., 0], eig[..., -1]


def spd_function(m, func, name="matrix"):
    """Apply ``func`` to the spectrum of a symmetric matrix (or a stack of them)."""
    eigvals, eigvecs = np.linalg.eigh(symmetrize(m))
    return np.einsum("...ij,...j,...kj->...ik", eigvecs, func(eigvals), eigvecs)


def spd_inverse(m, name="matrix"):
    """Inverse of SPD matrices via eigendecomposition, guarded by a condition-number limit."""
    eigvals, eigvecs = np.linalg.eigh(symmetrize(m))
    lo, hi = eigvals[..., 0], eigvals[..., -1]
    if np.any(lo <= 0) or np.any(hi > MAX_CONDITION * lo):
        worst = float(np.min(lo))
        raise ValidationError(
            f"{name} is singular or ill-conditioned (smallest eigenvalue {worst:.3g})"
        )
    return np.einsum("...ij,...j,...kj->...ik", eigvecs, 1.0 / eigvals, eigvecs)


def check_box(box, dim, name="box"):
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if box.shape != (dim, 2):
        raise ValidationError(f"{name} must have shape ({dim}, 2), got {box.shape}")
    if not np.all(box[:, 0] < box[:, 1]):
        raise ValidationError(f"{name} must satisfy lower < upper on every axis")
    return box


def check_positive(value, name, allow_zero=False, allow_inf=False):
    value = float(value)
    if np.isnan(value) or (np.isinf(value) and not allow_inf):
        raise ValidationError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = "nonnegative" if allow_zero else "positive"
        raise ValidationError(f"{name} must be {bound}, got {value}")
    return value
