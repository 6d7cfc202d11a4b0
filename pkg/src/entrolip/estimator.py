"""scikit-learn style estimator around the Sinkhorn solver and entropic maps."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .entropic_maps import Side, entropic_map, entropic_potential, hessians_at
from .measures import DiscreteMeasure
from .sinkhorn import solve


def _as_measure(data, weights, name):
    if isinstance(data, DiscreteMeasure):
        if weights is not None:
            raise ValueError(f"{name}_weights cannot be combined with a DiscreteMeasure")
        return data
    points = check_array(data, ensure_2d=False, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return DiscreteMeasure.from_points(points, weights)


class EntropicBrenierMap(TransformerMixin, BaseEstimator):
    """Entropic optimal transport map fitted between two weighted point clouds.

    ``fit(X, Y)`` solves the entropic problem from the empirical measure of
    ``X`` (or a :class:`DiscreteMeasure`) to that of ``Y``. ``transform``
    evaluates the barycentric projection at new points and
    ``inverse_transform`` the projection in the opposite direction.

    Parameters
    ----------
    epsilon : float, default=1.0
        Entropic regularization strength.
    tol : float, default=1e-9
        Marginal total-variation tolerance of the solver.
    max_iter : int, default=100000
        Maximum number of Sinkhorn iterations.

    Attributes
    ----------
    duals_ : DualPotentials
        Normalized dual potentials of the fitted problem.
    n_iter_ : int
        Iterations used by the solver.
    n_features_in_ : int
        Dimension of the fitted point clouds.
    """

    def __init__(self, epsilon=1.0, tol=1e-9, max_iter=100_000):
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, Y, source_weights=None, target_weights=None):
        source = _as_measure(X, source_weights, "source")
        target = _as_measure(Y, target_weights, "target")
        self.duals_ = solve(source, target, self.epsilon, tol=self.tol, max_iter=self.max_iter)
        self.n_iter_ = self.duals_.iterations
        self.n_features_in_ = source.dim
        return self

    def _check(self, X):
        check_is_fitted(self, "duals_")
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.n_features_in_ == 1 else X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} was fitted "
                f"with {self.n_features_in_}"
            )
        return X

    def transform(self, X):
        """Barycentric projection of each row of ``X``, shape ``(n, d)``."""
        X = self._check(X)
        return np.atleast_2d(entropic_map(self.duals_, X))

    def inverse_transform(self, Y):
        """Projection from the target side back onto the source support."""
        Y = self._check(Y)
        return np.atleast_2d(entropic_map(self.duals_, Y, side=Side.GIVEN_Y))

    def hessian(self, X):
        """Hessians of the entropic Brenier potential, shape ``(n, d, d)``."""
        return hessians_at(self.duals_, self._check(X))

    def potential(self, X):
        """Entropic Brenier potential values, shape ``(n,)``."""
        return np.atleast_1d(entropic_potential(self.duals_, self._check(X)))
