"""Log-domain Sinkhorn solver for entropic optimal transport with cost |x - y|^2 / 2.

The solver alternates the two exact softmin updates

    f_i = -eps log sum_j q_j exp((g_j - c_ij) / eps)
    g_j = -eps log sum_i p_i exp((f_i - c_ij) / eps)

and stops once the coupling implied by the current pair has both marginals
within ``tol`` of ``(p, q)`` in total variation. The returned potentials are
shifted so that ``sum_i p_i f_i == sum_j q_j g_j``.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy.special import logsumexp

from ._validation import ValidationError, check_positive
from .measures import DiscreteMeasure

__all__ = [
    "DualPotentials",
    "SinkhornNonConvergence",
    "coupling",
    "dual_objective",
    "plan_weight",
    "primal_objective",
    "quadratic_cost",
    "solve",
]

logger = logging.getLogger(__name__)

# Largest cost matrix (in entries) kept in memory; larger problems are blocked.
DENSE_LIMIT = 4096 * 4096
_BLOCK_ENTRIES = 1 << 22


def quadratic_cost(x, y):
    """Pairwise ``|x_i - y_j|^2 / 2`` for point arrays of shape (n, d) and (m, d)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x[:, None, :] - y[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", diff, diff)


class _Kernel:
    """Evaluates ``LSE_j(h_j - c_ij / eps)`` (rows) and its transpose (cols).

    Picks one of three strategies: a stored cost matrix, row blocks computed on
    the fly, or axis-by-axis reductions when both supports are tensor grids.
    """

    def __init__(self, source, target, epsilon, dense_limit=DENSE_LIMIT):
        self.x = source.points
        self.y = target.points
        self.epsilon = epsilon
        self.n, self.m = source.size, target.size
        self.mode = "blocked"
        self.scaled_cost = None
        self.axis_costs = None
        if (
            source.grid_axes is not None
            and target.grid_axes is not None
            and source.dim > 1
        ):
            self.mode = "grid"
            self.source_shape = source.grid_shape
            self.target_shape = target.grid_shape
            self.axis_costs = [
                0.5 * (xa[:, None] - ya[None, :]) ** 2 / epsilon
                for xa, ya in zip(source.grid_axes, target.grid_axes)
            ]
        elif self.n * self.m <= dense_limit:
            self.mode = "dense"
            self.scaled_cost = quadratic_cost(self.x, self.y) / epsilon

    def _blocks(self, rows, cols):
        step = max(1, _BLOCK_ENTRIES // max(1, cols.shape[0]))
        for start in range(0, rows.shape[0], step):
            stop = min(start + step, rows.shape[0])
            yield slice(start, stop), quadratic_cost(rows[start:stop], cols) / self.epsilon

    def _grid_reduce(self, h, in_shape, out_shape, transpose):
        t = h.reshape(in_shape)
        for k, cost in enumerate(self.axis_costs):
            ck = cost.T if transpose else cost  # (out_k, in_k)
            moved = np.moveaxis(t, k, -1)
            lead = moved.shape[:-1]
            flat = moved.reshape(-1, moved.shape[-1])
            res = np.empty((flat.shape[0], ck.shape[0]))
            step = max(1, _BLOCK_ENTRIES // (ck.shape[0] * ck.shape[1]))
            for s in range(0, flat.shape[0], step):
                chunk = flat[s:s + step]
                res[s:s + step] = logsumexp(chunk[:, None, :] - ck[None, :, :], axis=-1)
            t = np.moveaxis(res.reshape(lead + (ck.shape[0],)), -1, k)
        return t.reshape(-1)

    def lse_rows(self, h):
        """For every source point i: ``LSE_j(h_j - c_ij / eps)``."""
        if self.mode == "dense":
            return logsumexp(h[None, :] - self.scaled_cost, axis=1)
        if self.mode == "grid":
            return self._grid_reduce(h, self.target_shape, self.source_shape, transpose=False)
        out = np.empty(self.n)
        for sl, block in self._blocks(self.x, self.y):
            out[sl] = logsumexp(h[None, :] - block, axis=1)
        return out

    def lse_cols(self, h):
        """For every target point j: ``LSE_i(h_i - c_ij / eps)``."""
        if self.mode == "dense":
            return logsumexp(h[:, None] - self.scaled_cost, axis=0)
        if self.mode == "grid":
            return self._grid_reduce(h, self.source_shape, self.target_shape, transpose=True)
        out = np.empty(self.m)
        for sl, block in self._blocks(self.y, self.x):
            out[sl] = logsumexp(h[None, :] - block, axis=1)
        return out


@dataclass(frozen=True)
class DualPotentials:
    """Solved entropic dual pair on two discrete supports.

    ``f`` and ``g`` carry units of cost and satisfy ``p @ f == q @ g``.
    ``error_trace`` holds the marginal error after every iteration.
    """

    f: np.ndarray
    g: np.ndarray
    epsilon: float
    source: DiscreteMeasure
    target: DiscreteMeasure
    iterations: int
    final_marginal_error: float
    error_trace: tuple = ()

    @property
    def dim(self):
        return self.source.dim

    def coupling(self):
        return coupling(self)


class SinkhornNonConvergence(RuntimeError):
    """Raised when ``max_iter`` is exhausted before the marginal tolerance is met.

    ``duals`` holds the (normalized) last iterate and ``error_trace`` the
    marginal error history.
    """

    def __init__(self, message, duals, error_trace):
        super().__init__(message)
        self.duals = duals
        self.error_trace = error_trace


def _normalize(f, g, p, q):
    shift = 0.5 * (p @ f - q @ g)
    return f - shift, g + shift


def _row_error(p, f, f_next, epsilon):
    # Row marginal of the coupling built from (f, g) is p * exp((f - f_next) / eps).
    delta = np.minimum((f - f_next) / epsilon, 700.0)
    return 0.5 * float(np.sum(p * np.abs(np.expm1(delta))))


def solve(source, target, epsilon, tol=1e-9, max_iter=100_000, dense_limit=DENSE_LIMIT,
          init=None):
    """Solve the entropic dual problem between two discrete measures.

    Parameters
    ----------
    source, target : DiscreteMeasure
        Marginals ``p`` and ``q``; must share the same dimension.
    epsilon : float
        Regularization strength, ``> 0``.
    tol : float
        Total-variation tolerance on the coupling marginals.
    max_iter : int
        Maximum number of (f, g) update pairs.
    dense_limit : int
        Above this many cost entries the cost is evaluated in row blocks.
    init : DualPotentials, optional
        Warm start; its ``g`` is used as the initial target potential.

    Returns
    -------
    DualPotentials

    Raises
    ------
    SinkhornNonConvergence
        If the tolerance is not reached within ``max_iter`` iterations.
    """
    epsilon = check_positive(epsilon, "epsilon")
    tol = check_positive(tol, "tol")
    if max_iter < 1:
        raise ValidationError("max_iter must be positive")
    if source.dim != target.dim:
        raise ValidationError(f"dimension mismatch: source {source.dim}, target {target.dim}")

    kernel = _Kernel(source, target, epsilon, dense_limit=dense_limit)
    p, q = source.weights, target.weights
    log_p, log_q = np.log(p), np.log(q)

    g = np.zeros(target.size) if init is None else np.array(init.g, dtype=float)
    f = -epsilon * kernel.lse_rows(g / epsilon + log_q)
    trace = []
    err = np.inf
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        g = -epsilon * kernel.lse_cols(f / epsilon + log_p)
        f_next = -epsilon * kernel.lse_rows(g / epsilon + log_q)
        err = _row_error(p, f, f_next, epsilon)
        trace.append(err)
        if err <= tol:
            break
        f = f_next

    f, g = _normalize(f, g, p, q)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise FloatingPointError("Sinkhorn produced non-finite potentials")
    duals = DualPotentials(
        f=f, g=g, epsilon=epsilon, source=source, target=target,
        iterations=iterations, final_marginal_error=float(err), error_trace=tuple(trace),
    )
    logger.debug("sinkhorn eps=%g mode=%s iterations=%d error=%.3g",
                 epsilon, kernel.mode, iterations, err)
    if err > tol:
        raise SinkhornNonConvergence(
            f"Sinkhorn did not reach tol={tol:g} in {max_iter} iterations "
            f"(marginal error {err:.3g})",
            duals=duals,
            error_trace=tuple(trace),
        )
    return duals


def _log_plan_block(duals, rows):
    """Log of the coupling restricted to the given source rows."""
    src, tgt, eps = duals.source, duals.target, duals.epsilon
    cost = quadratic_cost(src.points[rows], tgt.points)
    log_plan = (duals.f[rows, None] + duals.g[None, :] - cost) / eps
    log_plan += np.log(src.weights[rows])[:, None] + np.log(tgt.weights)[None, :]
    return log_plan, cost


def coupling(duals):
    """Dense coupling matrix ``pi_ij = exp((f_i + g_j - c_ij)/eps) p_i q_j``."""
    log_plan, _ = _log_plan_block(duals, slice(None))
    return np.exp(log_plan)


def plan_weight(duals, i, j):
    """Single coupling entry ``pi_ij``."""
    n, m = duals.source.size, duals.target.size
    if not (0 <= i < n and 0 <= j < m):
        raise IndexError(f"index ({i}, {j}) out of range for a {n} x {m} coupling")
    x, y = duals.source.points[i], duals.target.points[j]
    cost = 0.5 * float(np.sum((x - y) ** 2))
    log_w = (duals.f[i] + duals.g[j] - cost) / duals.epsilon
    return float(np.exp(log_w) * duals.source.weights[i] * duals.target.weights[j])


def _row_blocks(duals):
    step = max(1, _BLOCK_ENTRIES // duals.target.size)
    for start in range(0, duals.source.size, step):
        yield slice(start, min(start + step, duals.source.size))


def primal_objective(duals):
    """``sum pi c + eps KL(pi || p x q)`` evaluated on the coupling of ``duals``."""
    eps = duals.epsilon
    transport = 0.0
    kl = 0.0
    for rows in _row_blocks(duals):
        log_plan, cost = _log_plan_block(duals, rows)
        plan = np.exp(log_plan)
        log_ratio = (duals.f[rows, None] + duals.g[None, :] - cost) / eps
        transport += float(np.sum(plan * cost))
        kl += float(np.sum(plan * log_ratio))
    return transport + eps * kl


def dual_objective(duals):
    """``<p, f> + <q, g> - eps * sum_ij p_i q_j exp((f_i + g_j - c_ij)/eps) + eps``.

    The double sum is accumulated as a log-sum-exp, so it never overflows.
    """
    eps = duals.epsilon
    p, q = duals.source.weights, duals.target.weights
    log_terms = []
    for rows in _row_blocks(duals):
        log_plan, _ = _log_plan_block(duals, rows)
        log_terms.append(logsumexp(log_plan))
    mass = float(np.exp(logsumexp(log_terms)))
    return float(p @ duals.f + q @ duals.g) - eps * mass + eps
