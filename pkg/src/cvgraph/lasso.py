"""Nodewise Lasso: solver, gradient correlations, KKT checks and paths.

The estimator regresses column ``target`` of ``X`` on all other columns,

    argmin_theta  1/(2n) ||X_t - X_pred theta||^2 + lam ||theta||_1,

without centering or standardizing unless asked to.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _cd
from .gaussian_model import as_array, predictor_index

TOL_CHANGE = 1e-10
KKT_TOL = 1e-8
MAX_ITER = 100_000


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GramProblem:
    """Sufficient statistics of one nodewise regression."""

    gram: np.ndarray   # predictors' X'X / n
    corr: np.ndarray   # predictors' X'y / n
    yy: float          # y'y / n
    n: int

    @property
    def dim(self):
        return self.corr.shape[0]

    def gradient(self, theta):
        return self.corr - self.gram @ theta

    def objective(self, theta, lam):
        theta = np.asarray(theta, dtype=float)
        return float(0.5 * (self.yy - 2 * theta @ self.corr + theta @ self.gram @ theta)
                     + lam * np.abs(theta).sum())


def gram_problem(X, target):
    """Build the :class:`GramProblem` for regressing ``target`` on the rest."""
    data = as_array(X)
    n, p = data.shape
    if n < 2:
        raise ValueError("need at least 2 samples, got n=%d" % n)
    if not 0 <= target < p:
        raise IndexError("target %r out of range for p=%d" % (target, p))
    idx = predictor_index(p, target)
    Z = data[:, idx]
    y = data[:, target]
    return GramProblem(gram=Z.T @ Z / n, corr=Z.T @ y / n, yy=float(y @ y / n), n=n)


def subproblem(S, target, predictors, n):
    """:class:`GramProblem` from a full second-moment matrix ``S``."""
    predictors = np.asarray(predictors, dtype=np.intp)
    return GramProblem(gram=np.ascontiguousarray(S[np.ix_(predictors, predictors)]),
                       corr=np.ascontiguousarray(S[predictors, target]),
                       yy=float(S[target, target]), n=n)


def gradient_correlation(X, target, theta, i=None):
    """(1/n) <X_t - sum_j theta_j X_j, X_i>; all coordinates when ``i`` is None."""
    prob = gram_problem(X, target)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (prob.dim,):
        raise ValueError("theta must have length %d" % prob.dim)
    g = prob.gradient(theta)
    return g if i is None else float(g[i])


def lambda_max(X, target):
    """Smallest penalty at which the zero vector solves the Lasso."""
    return float(np.abs(gram_problem(X, target).corr).max(initial=0.0))


@dataclass(frozen=True)
class LassoSolution:
    theta_hat: np.ndarray
    lam: float
    active_set: frozenset
    kkt_residual: float
    objective_value: float
    converged: bool = True
    n_iter: int = 0
    target: int = None

    @property
    def support_size(self):
        return len(self.active_set)


@dataclass(frozen=True)
class KKTReport:
    violations: np.ndarray
    max_violation: float
    gradient: np.ndarray

    def passed(self, tol=KKT_TOL):
        return self.max_violation <= tol


def _make_solution(prob, theta, lam, resid, conv, it, target):
    theta = np.array(theta, dtype=float)
    theta.setflags(write=False)
    return LassoSolution(theta_hat=theta, lam=float(lam),
                         active_set=frozenset(int(i) for i in np.flatnonzero(theta)),
                         kkt_residual=float(resid),
                         objective_value=prob.objective(theta, lam),
                         converged=bool(conv), n_iter=int(it), target=target)


def solve_gram(prob, lam, kkt_tol=KKT_TOL, max_iter=MAX_ITER, warm_start=None,
               debug=False, target=None):
    """Lasso on a :class:`GramProblem`; see :func:`solve`."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    theta = (np.zeros(prob.dim) if warm_start is None
             else np.array(warm_start, dtype=float))
    if theta.shape != (prob.dim,):
        raise ValueError("warm_start must have length %d" % prob.dim)
    start_obj = prob.objective(theta, lam)
    it, resid, conv, trace = _cd.cd_solve(prob.gram, prob.corr, float(lam), theta,
                                          TOL_CHANGE, kkt_tol, int(max_iter), debug)
    if debug:
        trace = trace[~np.isnan(trace)]
        steps = np.diff(np.concatenate([[start_obj - 0.5 * prob.yy], trace]))
        assert np.all(steps <= 1e-12 * max(1.0, abs(start_obj))), \
            "objective increased during coordinate descent"
    if not conv:
        warnings.warn("Lasso did not converge at lam=%g (KKT residual %.3g after %d sweeps)"
                      % (lam, resid, it), ConvergenceWarning, stacklevel=3)
    return _make_solution(prob, theta, lam, resid, conv, it, target)


def solve(X, target, lam, kkt_tol=KKT_TOL, max_iter=MAX_ITER, warm_start=None,
          standardize=False, debug=False):
    """Solve the nodewise Lasso for column ``target`` at penalty ``lam``.

    Cyclic coordinate descent with exact soft-threshold updates, stopped
    once the largest coordinate change is below 1e-10 and the KKT residual
    is below ``kkt_tol``. The active block is then re-solved exactly, which
    brings the residual down to rounding level.

    If the solver runs out of sweeps a :class:`ConvergenceWarning` is
    emitted and the returned solution has ``converged=False``; it still
    carries the best iterate and its residual.

    With ``standardize=True`` the problem is solved on unit-variance
    predictors and the coefficients are mapped back to the raw scale; the
    reported KKT residual then refers to the standardized problem.
    """
    prob = gram_problem(X, target)
    if standardize:
        scale = np.sqrt(np.diag(prob.gram))
        scale[scale == 0] = 1.0
        sprob = GramProblem(prob.gram / np.outer(scale, scale), prob.corr / scale,
                            prob.yy, prob.n)
        ws = None if warm_start is None else np.asarray(warm_start) * scale
        sol = solve_gram(sprob, lam, kkt_tol, max_iter, ws, debug, target)
        theta = sol.theta_hat / scale
        return _make_solution(prob, theta, lam, sol.kkt_residual, sol.converged,
                              sol.n_iter, target)
    return solve_gram(prob, lam, kkt_tol, max_iter, warm_start, debug, target)


def log_grid(lmax, grid_size=100, lambda_min_ratio=0.01, lmin=None):
    """Descending log-spaced grid from ``lmax`` down to ``lmin``."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if lmin is None:
        if not 0 < lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        lmin = lmax * lambda_min_ratio
    if not lmax > lmin > 0:
        raise ValueError("need lmax > lmin > 0, got %g, %g" % (lmax, lmin))
    grid = np.geomspace(lmax, lmin, grid_size)
    grid[0], grid[-1] = lmax, lmin
    return grid


@dataclass(frozen=True)
class LassoPath:
    grid: np.ndarray
    solutions: tuple
    lambda_max: float
    lambda_min: float
    target: int = None

    @property
    def thetas(self):
        return np.vstack([s.theta_hat for s in self.solutions])

    @property
    def support_sizes(self):
        return np.array([len(s.active_set) for s in self.solutions])

    @property
    def max_kkt_residual(self):
        return max(s.kkt_residual for s in self.solutions)

    def __len__(self):
        return len(self.solutions)


def path_gram(prob, grid, kkt_tol=KKT_TOL, max_iter=MAX_ITER, target=None,
              lmax=None):
    """Warm-started solutions of ``prob`` along a descending ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) >= 0):
        raise ValueError("grid must be strictly decreasing")
    thetas, iters, resids, conv = _cd.cd_path(prob.gram, prob.corr, grid,
                                              TOL_CHANGE, kkt_tol, int(max_iter))
    if not conv.all():
        bad = grid[~conv]
        warnings.warn("Lasso did not converge at %d grid values (first %g)"
                      % (bad.size, bad[0]), ConvergenceWarning, stacklevel=3)
    sols = tuple(_make_solution(prob, thetas[l], grid[l], resids[l], conv[l],
                                iters[l], target) for l in range(grid.size))
    if lmax is None:
        lmax = float(np.abs(prob.corr).max(initial=0.0))
    return LassoPath(grid=grid, solutions=sols, lambda_max=lmax,
                     lambda_min=float(grid[-1]), target=target)


def solution_path(X, target, grid_size=100, lambda_min_ratio=0.01, grid=None,
                  kkt_tol=KKT_TOL):
    """Lasso path over a log-spaced grid starting at :func:`lambda_max`.

    The first grid value is ``lambda_max`` itself, so the first solution is
    the zero vector. Pass ``grid`` to use a precomputed descending grid.
    """
    prob = gram_problem(X, target)
    lmax = float(np.abs(prob.corr).max(initial=0.0))
    if grid is None:
        if lmax == 0:
            raise ValueError("response is orthogonal to every predictor")
        grid = log_grid(lmax, grid_size, lambda_min_ratio)
    return path_gram(prob, grid, kkt_tol, target=target, lmax=lmax)


def estimated_neighborhood(sol, zero_tol=0.0):
    """Positions with ``|theta_hat_i| > zero_tol``."""
    theta = sol.theta_hat if isinstance(sol, LassoSolution) else np.asarray(sol)
    return frozenset(int(i) for i in np.flatnonzero(np.abs(theta) > zero_tol))


def kkt_violations(prob, theta, lam):
    """Per-coordinate KKT violations at ``(theta, lam)`` and the gradient."""
    theta = np.asarray(theta, dtype=float)
    g = prob.gradient(theta)
    viol = np.where(theta != 0, np.abs(g - np.sign(theta) * lam),
                    np.maximum(np.abs(g) - lam, 0.0))
    return KKTReport(violations=viol, max_violation=float(viol.max(initial=0.0)),
                     gradient=g)


def kkt_check(X, target, theta, lam):
    """KKT report for ``theta`` as a candidate Lasso solution at ``lam``.

    ``max_violation`` is zero exactly when ``theta`` solves the Lasso.
    """
    return kkt_violations(gram_problem(X, target), theta, lam)
