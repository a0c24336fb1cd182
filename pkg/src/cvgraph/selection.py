"""Penalty selection for the nodewise Lasso.

Criteria: prediction oracle (needs the true model), K-fold CV, and
AIC / BIC / EBIC computed on unpenalized refits restricted to each
candidate support.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _cd
from .gaussian_model import as_array, excess_risk, population_risk, predictor_index
from .lasso import (KKT_TOL, MAX_ITER, TOL_CHANGE, gram_problem, log_grid,
                    path_gram, subproblem)
from ._rng import make_rng

CRITERIA = ("oracle", "cv", "aic", "bic", "ebic")
SIGMA2_FLOOR = 1e-12


class EmptySelectionError(RuntimeError):
    """Every candidate penalty was flagged; nothing to choose from."""


@dataclass(frozen=True)
class SelectionResult:
    criterion: str
    scores: np.ndarray
    grid: np.ndarray
    chosen_index: int
    chosen_lambda: float
    chosen_support: frozenset
    flagged: np.ndarray
    metadata: dict = field(default_factory=dict)


def choose_index(scores):
    """Index of the smallest finite score; ties go to the lowest index.

    Grids are descending, so the lowest index is the largest penalty.
    """
    scores = np.asarray(scores, dtype=float)
    ok = np.isfinite(scores)
    if not ok.any():
        raise EmptySelectionError("no finite score on the grid")
    masked = np.where(ok, scores, np.inf)
    return int(np.flatnonzero(masked == masked.min())[0])


def _result(criterion, scores, grid, supports, flagged=None, **meta):
    scores = np.asarray(scores, dtype=float)
    if flagged is None:
        flagged = ~np.isfinite(scores)
    k = choose_index(scores)
    return SelectionResult(criterion=criterion, scores=scores, grid=np.asarray(grid),
                           chosen_index=k, chosen_lambda=float(grid[k]),
                           chosen_support=frozenset(supports[k]),
                           flagged=np.asarray(flagged, dtype=bool), metadata=meta)


def _supports(path):
    return [s.active_set for s in path.solutions]


def oracle_penalty(path, model):
    """Grid penalty minimizing the population risk of the Lasso fit."""
    if path.target is not None and path.target != model.target:
        raise ValueError("path target %r differs from model target %r"
                         % (path.target, model.target))
    thetas = path.thetas
    if thetas.shape[1] != model.v.shape[0]:
        raise ValueError("path dimension %d does not match model (p-1=%d)"
                         % (thetas.shape[1], model.v.shape[0]))
    scores = np.array([population_risk(t, model) for t in thetas])
    return _result("oracle", scores, path.grid, _supports(path))


def fold_indices(n, K, seed=0):
    """Row indices of K folds: seeded shuffle, then near-equal contiguous blocks."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if n < K:
        raise ValueError("need n >= K (n=%d, K=%d)" % (n, K))
    perm = make_rng(seed, "folds", n, K).permutation(n)
    return [np.sort(b) for b in np.array_split(perm, K)]


def heldout_errors(thetas, test):
    """Mean squared held-out error of each row of ``thetas`` on ``test``."""
    quad = np.einsum("li,ij,lj->l", thetas, test.gram, thetas)
    return test.yy - 2.0 * thetas @ test.corr + quad


def cv_penalty(X, target, K=5, grid_size=100, lambda_min_ratio=0.01, seed=0,
               grid=None, folds=None):
    """K-fold cross-validated penalty.

    The grid is computed once from the full data and shared by all folds.
    Each fold's score at a penalty is the mean squared error of the fit on
    the other folds, evaluated on the held-out rows; scores are averaged
    over folds. ``folds`` overrides the seeded fold assignment.

    The full-data path on the shared grid is returned in
    ``metadata["path"]``; per-fold scores in ``metadata["fold_scores"]``.
    """
    data = as_array(X)
    n = data.shape[0]
    full = gram_problem(data, target)
    lmax = float(np.abs(full.corr).max(initial=0.0))
    if grid is None:
        grid = log_grid(lmax, grid_size, lambda_min_ratio)
    grid = np.asarray(grid, dtype=float)
    if folds is None:
        folds = fold_indices(n, K, seed)
    K = len(folds)
    fold_scores = np.empty((K, grid.size))
    flagged = np.zeros(grid.size, dtype=bool)
    rows = np.arange(n)
    pred = predictor_index(data.shape[1], target)
    for k, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(rows, test_idx, assume_unique=True)
        train = gram_problem(data[train_idx], target)
        rows_t = data[test_idx]
        test = subproblem(rows_t.T @ rows_t / len(test_idx), target, pred, len(test_idx))
        thetas, _, _, conv = _cd.cd_path(train.gram, train.corr, grid, TOL_CHANGE,
                                         KKT_TOL, MAX_ITER)
        flagged |= ~conv
        fold_scores[k] = heldout_errors(thetas, test)
    scores = fold_scores.mean(axis=0)
    scores[flagged] = np.nan
    path = path_gram(full, grid, target=target, lmax=lmax)
    return _result("cv", scores, grid, _supports(path), flagged=flagged, K=K,
                   fold_scores=fold_scores, seed=seed, path=path)


@dataclass(frozen=True)
class RefitResult:
    coef: np.ndarray
    noise_variance: float
    loglik: float
    ok: bool = True


def _loglik(n, sigma2):
    sigma2 = max(sigma2, SIGMA2_FLOOR)
    return sigma2, -0.5 * n * (np.log(2 * np.pi * sigma2) + 1.0)


def refit_mle(X, target, support):
    """Least-squares refit of ``target`` on the predictor positions ``support``.

    Returns coefficients, ``sigma2 = RSS / n`` (floored at 1e-12) and the
    Gaussian log-likelihood ``-(n/2)(log(2 pi sigma2) + 1)``. Rank-deficient
    supports come back with ``ok=False`` and a NaN log-likelihood.
    """
    data = as_array(X)
    n, p = data.shape
    pred = np.array([j for j in range(p) if j != target])
    cols = pred[sorted(support)] if len(support) else np.array([], dtype=int)
    y = data[:, target]
    if cols.size == 0:
        s2, ll = _loglik(n, float(y @ y) / n)
        return RefitResult(np.zeros(0), s2, ll)
    Z = data[:, cols]
    if cols.size >= n:
        return RefitResult(np.full(cols.size, np.nan), np.nan, np.nan, ok=False)
    coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    if rank < cols.size:
        return RefitResult(coef, np.nan, np.nan, ok=False)
    r = y - Z @ coef
    s2, ll = _loglik(n, float(r @ r) / n)
    return RefitResult(coef, s2, ll)


def refit_gram(prob, support):
    """Same as :func:`refit_mle` but from a :class:`GramProblem`."""
    idx = np.array(sorted(support), dtype=int)
    if idx.size == 0:
        s2, ll = _loglik(prob.n, prob.yy)
        return RefitResult(np.zeros(0), s2, ll)
    if idx.size >= prob.n:
        return RefitResult(np.full(idx.size, np.nan), np.nan, np.nan, ok=False)
    G = prob.gram[np.ix_(idx, idx)]
    c = prob.corr[idx]
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return RefitResult(np.full(idx.size, np.nan), np.nan, np.nan, ok=False)
    if np.diag(L).min() ** 2 < 1e-12 * np.diag(G).max():
        return RefitResult(np.full(idx.size, np.nan), np.nan, np.nan, ok=False)
    coef = np.linalg.solve(G, c)
    s2, ll = _loglik(prob.n, prob.yy - coef @ c)
    return RefitResult(coef, s2, ll)


def information_criterion(loglik, df, n, p, kind, gamma=0.5):
    """AIC, BIC or EBIC of a fit with ``df`` free parameters.

    AIC = -2 ll + 2 df;  BIC = -2 ll + df log n;
    EBIC = BIC + 4 gamma df log p.
    """
    if df < 0:
        raise ValueError("df must be non-negative")
    base = -2.0 * loglik
    if kind == "aic":
        return base + 2.0 * df
    if kind == "bic":
        return base + df * np.log(n)
    if kind == "ebic":
        return base + df * np.log(n) + 4.0 * gamma * df * np.log(p)
    raise ValueError("unknown criterion %r" % (kind,))


def select_by_ic(path, X, kind, gamma=0.5, target=None):
    """Pick the grid penalty minimizing an information criterion.

    The support of each path solution is refitted without penalty and
    scored with ``df = |support|``; ``p`` in EBIC is the number of
    candidate predictors. Failed refits are flagged and skipped.
    """
    target = path.target if target is None else target
    if target is None:
        raise ValueError("path carries no target; pass target=")
    prob = gram_problem(X, target)
    return select_by_ic_gram(path, prob, kind, gamma)


def select_by_ic_gram(path, prob, kind, gamma=0.5):
    cache = {}
    scores = np.empty(len(path))
    for l, sol in enumerate(path.solutions):
        key = sol.active_set
        if key not in cache:
            fit = refit_gram(prob, key)
            cache[key] = (information_criterion(fit.loglik, len(key), prob.n,
                                                prob.dim, kind, gamma)
                          if fit.ok else np.nan)
        scores[l] = cache[key]
    return _result(kind, scores, path.grid, _supports(path), gamma=gamma)


def oracle_excess(path, model):
    """Excess population risk of every path solution (diagnostic)."""
    return np.array([excess_risk(t, model) for t in path.thetas])
