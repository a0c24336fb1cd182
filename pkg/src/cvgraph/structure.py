"""Graph estimates assembled from penalized regressions.

Three estimators share one penalty ``lam``:

* ``ns_graph``: neighbourhood selection, one Lasso per node, combined by
  the AND or OR rule;
* ``glasso``: the graphical lasso with an off-diagonal l1 penalty;
* ``dag_known_ordering``: each node regressed on its predecessors.

All of them work from the second-moment matrix ``S = X'X / n`` without
centering, matching the nodewise Lasso conventions.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _cd, _graph
from .gaussian_model import as_array, predictor_index
from .lasso import (KKT_TOL, MAX_ITER, TOL_CHANGE, ConvergenceWarning, log_grid,
                    solve_gram, subproblem)
from .selection import (SIGMA2_FLOOR, SelectionResult, choose_index, fold_indices,
                        information_criterion)

RULES = ("AND", "OR")
METHODS = ("NS", "Glasso")
ZERO_TOL = 1e-8
GLASSO_TOL = 1e-6
GLASSO_MAX_ITER = 500
REFIT_TOL = 1e-6
REFIT_MAX_ITER = 1000


@dataclass(frozen=True)
class GraphEstimate:
    """Estimated graph at one penalty.

    ``adjacency[i, j]`` is an undirected edge for NS and Glasso; for
    ``method="DAG-order"`` it means ``i -> j``.
    """

    adjacency: np.ndarray
    lam: float
    rule: str
    method: str
    converged: bool = True
    precision: np.ndarray = None
    coef: np.ndarray = None

    @property
    def p(self):
        return self.adjacency.shape[0]

    @property
    def n_edges(self):
        a = self.adjacency
        return int(a.sum()) if self.method == "DAG-order" else int(np.triu(a, 1).sum())

    def edges(self):
        """Sorted edge list; ``(i, j)`` with ``i < j`` for undirected graphs."""
        a = self.adjacency if self.method == "DAG-order" else np.triu(self.adjacency, 1)
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(a))]


def second_moment(X):
    data = as_array(X)
    n = data.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples, got n=%d" % n)
    return data.T @ data / n, n


def graph_lambda_max(X):
    """Smallest penalty giving the empty graph for both NS and Glasso."""
    S, _ = second_moment(X)
    off = np.abs(S - np.diag(np.diag(S)))
    return float(off.max(initial=0.0))


def symmetrize(coef, rule="OR"):
    """Undirected adjacency from a coefficient matrix ``coef[i, j]`` (i predicts j)."""
    nz = coef != 0
    np.fill_diagonal(nz, False)
    if rule == "AND":
        return nz & nz.T
    if rule == "OR":
        return nz | nz.T
    raise ValueError("rule must be 'AND' or 'OR', got %r" % (rule,))


def _check_lam(lam):
    if not lam > 0:
        raise ValueError("lam must be positive")


def ns_graph(X, lam, rule="OR"):
    """Neighbourhood selection at a shared penalty.

    Each node is regressed on all others; ``coef[i, j]`` holds the
    coefficient of node ``i`` in the regression for node ``j``. A
    :class:`ConvergenceWarning` names any node whose Lasso did not converge.
    """
    _check_lam(lam)
    if rule not in RULES:
        raise ValueError("rule must be 'AND' or 'OR', got %r" % (rule,))
    S, n = second_moment(X)
    p = S.shape[0]
    coef = np.zeros((p, p))
    ok = True
    for j in range(p):
        pred = predictor_index(p, j)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            sol = solve_gram(subproblem(S, j, pred, n), lam, target=j)
        if not sol.converged:
            ok = False
            warnings.warn("Lasso for node %d did not converge at lam=%g" % (j, lam),
                          ConvergenceWarning, stacklevel=2)
        coef[pred, j] = sol.theta_hat
    return GraphEstimate(symmetrize(coef, rule), float(lam), rule, "NS", ok, coef=coef)


def _glasso_start(S):
    W = S * 0.95
    np.fill_diagonal(W, np.diag(S))
    return W, np.zeros_like(S)


def glasso(X, lam, tol=GLASSO_TOL, max_iter=GLASSO_MAX_ITER):
    """Graphical lasso with the penalty on off-diagonal entries only.

    Block coordinate descent over the columns of the working covariance;
    each block is a Lasso solved by coordinate descent. Iteration stops
    once a sweep changes no entry of the working covariance by more than
    ``tol`` (relative to the largest variance) and the duality gap
    ``tr(S Theta) - p + lam sum_{i != j} |Theta_ij|`` is at most ``tol * p``.

    Returns
    -------
    precision : ndarray
        Estimated precision matrix.
    estimate : GraphEstimate
        Edges where ``|precision_ij| > 1e-8``; ``converged`` is False (and a
        warning is emitted) if ``max_iter`` sweeps were not enough.
    """
    _check_lam(lam)
    S, _ = second_moment(X)
    if np.any(np.diag(S) <= 0):
        raise ValueError("a column of X is identically zero")
    W, B = _glasso_start(S)
    theta, gap, conv = _graph.glasso_fit(S, float(lam), W, B, float(tol), int(max_iter))
    if not conv:
        warnings.warn("graphical lasso stopped with duality gap %.3g at lam=%g"
                      % (gap, lam), ConvergenceWarning, stacklevel=2)
    adj = _support(theta)
    return theta, GraphEstimate(adj, float(lam), "none", "Glasso", bool(conv),
                                precision=theta)


def _support(theta, zero_tol=ZERO_TOL):
    adj = np.abs(theta) > zero_tol
    np.fill_diagonal(adj, False)
    return adj | adj.T


def dag_known_ordering(X, ordering, lam):
    """DAG estimate when a topological ordering of the nodes is known.

    Node ``ordering[k]`` is regressed on ``ordering[:k]``; its parents are
    the predecessors with nonzero coefficients.
    """
    _check_lam(lam)
    S, n = second_moment(X)
    p = S.shape[0]
    order = np.asarray(ordering, dtype=np.intp)
    if sorted(order.tolist()) != list(range(p)):
        raise ValueError("ordering must be a permutation of 0..%d" % (p - 1))
    coef = np.zeros((p, p))
    ok = True
    for k in range(1, p):
        j = order[k]
        pred = order[:k]
        sol = solve_gram(subproblem(S, j, pred, n), lam, target=int(j))
        ok &= sol.converged
        coef[pred, j] = sol.theta_hat
    return GraphEstimate(coef != 0, float(lam), "none", "DAG-order", bool(ok), coef=coef)


def is_acyclic(adjacency):
    """Kahn's algorithm on a directed adjacency matrix."""
    a = np.asarray(adjacency, dtype=bool).copy()
    indeg = a.sum(axis=0)
    stack = [i for i in range(a.shape[0]) if indeg[i] == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for j in np.flatnonzero(a[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(int(j))
    return seen == a.shape[0]


# --- graph paths and penalty selection ---

@dataclass(frozen=True)
class GraphPath:
    """Estimates of one method along a shared descending grid.

    ``estimates[l]`` is a coefficient matrix (NS) or precision matrix
    (Glasso) for ``grid[l]``; ``adjacency[l]`` is the corresponding graph.
    """

    method: str
    rule: str
    grid: np.ndarray
    estimates: np.ndarray
    adjacency: np.ndarray
    converged: np.ndarray
    S: np.ndarray
    n: int

    @property
    def p(self):
        return self.S.shape[0]

    @property
    def edge_counts(self):
        return np.array([int(np.triu(a, 1).sum()) for a in self.adjacency])

    def __len__(self):
        return self.grid.size

    def estimate(self, l):
        if self.method == "NS":
            return GraphEstimate(self.adjacency[l], float(self.grid[l]), self.rule, "NS",
                                 bool(self.converged[l]), coef=self.estimates[l])
        return GraphEstimate(self.adjacency[l], float(self.grid[l]), "none", "Glasso",
                             bool(self.converged[l]), precision=self.estimates[l])


def _ns_coefs(S, grid):
    p = S.shape[0]
    coefs = np.zeros((grid.size, p, p))
    conv = np.ones(grid.size, dtype=bool)
    for j in range(p):
        pred = predictor_index(p, j)
        G = np.ascontiguousarray(S[np.ix_(pred, pred)])
        c = np.ascontiguousarray(S[pred, j])
        thetas, _, _, ok = _cd.cd_path(G, c, grid, TOL_CHANGE, KKT_TOL, MAX_ITER)
        coefs[:, pred, j] = thetas
        conv &= ok
    return coefs, conv


def _path_from_S(S, n, method, grid, rule):
    if method == "NS":
        est, conv = _ns_coefs(S, grid)
        adj = np.array([symmetrize(c, rule) for c in est])
    elif method == "Glasso":
        est, _, conv = _graph.glasso_path(S, grid, GLASSO_TOL, GLASSO_MAX_ITER)
        adj = np.array([_support(t) for t in est])
        rule = "none"
    else:
        raise ValueError("method must be 'NS' or 'Glasso', got %r" % (method,))
    return GraphPath(method, rule, grid, est, adj, np.asarray(conv, dtype=bool), S, n)


def graph_grid(X, grid_size=100, lambda_min_ratio=0.01, lmin=None):
    """Log-spaced grid from :func:`graph_lambda_max` down to ``lmin``."""
    return log_grid(graph_lambda_max(X), grid_size, lambda_min_ratio, lmin=lmin)


def graph_path(X, method="NS", grid=None, grid_size=100, lambda_min_ratio=0.01,
               rule="OR"):
    """Fit ``method`` on every value of a descending grid, warm-started."""
    S, n = second_moment(X)
    if grid is None:
        grid = graph_grid(X, grid_size, lambda_min_ratio)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) >= 0):
        raise ValueError("grid must be strictly decreasing")
    if method == "NS" and rule not in RULES:
        raise ValueError("rule must be 'AND' or 'OR', got %r" % (rule,))
    gp = _path_from_S(S, n, method, grid, rule)
    if not gp.converged.all():
        warnings.warn("%s path did not converge at %d grid values"
                      % (method, int((~gp.converged).sum())), ConvergenceWarning,
                      stacklevel=2)
    return gp


def gaussian_loglik(S, n, theta):
    """Gaussian log-likelihood of precision ``theta`` given ``S = X'X / n``."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return np.nan
    p = S.shape[0]
    return 0.5 * n * (logdet - np.sum(S * theta) - p * np.log(2 * np.pi))


def refit_precision(S, adjacency, tol=REFIT_TOL, max_iter=REFIT_MAX_ITER):
    """Unpenalized Gaussian MLE of the precision with support ``adjacency``.

    Returns ``(theta, ok)``; ``ok`` is False when some neighbourhood block
    of ``S`` is singular (too many neighbours for ``n``) or the iteration
    did not converge.
    """
    adj = np.asarray(adjacency, dtype=bool)
    theta, conv, ok = _graph.cov_select(S, adj, float(tol), int(max_iter))
    return theta, bool(ok and conv)


def joint_loglik(S, n, adjacency):
    theta, ok = refit_precision(S, adjacency)
    return gaussian_loglik(S, n, theta) if ok else np.nan


def pseudo_loglik(S, n, adjacency):
    """Sum over nodes of the refit Gaussian regression log-likelihood."""
    p = S.shape[0]
    total = 0.0
    for j in range(p):
        nb = np.flatnonzero(adjacency[:, j] & (np.arange(p) != j))
        if nb.size >= n:
            return np.nan
        rss = S[j, j]
        if nb.size:
            G = S[np.ix_(nb, nb)]
            c = S[nb, j]
            try:
                L = np.linalg.cholesky(G)
            except np.linalg.LinAlgError:
                return np.nan
            if np.diag(L).min() ** 2 < 1e-12 * np.diag(G).max():
                return np.nan
            rss = rss - c @ np.linalg.solve(G, c)
        s2 = max(rss, SIGMA2_FLOOR)
        total += -0.5 * n * (np.log(2 * np.pi * s2) + 1.0)
    return total


def _edge_set(adj):
    return frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(adj, 1))))


def _graph_result(criterion, scores, gp, flagged=None, **meta):
    scores = np.asarray(scores, dtype=float)
    if flagged is None:
        flagged = ~np.isfinite(scores)
    k = choose_index(scores)
    return SelectionResult(criterion=criterion, scores=scores, grid=gp.grid,
                           chosen_index=k, chosen_lambda=float(gp.grid[k]),
                           chosen_support=_edge_set(gp.adjacency[k]),
                           flagged=np.asarray(flagged, dtype=bool), metadata=meta)


def ic_scores(gp, kind, gamma=0.5, likelihood=None):
    """Information criterion of each graph on the path.

    ``likelihood="joint"`` (default) uses the unpenalized Gaussian MLE of
    the precision restricted to the graph's support; ``"pseudo"`` sums the
    nodewise refit regression log-likelihoods. ``df`` is the edge count
    and ``p`` in EBIC is the number of nodes.
    """
    if likelihood is None:
        likelihood = "joint"
    fn = {"pseudo": pseudo_loglik, "joint": joint_loglik}[likelihood]
    cache = {}
    scores = np.empty(len(gp))
    for l, adj in enumerate(gp.adjacency):
        key = _edge_set(adj)
        if key not in cache:
            ll = fn(gp.S, gp.n, adj)
            cache[key] = (information_criterion(ll, len(key), gp.n, gp.p, kind, gamma)
                          if np.isfinite(ll) else np.nan)
        scores[l] = cache[key]
    return scores, likelihood


def oracle_scores(gp, sigma):
    """Population score of every path estimate under the true covariance.

    NS: summed nodewise prediction risk ``tr((I - C)' Sigma (I - C))``.
    Glasso: ``tr(Sigma Theta) - log det Theta``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != gp.S.shape:
        raise ValueError("sigma has shape %r, expected %r" % (sigma.shape, gp.S.shape))
    p = gp.p
    scores = np.empty(len(gp))
    for l, est in enumerate(gp.estimates):
        if gp.method == "NS":
            R = np.eye(p) - est
            scores[l] = np.sum(R * (sigma @ R))
        else:
            sign, logdet = np.linalg.slogdet(est)
            scores[l] = np.sum(sigma * est) - logdet if sign > 0 else np.nan
    return scores


CV_SCORES = ("sq_error", "loglik", "refit_loglik")


def default_cv_score(method):
    return "sq_error" if method == "NS" else "loglik"


def _neg_heldout_loglik(S_te, theta):
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return np.nan
    p = S_te.shape[0]
    return -0.5 * (logdet - np.sum(S_te * theta) - p * np.log(2 * np.pi))


def cv_scores(X, method, grid, K=5, seed=0, folds=None, score=None, rule="OR"):
    """Fold-averaged held-out loss of each grid value.

    ``score`` selects the held-out loss:

    * ``"sq_error"`` (NS default): summed nodewise held-out squared error of
      the penalized regressions;
    * ``"loglik"`` (Glasso default): negative held-out Gaussian
      log-likelihood per sample of the penalized precision estimate;
    * ``"refit_loglik"``: the graph estimated on the training folds is
      refitted by unpenalized maximum likelihood on its support and scored
      by the negative held-out Gaussian log-likelihood per sample.

    Returns ``(scores, fold_scores, flagged)``.
    """
    if score is None:
        score = default_cv_score(method)
    if score not in CV_SCORES:
        raise ValueError("unknown CV score %r" % (score,))
    if (method, score) in (("NS", "loglik"), ("Glasso", "sq_error")):
        raise ValueError("score %r is not available for %s" % (score, method))
    if method not in METHODS:
        raise ValueError("method must be 'NS' or 'Glasso', got %r" % (method,))
    data = as_array(X)
    n, p = data.shape
    if folds is None:
        folds = fold_indices(n, K, seed)
    rows = np.arange(n)
    fold_scores = np.empty((len(folds), grid.size))
    flagged = np.zeros(grid.size, dtype=bool)
    for k, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(rows, test_idx, assume_unique=True)
        tr, te = data[train_idx], data[test_idx]
        S_tr = tr.T @ tr / tr.shape[0]
        S_te = te.T @ te / te.shape[0]
        gp = _path_from_S(S_tr, tr.shape[0], method, grid, rule)
        if score == "sq_error":
            R = np.eye(p)[None] - gp.estimates
            fold_scores[k] = np.einsum("lij,ik,lkj->l", R, S_te, R)
        elif score == "loglik":
            fold_scores[k] = [_neg_heldout_loglik(S_te, t) for t in gp.estimates]
        else:
            cache = {}
            for l, adj in enumerate(gp.adjacency):
                key = _edge_set(adj)
                if key not in cache:
                    theta, ok = refit_precision(S_tr, adj)
                    cache[key] = _neg_heldout_loglik(S_te, theta) if ok else np.nan
                fold_scores[k, l] = cache[key]
        flagged |= ~gp.converged
    scores = fold_scores.mean(axis=0)
    flagged |= ~np.isfinite(scores)
    scores[flagged] = np.nan
    return scores, fold_scores, flagged


def select_on_path(gp, X, criterion, K=5, gamma=0.5, seed=0, sigma=None, folds=None,
                   likelihood=None, cv_score=None):
    """Score a :class:`GraphPath` with one criterion and pick a penalty."""
    if criterion == "cv":
        score_type = cv_score or default_cv_score(gp.method)
        scores, fold_scores, flagged = cv_scores(X, gp.method, gp.grid, K, seed, folds,
                                                 score_type, gp.rule)
        return _graph_result("cv", scores, gp, flagged, K=len(fold_scores),
                             fold_scores=fold_scores, seed=seed, score_type=score_type)
    if criterion in ("aic", "bic", "ebic"):
        scores, lik = ic_scores(gp, criterion, gamma, likelihood)
        return _graph_result(criterion, scores, gp, gamma=gamma, likelihood=lik)
    if criterion == "oracle":
        if sigma is None:
            raise ValueError("the oracle criterion needs the true covariance (sigma=)")
        return _graph_result("oracle", oracle_scores(gp, sigma), gp)
    raise ValueError("unknown criterion %r" % (criterion,))


def graph_with_criterion(X, method="NS", criterion="cv", rule="OR", grid_size=100,
                         lambda_min_ratio=0.01, K=5, gamma=0.5, seed=0, grid=None,
                         sigma=None, likelihood=None, cv_score=None):
    """Graph estimate at the penalty chosen by ``criterion``.

    Parameters
    ----------
    X : array_like or SampleMatrix
        ``n x p`` data.
    method : {"NS", "Glasso"}
    criterion : {"cv", "aic", "bic", "ebic", "oracle"}
        ``"oracle"`` requires ``sigma``, the true covariance.
    rule : {"AND", "OR"}
        Symmetrization for NS; ignored by Glasso.
    grid_size, lambda_min_ratio, grid
        Grid specification; ``grid`` overrides the other two.
    K, seed
        Fold count and fold-assignment seed for CV.
    gamma : float
        EBIC parameter.
    likelihood : {"joint", "pseudo"}, optional
        Log-likelihood behind the information criteria; see :func:`ic_scores`.
    cv_score : {"sq_error", "loglik", "refit_loglik"}, optional
        Held-out loss for CV; see :func:`cv_scores`.

    Returns
    -------
    estimate : GraphEstimate
    selection : SelectionResult
        ``chosen_support`` holds the chosen edges as ``(i, j)`` pairs, i < j.
    """
    gp = graph_path(X, method, grid, grid_size, lambda_min_ratio, rule)
    sel = select_on_path(gp, X, criterion, K, gamma, seed, sigma, likelihood=likelihood,
                         cv_score=cv_score)
    return gp.estimate(sel.chosen_index), sel
