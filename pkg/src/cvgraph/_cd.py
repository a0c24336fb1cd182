"""Compiled covariance-form coordinate descent for the Lasso.

Every routine works on the Gram form of the problem

    0.5 * theta' G theta - theta' c + lam * ||theta||_1

with ``G = X_pred' X_pred / n`` and ``c = X_pred' y / n``, so the cost per
sweep is independent of ``n``.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True, nogil=True)
def kkt_residual(g, theta, lam):
    r = 0.0
    for i in range(theta.shape[0]):
        if theta[i] > 0.0:
            v = abs(g[i] - lam)
        elif theta[i] < 0.0:
            v = abs(g[i] + lam)
        else:
            v = abs(g[i]) - lam
            if v < 0.0:
                v = 0.0
        if v > r:
            r = v
    return r


@njit(cache=True, nogil=True)
def _objective(gram, corr, theta, lam):
    return 0.5 * theta @ (gram @ theta) - theta @ corr + lam * np.abs(theta).sum()


@njit(cache=True, nogil=True)
def _polish(gram, corr, theta, lam, resid):
    """Re-solve the active block exactly; keep it only if KKT improves."""
    d = theta.shape[0]
    m = 0
    for i in range(d):
        if theta[i] != 0.0:
            m += 1
    if m == 0:
        return resid
    idx = np.empty(m, np.int64)
    k = 0
    for i in range(d):
        if theta[i] != 0.0:
            idx[k] = i
            k += 1
    A = np.empty((m, m))
    b = np.empty(m)
    for a in range(m):
        ia = idx[a]
        b[a] = corr[ia] - lam * np.sign(theta[ia])
        for c in range(m):
            A[a, c] = gram[ia, idx[c]]
    x = np.linalg.solve(A, b)
    for a in range(m):
        if np.sign(x[a]) != np.sign(theta[idx[a]]):
            return resid
    cand = np.zeros(d)
    for a in range(m):
        cand[idx[a]] = x[a]
    g = corr - gram @ cand
    r = kkt_residual(g, cand, lam)
    if r <= resid:
        theta[:] = cand
        return r
    return resid


@njit(cache=True, nogil=True)
def cd_solve(gram, corr, lam, theta, tol_change, kkt_tol, max_iter, trace):
    """Cyclic coordinate descent started from ``theta`` (updated in place).

    Returns ``(n_sweeps, kkt_residual, converged, objective_trace)``.
    """
    d = theta.shape[0]
    g = corr - gram @ theta
    objs = np.full(max_iter if trace else 0, np.nan)
    converged = False
    resid = np.inf
    it = 0
    while it < max_iter:
        max_change = 0.0
        for j in range(d):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            old = theta[j]
            new = _soft(g[j] + gjj * old, lam) / gjj
            if new != old:
                delta = new - old
                theta[j] = new
                for k in range(d):
                    g[k] -= gram[k, j] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if trace:
            objs[it] = _objective(gram, corr, theta, lam)
        it += 1
        if max_change < tol_change:
            g = corr - gram @ theta
            resid = kkt_residual(g, theta, lam)
            if resid <= kkt_tol:
                converged = True
                break
    if not converged:
        g = corr - gram @ theta
        resid = kkt_residual(g, theta, lam)
    resid = _polish(gram, corr, theta, lam, resid)
    if resid <= kkt_tol:
        converged = True
    return it, resid, converged, objs


@njit(cache=True, nogil=True)
def cd_path(gram, corr, grid, tol_change, kkt_tol, max_iter):
    """Warm-started solutions along ``grid``; one row of ``thetas`` per value."""
    d = corr.shape[0]
    L = grid.shape[0]
    thetas = np.zeros((L, d))
    iters = np.zeros(L, np.int64)
    resids = np.zeros(L)
    conv = np.zeros(L, np.bool_)
    theta = np.zeros(d)
    for l in range(L):
        it, r, c, _ = cd_solve(gram, corr, grid[l], theta, tol_change,
                               kkt_tol, max_iter, False)
        thetas[l] = theta
        iters[l] = it
        resids[l] = r
        conv[l] = c
    return thetas, iters, resids, conv
