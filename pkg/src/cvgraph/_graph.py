"""Compiled kernels for graph-level estimation.

``cov_select`` is the support-constrained Gaussian MLE (regression form of
iterative proportional scaling); ``glasso_fit`` is block coordinate
descent on the penalized log-determinant objective with an off-diagonal
l1 penalty. Both update a working covariance ``W`` column by column.
"""

import numpy as np
from numba import njit

from ._cd import cd_solve


@njit(cache=True, nogil=True)
def _others(p, j):
    idx = np.empty(p - 1, np.int64)
    k = 0
    for i in range(p):
        if i != j:
            idx[k] = i
            k += 1
    return idx


@njit(cache=True, nogil=True)
def _precision_from(W, B):
    """Precision matrix from the working covariance and column regressions."""
    p = W.shape[0]
    T = np.zeros((p, p))
    for j in range(p):
        acc = W[j, j]
        for i in range(p):
            if i != j:
                acc -= W[i, j] * B[i, j]
        tjj = 1.0 / acc
        T[j, j] = tjj
        for i in range(p):
            if i != j:
                T[i, j] = -B[i, j] * tjj
    for i in range(p):
        for j in range(i + 1, p):
            v = 0.5 * (T[i, j] + T[j, i])
            T[i, j] = v
            T[j, i] = v
    return T


@njit(cache=True, nogil=True)
def cov_select(S, adj, tol, max_iter):
    """MLE of the precision matrix with zeros wherever ``adj`` is False.

    Returns ``(Theta, converged, ok)``; ``ok`` is False when a
    neighbourhood block of the working covariance is singular.
    """
    p = S.shape[0]
    W = S.copy()
    B = np.zeros((p, p))
    scale = 0.0
    for i in range(p):
        scale = max(scale, abs(S[i, i]))
    converged = False
    for it in range(max_iter):
        maxdiff = 0.0
        for j in range(p):
            m = 0
            for i in range(p):
                if i != j and adj[i, j]:
                    m += 1
            nb = np.empty(m, np.int64)
            k = 0
            for i in range(p):
                if i != j and adj[i, j]:
                    nb[k] = i
                    k += 1
            beta = np.zeros(m)
            if m > 0:
                A = np.empty((m, m))
                b = np.empty(m)
                for a in range(m):
                    b[a] = S[nb[a], j]
                    for c in range(m):
                        A[a, c] = W[nb[a], nb[c]]
                # Cholesky doubles as the singularity check
                L = np.zeros((m, m))
                for a in range(m):
                    acc = A[a, a]
                    for c in range(a):
                        acc -= L[a, c] * L[a, c]
                    if acc <= 1e-12 * scale:
                        return np.full((p, p), np.nan), False, False
                    L[a, a] = np.sqrt(acc)
                    for r in range(a + 1, m):
                        acc2 = A[r, a]
                        for c in range(a):
                            acc2 -= L[r, c] * L[a, c]
                        L[r, a] = acc2 / L[a, a]
                z = np.empty(m)
                for a in range(m):
                    acc = b[a]
                    for c in range(a):
                        acc -= L[a, c] * z[c]
                    z[a] = acc / L[a, a]
                for a in range(m - 1, -1, -1):
                    acc = z[a]
                    for c in range(a + 1, m):
                        acc -= L[c, a] * beta[c]
                    beta[a] = acc / L[a, a]
            for i in range(p):
                B[i, j] = 0.0
            for a in range(m):
                B[nb[a], j] = beta[a]
            for i in range(p):
                if i == j:
                    continue
                w = 0.0
                for a in range(m):
                    w += W[i, nb[a]] * beta[a]
                d = abs(w - W[i, j])
                if d > maxdiff:
                    maxdiff = d
                W[i, j] = w
                W[j, i] = w
        if maxdiff <= tol * scale:
            converged = True
            break
    return _precision_from(W, B), converged, True


@njit(cache=True, nogil=True)
def glasso_gap(S, T, lam):
    p = S.shape[0]
    gap = -float(p)
    for i in range(p):
        for j in range(p):
            gap += S[i, j] * T[i, j]
            if i != j:
                gap += lam * abs(T[i, j])
    return gap


@njit(cache=True, nogil=True)
def glasso_fit(S, lam, W, B, tol, max_iter):
    """Graphical lasso warm-started from ``W``, ``B`` (updated in place).

    Converged once a full sweep moves no entry of ``W`` by more than
    ``tol`` (relative to the largest variance) and the duality gap is at
    most ``tol * p``. Returns ``(Theta, gap, converged)``.
    """
    p = S.shape[0]
    T = np.zeros((p, p))
    gap = np.inf
    converged = False
    scale = 0.0
    for i in range(p):
        scale = max(scale, abs(S[i, i]))
    for it in range(max_iter):
        maxdiff = 0.0
        for j in range(p):
            idx = _others(p, j)
            W11 = np.empty((p - 1, p - 1))
            s12 = np.empty(p - 1)
            beta = np.empty(p - 1)
            for a in range(p - 1):
                s12[a] = S[idx[a], j]
                beta[a] = B[idx[a], j]
                for c in range(p - 1):
                    W11[a, c] = W[idx[a], idx[c]]
            cd_solve(W11, s12, lam, beta, 1e-12, 1e-10, 10000, False)
            w12 = W11 @ beta
            for a in range(p - 1):
                d = abs(w12[a] - W[idx[a], j])
                if d > maxdiff:
                    maxdiff = d
                W[idx[a], j] = w12[a]
                W[j, idx[a]] = w12[a]
                B[idx[a], j] = beta[a]
        T = _precision_from(W, B)
        gap = glasso_gap(S, T, lam)
        if maxdiff <= tol * scale and abs(gap) <= tol * p:
            converged = True
            break
    return T, gap, converged


@njit(cache=True, nogil=True)
def glasso_path(S, grid, tol, max_iter):
    p = S.shape[0]
    L = grid.shape[0]
    W = S * 0.95
    for i in range(p):
        W[i, i] = S[i, i]
    B = np.zeros((p, p))
    out = np.zeros((L, p, p))
    gaps = np.zeros(L)
    conv = np.zeros(L, np.bool_)
    for l in range(L):
        T, g, c = glasso_fit(S, grid[l], W, B, tol, max_iter)
        out[l] = T
        gaps[l] = g
        conv[l] = c
    return out, gaps, conv
