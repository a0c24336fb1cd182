"""Benchmark graph families and matching precision matrices.

Families: ``band`` (chain and its powers), ``er`` (uniform edges),
``sf`` (preferential attachment), ``knn`` (symmetrized nearest
neighbours) and ``empty``. Adjacency matrices are symmetric boolean
arrays with a zero diagonal.
"""

from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng

FAMILIES = ("band", "er", "sf", "knn", "empty")


def _empty(p):
    if p < 1:
        raise ValueError("p must be >= 1")
    return np.zeros((p, p), dtype=bool)


def _add(adj, i, j):
    adj[i, j] = adj[j, i] = True


def band_graph(p, width=1):
    """Edges ``{i, i + d}`` for ``1 <= d <= width``."""
    if p < 2:
        raise ValueError("p must be >= 2")
    if width < 1:
        raise ValueError("width must be >= 1")
    adj = _empty(p)
    for d in range(1, min(width, p - 1) + 1):
        idx = np.arange(p - d)
        adj[idx, idx + d] = adj[idx + d, idx] = True
    return adj


def er_graph(p, edge_count, seed=0):
    """Exactly ``edge_count`` edges drawn uniformly without replacement."""
    total = p * (p - 1) // 2
    if not 0 <= edge_count <= total:
        raise ValueError("edge_count must lie in [0, %d]" % total)
    adj = _empty(p)
    iu, ju = np.triu_indices(p, 1)
    pick = make_rng(seed, "er", p, edge_count).choice(total, size=edge_count,
                                                     replace=False)
    adj[iu[pick], ju[pick]] = adj[ju[pick], iu[pick]] = True
    return adj


def sf_graph(p, m=1, seed=0):
    """Barabasi-Albert graph grown from two connected nodes.

    Each new node links to ``min(m, #existing)`` distinct existing nodes
    chosen with probability proportional to their degree.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = make_rng(seed, "sf", p, m)
    adj = _empty(p)
    _add(adj, 0, 1)
    deg = np.zeros(p)
    deg[:2] = 1
    for new in range(2, p):
        k = min(m, new)
        targets = rng.choice(new, size=k, replace=False, p=deg[:new] / deg[:new].sum())
        for t in targets:
            _add(adj, new, int(t))
        deg[targets] += 1
        deg[new] = k
    return adj


def knn_graph(p, k, seed=0):
    """Symmetrized k-nearest-neighbour graph.

    The points are the rows of a ``p x p`` matrix of uniform(0, 1) draws;
    ``i -- j`` is an edge if either is among the other's ``k`` nearest
    neighbours in Euclidean distance.
    """
    if not 1 <= k < p:
        raise ValueError("need 1 <= k < p")
    pts = make_rng(seed, "knn", p, k).uniform(size=(p, p))
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    adj = _empty(p)
    rows = np.repeat(np.arange(p), k)
    adj[rows, nn.ravel()] = True
    return adj | adj.T


def edge_count(adjacency):
    return int(np.triu(adjacency, 1).sum())


def precision_from_graph(adjacency, off_diag_value=0.3, diag_boost=0.1, signed=False,
                         seed=0):
    """Diagonally dominant precision matrix supported on ``adjacency``.

    ``K = w A + diag(w deg + diag_boost + 1)`` is rescaled as ``D K D`` so
    that its inverse has unit diagonal. With ``signed=True`` each edge
    weight gets a random sign; diagonal dominance still holds, but the
    matrix is checked and redrawn (up to 100 times) regardless.
    """
    A = np.asarray(adjacency, dtype=bool)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if not (A == A.T).all() or A.diagonal().any():
        raise ValueError("adjacency must be symmetric with a zero diagonal")
    p = A.shape[0]
    w = float(off_diag_value)
    deg = A.sum(axis=1)
    rng = make_rng(seed, "signs", p) if signed else None
    for _ in range(100):
        W = A * w
        if signed:
            s = np.triu(rng.choice([-1.0, 1.0], size=(p, p)), 1)
            W = W * (s + s.T)
        K = W + np.diag(deg * abs(w) + diag_boost + 1.0)
        try:
            np.linalg.cholesky(K)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise RuntimeError("could not draw a positive definite signed precision")
    sigma = np.linalg.inv(K)
    d = np.sqrt(np.diag(sigma))
    K = K * np.outer(d, d)
    K = (K + K.T) / 2
    return K


@dataclass(frozen=True)
class GraphInstance:
    adjacency: np.ndarray
    family: str
    params: dict
    precision: np.ndarray
    covariance: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.adjacency.shape[0]

    @property
    def n_edges(self):
        return edge_count(self.adjacency)


def family_adjacency(family, p, seed=0, **params):
    """Adjacency of a named family with its default parameters.

    Defaults: band width 1, ER with ``p - 1`` edges, SF with ``m = 1``,
    KNN with ``k = 1``.
    """
    if family == "band":
        return band_graph(p, params.get("width", 1))
    if family == "er":
        return er_graph(p, params.get("edge_count", p - 1), seed)
    if family == "sf":
        return sf_graph(p, params.get("m", 1), seed)
    if family == "knn":
        return knn_graph(p, params.get("k", 1), seed)
    if family == "empty":
        return _empty(p)
    raise ValueError("unknown graph family %r (choose from %s)"
                     % (family, ", ".join(FAMILIES)))


def make_instance(family, p, seed=0, off_diag_value=0.3, diag_boost=0.1, signed=False,
                  **params):
    """Graph plus precision and covariance for one family."""
    adj = family_adjacency(family, p, seed, **params)
    K = precision_from_graph(adj, off_diag_value, diag_boost, signed, seed)
    sigma = np.linalg.inv(K)
    sigma = (sigma + sigma.T) / 2
    for arr in (adj, K, sigma):
        arr.setflags(write=False)
    return GraphInstance(adj, family, dict(params), K, sigma, int(seed))


# --- text formats ---

def write_edge_list(path, instance):
    """``p <p> family <name> seed <seed>`` then one ``i j weight`` line per edge."""
    K = instance.precision
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p %d family %s seed %d\n" % (instance.p, instance.family, instance.seed))
        for i, j in zip(*np.nonzero(np.triu(instance.adjacency, 1))):
            fh.write("%d %d %.17g\n" % (i, j, K[i, j]))


def read_edge_list(path):
    """Return ``(adjacency, weights, header)`` from :func:`write_edge_list` output."""
    with open(path, encoding="utf-8") as fh:
        tokens = fh.readline().split()
        if len(tokens) != 6 or tokens[0::2] != ["p", "family", "seed"]:
            raise ValueError("bad edge-list header: %r" % " ".join(tokens))
        header = {"p": int(tokens[1]), "family": tokens[3], "seed": int(tokens[5])}
        p = header["p"]
        adj = _empty(p)
        weights = np.zeros((p, p))
        for line in fh:
            if not line.strip():
                continue
            i, j, w = line.split()
            i, j = int(i), int(j)
            _add(adj, i, j)
            weights[i, j] = weights[j, i] = float(w)
    return adj, weights, header


def write_matrix(path, matrix):
    np.savetxt(path, np.asarray(matrix), fmt="%.17g")


def read_matrix(path):
    return np.atleast_2d(np.loadtxt(path))
