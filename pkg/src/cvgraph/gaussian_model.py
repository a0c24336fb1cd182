"""Ground-truth Gaussian models and the target-node partition.

All node indices are 0-based. For a target node ``t`` the remaining nodes,
in increasing order, are the *predictors*; coefficient vectors of length
``p - 1`` are indexed by predictor position, not by node label. Use
:attr:`CovarianceModel.predictors` to map positions back to nodes.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._rng import make_rng


class ModelError(ValueError):
    """Raised when a covariance matrix cannot define a model."""


def _check_spd(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ModelError("sigma must be a square matrix, got shape %r"
                         % (sigma.shape,))
    if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise ModelError("sigma is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ModelError("sigma is not positive definite") from exc
    return sigma


def _check_target(p, target):
    if not 0 <= int(target) < p:
        raise IndexError("target %r out of range for p=%d" % (target, p))
    return int(target)


def predictor_index(p, target):
    """Node labels of the predictors for ``target``, in position order."""
    return np.array([j for j in range(p) if j != target], dtype=np.intp)


def partition_target(sigma, target):
    """Split ``sigma`` into ``(gamma, v, a)`` with ``target`` moved last.

    ``gamma`` is the covariance of the predictors, ``v`` their covariance
    with the target and ``a`` the target variance.
    """
    sigma = _check_spd(sigma)
    target = _check_target(sigma.shape[0], target)
    idx = predictor_index(sigma.shape[0], target)
    gamma = sigma[np.ix_(idx, idx)].copy()
    v = sigma[idx, target].copy()
    a = float(sigma[target, target])
    return gamma, v, a


def condition_number(sigma):
    """Ratio of the largest to the smallest eigenvalue of ``sigma``."""
    w = np.linalg.eigvalsh(np.asarray(sigma, dtype=float))
    return float(w[-1] / w[0])


@dataclass(frozen=True)
class CovarianceModel:
    """Immutable N(0, sigma) model seen from one target node.

    Build with :meth:`from_sigma`; the derived fields are filled in there.
    """

    sigma: np.ndarray
    target: int
    gamma: np.ndarray
    v: np.ndarray
    a: float
    theta_star: np.ndarray
    true_neighborhood: frozenset
    kappa: float
    zero_tol: float = 1e-9
    _chol: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def from_sigma(cls, sigma, target=None, zero_tol=1e-9):
        sigma = _check_spd(sigma).copy()
        p = sigma.shape[0]
        if target is None:
            target = p - 1
        gamma, v, a = partition_target(sigma, target)
        theta_star, nbhd = _neighborhood(gamma, v, zero_tol)
        chol = np.linalg.cholesky(sigma)
        for arr in (sigma, gamma, v, theta_star, chol):
            arr.setflags(write=False)
        return cls(sigma=sigma, target=int(target), gamma=gamma, v=v, a=a,
                   theta_star=theta_star, true_neighborhood=nbhd,
                   kappa=condition_number(sigma), zero_tol=zero_tol,
                   _chol=chol)

    @classmethod
    def from_precision(cls, precision, target=None, zero_tol=1e-9):
        precision = _check_spd(precision)
        sigma = np.linalg.inv(precision)
        sigma = (sigma + sigma.T) / 2
        return cls.from_sigma(sigma, target=target, zero_tol=zero_tol)

    @property
    def p(self):
        return self.sigma.shape[0]

    @property
    def s(self):
        return len(self.true_neighborhood)

    @property
    def predictors(self):
        return predictor_index(self.p, self.target)

    @property
    def neighbor_nodes(self):
        """True neighborhood as node labels."""
        pred = self.predictors
        return frozenset(int(pred[i]) for i in self.true_neighborhood)

    @property
    def min_risk(self):
        """Population risk at ``theta_star``: a - v' Gamma^{-1} v."""
        return float(self.a - self.v @ self.theta_star)

    def retarget(self, target):
        return CovarianceModel.from_sigma(self.sigma, target, self.zero_tol)


def _neighborhood(gamma, v, zero_tol):
    c, low = scipy.linalg.cho_factor(gamma)
    theta = scipy.linalg.cho_solve((c, low), v)
    # one step of iterative refinement keeps structural zeros at ~1e-17
    theta = theta + scipy.linalg.cho_solve((c, low), v - gamma @ theta)
    nbhd = frozenset(int(i) for i in np.flatnonzero(np.abs(theta) > zero_tol))
    return theta, nbhd


def true_neighborhood(model, zero_tol=None):
    """Return ``(theta_star, N*)`` for ``model``.

    ``N*`` holds predictor positions ``i`` with ``|theta_star_i| > zero_tol``.
    """
    if zero_tol is None:
        zero_tol = model.zero_tol
    theta = np.array(model.theta_star)
    return theta, frozenset(int(i) for i in np.flatnonzero(np.abs(theta) > zero_tol))


def population_risk(theta, model):
    """E (Y_target - sum_j theta_j Y_j)^2 under the model, in closed form."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != model.v.shape:
        raise ValueError("theta has shape %r, expected %r"
                         % (theta.shape, model.v.shape))
    return float(theta @ model.gamma @ theta - 2.0 * theta @ model.v + model.a)


def excess_risk(theta, model):
    """(theta - theta*)' Gamma (theta - theta*); the risk above its minimum."""
    d = np.asarray(theta, dtype=float) - model.theta_star
    return float(d @ model.gamma @ d)


@dataclass(frozen=True)
class SampleMatrix:
    """An ``n x p`` matrix of i.i.d. rows plus the seed that produced it."""

    data: np.ndarray
    seed: int

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def sample(model, n, seed, *keys):
    """Draw ``n`` rows from N(0, sigma) by Cholesky transformation.

    Extra ``keys`` select an independent stream for the same seed, e.g.
    ``sample(model, n, seed, rep)``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    sigma = model.sigma if isinstance(model, CovarianceModel) else _check_spd(model)
    chol = getattr(model, "_chol", None)
    if chol is None:
        chol = np.linalg.cholesky(sigma)
    rng = make_rng(seed, "sample", *keys)
    z = rng.standard_normal((n, sigma.shape[0]))
    data = z @ chol.T
    data.setflags(write=False)
    return SampleMatrix(data=data, seed=int(seed))


def as_array(X):
    """Data matrix of a :class:`SampleMatrix` or anything array-like."""
    if isinstance(X, SampleMatrix):
        return X.data
    return np.asarray(X, dtype=float)


# --- model constructors used throughout the tests and experiments ---

def single_edge_model(p, rho=0.5, target=None):
    """Unit-variance model whose only dependence is target -- node 0.

    ``theta_star = (rho, 0, ..., 0)`` and the condition number is
    ``(1 + rho) / (1 - rho)``.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if target is None:
        target = p - 1
    sigma = np.eye(p)
    other = 0 if target != 0 else 1
    sigma[other, target] = sigma[target, other] = rho
    return CovarianceModel.from_sigma(sigma, target)


def neighborhood_model(p, s, weight=0.35, seed=0, target=None):
    """Target connected to ``s`` random nodes through the precision matrix.

    Edge signs are random; the precision matrix is diagonally dominant so
    the model is always valid.
    """
    if not 0 <= s < p:
        raise ValueError("need 0 <= s < p")
    if target is None:
        target = p - 1
    rng = make_rng(seed, "neighborhood_model", p, s)
    others = predictor_index(p, target)
    nbrs = rng.choice(others, size=s, replace=False) if s else np.array([], int)
    prec = np.eye(p)
    signs = rng.choice([-1.0, 1.0], size=s)
    for j, sg in zip(nbrs, signs):
        prec[j, target] = prec[target, j] = sg * weight
    prec[target, target] = 1.0 + s * weight
    return CovarianceModel.from_precision(prec, target)
