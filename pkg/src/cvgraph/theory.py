"""Numerical checks of the geometry around the risk-minimizing Lasso fit.

For one target node, let ``theta_hat`` be the Lasso solution at the
penalty ``lam_star`` minimizing the population risk. The checks here are:

* the exclusion ellipsoid ``{theta : (theta - theta*)' Gamma (theta - theta*)
  < (theta_hat - theta*)' Gamma (theta_hat - theta*)}`` contains no Lasso
  solution for any penalty;
* the equicorrelation set ``{i : |G_i(theta_hat)| = lam_star}`` has at most
  one index beyond the active set;
* perturbations of ``theta_hat`` along the line direction (no extra index)
  or along two rays (one extra index) are again Lasso solutions;
* when there is no extra index, the line direction is tangent to the
  ellipsoid: ``theta'^T Gamma (theta_hat - theta*) = 0``.

The risk-minimizing penalty is located exactly by following the piecewise
linear solution path between knots, so ``lam_star`` is not limited by the
grid resolution.
"""

import csv
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from . import _cd
from ._meta import write_meta
from ._rng import derive_seed, make_rng
from .gaussian_model import (CovarianceModel, population_risk, sample,
                             single_edge_model, neighborhood_model)
from .lasso import (KKT_TOL, MAX_ITER, TOL_CHANGE, gram_problem, kkt_violations,
                    log_grid)

EQUI_RTOL = 1e-6
DELTA_SCALE = 1e-4
DELTA_FLOOR = 1e-10
ZERO_SNAP = 1e-12
FULL_BRACKET_FLOOR = 1e-4
Q_ZERO_TOL = 1e-12

_log = logging.getLogger(__name__)


# --- ellipsoid ---

def ellipsoid_value(theta, model, theta_hat_star):
    """``(theta - theta*)' Gamma (theta - theta*)`` minus the same at ``theta_hat_star``.

    Negative values are strictly inside the exclusion ellipsoid.
    """
    theta = np.asarray(theta, dtype=float)
    th = np.asarray(theta_hat_star, dtype=float)
    if theta.shape != model.theta_star.shape or th.shape != model.theta_star.shape:
        raise ValueError("vectors must have length %d" % model.theta_star.size)
    d = theta - model.theta_star
    d0 = th - model.theta_star
    return float(d @ model.gamma @ d - d0 @ model.gamma @ d0)


def implied_penalty(prob, theta, rtol=1e-9):
    """Penalty at which ``theta`` could solve the Lasso, or None.

    Every active coordinate pins ``lam = sign(theta_i) G_i``; the values
    must agree and be positive. For ``theta = 0`` the smallest admissible
    penalty ``max |G_i|`` is returned.
    """
    theta = np.asarray(theta, dtype=float)
    g = prob.gradient(theta)
    act = np.flatnonzero(theta)
    if act.size == 0:
        lam = float(np.abs(g).max(initial=0.0))
        return lam if lam > 0 else None
    lams = np.sign(theta[act]) * g[act]
    lam = float(lams.mean())
    if lam <= 0 or np.ptp(lams) > rtol * lam:
        return None
    return lam


def is_lasso_solution(prob, theta, tol=KKT_TOL):
    lam = implied_penalty(prob, theta)
    if lam is None:
        return False
    return kkt_violations(prob, theta, lam).max_violation <= tol


@dataclass(frozen=True)
class EllipsoidReport:
    n_probes: int
    counterexamples: int
    min_path_value: float
    path_violations: int
    threshold: float

    @property
    def passed(self):
        return self.counterexamples == 0 and self.path_violations == 0


def _interior_probes(model, theta_hat_star, trials, rng, max_attempts=None):
    """``trials`` points strictly inside the ellipsoid.

    Even draws are uniform in the ellipsoid; odd draws put a random subset
    of coordinates at zero (sparse points are the ones a Lasso could hit).
    Sparse draws whose coordinate subspace misses the ellipsoid are
    redrawn, up to ``max_attempts`` (default ``20 * trials``) in total.
    """
    gamma, center = model.gamma, model.theta_star
    d = center.size
    d0 = np.asarray(theta_hat_star) - center
    r2 = float(d0 @ gamma @ d0)
    probes = []
    if r2 <= 0:
        return probes
    L = np.linalg.cholesky(gamma)
    max_attempts = 20 * trials if max_attempts is None else max_attempts
    attempts = 0
    while len(probes) < trials and attempts < max_attempts:
        attempts += 1
        if len(probes) % 2 == 0:
            # uniform in the Gamma-ball via w = L' (theta - theta*)
            w = rng.standard_normal(d)
            w *= np.sqrt(r2) * rng.uniform() ** (1.0 / d) / np.linalg.norm(w) * (1 - 1e-9)
            probes.append(center + np.linalg.solve(L.T, w))
            continue
        k = rng.integers(0, d + 1)
        S = np.sort(rng.choice(d, size=k, replace=False))
        theta = np.zeros(d)
        if k == 0:
            if center @ gamma @ center < r2:
                probes.append(theta)
            continue
        G_SS = gamma[np.ix_(S, S)]
        # minimizer of the Gamma-distance to theta* on the coordinate subspace
        c_S = np.linalg.solve(G_SS, (gamma @ center)[S])
        base = np.zeros(d)
        base[S] = c_S
        m = float((base - center) @ gamma @ (base - center))
        # a tangent subspace touches the ellipsoid only at its boundary
        if m >= r2 * (1 - 1e-8):
            continue
        w = rng.standard_normal(k)
        w *= np.sqrt(r2 - m) * rng.uniform() ** (1.0 / k) / np.linalg.norm(w) * (1 - 1e-9)
        theta[S] = c_S + np.linalg.solve(np.linalg.cholesky(G_SS).T, w)
        probes.append(theta)
    return probes


def verify_ellipsoid_exclusion(model, X, theta_hat_star, trials=1000, seed=0, grid=None,
                               threshold=-1e-8):
    """Look for Lasso solutions strictly inside the exclusion ellipsoid.

    Random interior probes (plus ``theta*`` and the origin) whose
    :func:`ellipsoid_value` is below ``threshold`` are tested with
    :func:`is_lasso_solution`. The solution path on
    ``grid`` (default: 200 log-spaced values down to ``1e-3 lambda_max``)
    is swept and every point with :func:`ellipsoid_value` below
    ``threshold`` counts as a violation.
    """
    prob = gram_problem(X, model.target)
    rng = make_rng(seed, "ellipsoid")
    probes = _interior_probes(model, theta_hat_star, trials, rng)
    probes += [np.array(model.theta_star), np.zeros_like(model.theta_star)]
    probes = [t for t in probes if ellipsoid_value(t, model, theta_hat_star) < threshold]
    bad = sum(is_lasso_solution(prob, t) for t in probes)
    lmax = float(np.abs(prob.corr).max(initial=0.0))
    if grid is None:
        grid = log_grid(lmax, 200, 1e-3)
    thetas, _, _, _ = _cd.cd_path(prob.gram, prob.corr, np.asarray(grid, dtype=float),
                                  TOL_CHANGE, KKT_TOL, MAX_ITER)
    vals = np.array([ellipsoid_value(t, model, theta_hat_star) for t in thetas])
    return EllipsoidReport(n_probes=len(probes), counterexamples=int(bad),
                           min_path_value=float(vals.min()),
                           path_violations=int((vals < threshold).sum()),
                           threshold=threshold)


# --- exact risk minimization along the path ---

@dataclass(frozen=True)
class OraclePenalty:
    """Risk-minimizing penalty and the Lasso solution there.

    ``at_knot`` is True when the minimum sits exactly at a breakpoint of
    the solution path. ``flagged`` marks a minimum on the bracket boundary
    (the bracket probably did not contain the global minimizer).
    """

    lam: float
    theta_hat: np.ndarray
    risk: float
    at_knot: bool
    grid_lambda: float
    grid_risk: float
    grid_theta: np.ndarray
    bracket: tuple
    flagged: bool = False


def _segment(prob, lam, active, signs):
    """Linear piece ``theta(l) = U - l W`` and the next breakpoint below ``lam``."""
    d = prob.dim
    U = np.zeros(d)
    W = np.zeros(d)
    A = np.array(sorted(active), dtype=int)
    if A.size:
        GA = prob.gram[np.ix_(A, A)]
        q = np.array([signs[i] for i in A], dtype=float)
        U[A] = np.linalg.solve(GA, prob.corr[A])
        W[A] = np.linalg.solve(GA, q)
    # gradient on every coordinate: g(l) = alpha + l beta
    alpha = prob.corr - prob.gram @ U
    beta = prob.gram @ W
    limit = lam * (1 - 1e-10)
    best = (-np.inf, None, None)
    for i in range(d):
        if i in active:
            if W[i] != 0:
                l0 = U[i] / W[i]
                if 0 < l0 < limit and l0 > best[0]:
                    best = (l0, "leave", i)
        else:
            for s in (1.0, -1.0):
                den = s - beta[i]
                if den != 0:
                    l0 = alpha[i] / den
                    if 0 < l0 < limit and l0 > best[0]:
                        best = (l0, "enter", (i, s))
    return U, W, best


def _risk_on_segment(model, U, W, lo, hi):
    """Minimizer of the (quadratic) population risk of ``U - l W`` on ``[lo, hi]``."""
    G, v = model.gamma, model.v
    curv = W @ G @ W
    if curv > 0:
        l_opt = float(np.clip((W @ G @ U - W @ v) / curv, lo, hi))
    else:
        l_opt = hi
    th = U - l_opt * W
    return l_opt, population_risk(th, model)


def _exact_theta(prob, lam, theta):
    """Re-solve the KKT equalities on the support of ``theta`` at ``lam``."""
    theta = np.where(np.abs(theta) <= ZERO_SNAP * max(1.0, np.abs(theta).max(initial=0)),
                     0.0, theta)
    A = np.flatnonzero(theta)
    out = np.zeros_like(theta)
    if A.size:
        out[A] = np.linalg.solve(prob.gram[np.ix_(A, A)],
                                 prob.corr[A] - lam * np.sign(theta[A]))
    return out


def oracle_penalty_continuous(model, X, bracket=None, grid_size=100,
                              lambda_min_ratio=1e-3, grid=None):
    """Risk-minimizing penalty to machine precision.

    The grid minimizer is found first; the search then runs over
    ``bracket`` (default: the two neighbouring grid values). Inside the
    bracket the solution path is followed knot to knot, and on each linear
    piece the quadratic risk is minimized in closed form, so the result is
    the exact minimizer over the bracket. ``bracket="full"`` searches
    ``[1e-4 lambda_max, lambda_max]``.

    Raises
    ------
    ValueError
        If the bracket is empty or negative.
    """
    prob = gram_problem(X, model.target)
    lmax = float(np.abs(prob.corr).max(initial=0.0))
    if grid is None:
        grid = log_grid(lmax, grid_size, lambda_min_ratio)
    grid = np.asarray(grid, dtype=float)
    thetas, _, _, _ = _cd.cd_path(prob.gram, prob.corr, grid, TOL_CHANGE, KKT_TOL,
                                  MAX_ITER)
    risks = np.array([population_risk(t, model) for t in thetas])
    k = int(np.flatnonzero(risks == risks.min())[0])
    if bracket is None:
        bracket = (grid[min(k + 1, grid.size - 1)], grid[max(k - 1, 0)])
    elif isinstance(bracket, str):
        if bracket != "full":
            raise ValueError("bracket must be a pair or 'full'")
        bracket = (FULL_BRACKET_FLOOR * lmax, lmax)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 <= lo < hi):
        raise ValueError("invalid bracket (%g, %g)" % (lo, hi))
    hi = min(hi, lmax) if lmax > 0 else hi

    # starting state at the top of the bracket
    if hi >= lmax:
        j = int(np.argmax(np.abs(prob.corr)))
        active = {j}
        signs = {j: float(np.sign(prob.corr[j]))}
        start = np.zeros(prob.dim)
    else:
        start = np.zeros(prob.dim)
        _cd.cd_solve(prob.gram, prob.corr, hi, start, TOL_CHANGE, KKT_TOL, MAX_ITER, False)
        start = _exact_theta(prob, hi, start)
        active = set(int(i) for i in np.flatnonzero(start))
        signs = {i: float(np.sign(start[i])) for i in active}

    best_risk = population_risk(start, model)
    best = (hi, start, False)
    cur = hi
    while cur > lo:
        U, W, (nxt, kind, what) = _segment(prob, cur, active, signs)
        seg_lo = max(nxt, lo)
        l_opt, r = _risk_on_segment(model, U, W, seg_lo, cur)
        if r < best_risk - 1e-15 * abs(best_risk):
            knot = (l_opt == nxt and nxt >= lo) or (l_opt == cur and cur < hi)
            best_risk, best = r, (l_opt, U - l_opt * W, knot)
        if nxt <= lo or kind is None:
            break
        cur = nxt
        if kind == "leave":
            active.discard(what)
            signs.pop(what)
        else:
            i, s = what
            active.add(i)
            signs[i] = s

    lam, theta, knot = best
    theta = _exact_theta(prob, lam, theta)
    flagged = (not knot) and (lam in (lo, hi)) and not (lam == hi and hi >= lmax)
    if kkt_violations(prob, theta, lam).max_violation > KKT_TOL:
        # path bookkeeping went wrong; keep the grid answer
        lam, theta, knot, flagged = float(grid[k]), thetas[k], False, True
    return OraclePenalty(lam=float(lam), theta_hat=theta,
                         risk=population_risk(theta, model), at_knot=bool(knot),
                         grid_lambda=float(grid[k]), grid_risk=float(risks[k]),
                         grid_theta=thetas[k], bracket=(lo, hi), flagged=bool(flagged))


# --- equicorrelation set, line and rays ---

def equicorrelation_set(X, target, theta_hat_star, lambda_star, tol=None):
    """``{i : | |G_i(theta_hat_star)| - lambda_star | <= tol}``, default tol 1e-6 lambda_star."""
    if tol is None:
        tol = EQUI_RTOL * lambda_star
    g = gram_problem(X, target).gradient(np.asarray(theta_hat_star, dtype=float))
    return frozenset(int(i) for i in np.flatnonzero(np.abs(np.abs(g) - lambda_star) <= tol))


def _line(prob, theta_hat):
    A = np.flatnonzero(theta_hat)
    out = np.zeros(prob.dim)
    if A.size:
        out[A] = -np.linalg.solve(prob.gram[np.ix_(A, A)], np.sign(theta_hat[A]))
    return out


def line_direction(X, target, theta_hat_star):
    """``theta'``: zero off the active set, ``-Gamma_hat_A^{-1} sign(theta_hat_A)`` on it.

    ``theta_hat + delta theta'`` is the Lasso solution at ``lambda + delta``
    as long as no coordinate enters or leaves.
    """
    theta = np.asarray(theta_hat_star, dtype=float)
    if not theta.any():
        raise ValueError("active set is empty")
    return _line(gram_problem(X, target), theta)


@dataclass(frozen=True)
class Rays:
    """Two rays of Lasso solutions leaving ``theta_hat`` when one index is extra.

    Points ``theta_hat + t * r1_sign * theta_prime`` solve the Lasso at
    ``lambda* + t * sign(Q)``; points ``theta_hat + t * r2_sign * theta_dprime``
    solve it at ``lambda* - t * sign(Q)``; both for small ``t >= 0``.
    """

    theta_prime: np.ndarray
    theta_dprime: np.ndarray
    Q: float
    r1_sign: float
    r2_sign: float
    extra: int
    q_extra: float


def _rays(prob, theta_hat, equi):
    active = set(int(i) for i in np.flatnonzero(theta_hat))
    extra = sorted(set(equi) - active)
    if len(extra) != 1:
        raise ValueError("need exactly one extra equicorrelation index, got %d" % len(extra))
    j = extra[0]
    g = prob.gradient(theta_hat)
    q_j = float(np.sign(g[j]))
    tp = _line(prob, theta_hat)
    Q = 1.0 - q_j * float(tp @ prob.gram[:, j])
    if abs(Q) < Q_ZERO_TOL:
        _log.warning("Q = %.3g is numerically zero; taking sign(Q) = +1", Q)
    sQ = 1.0 if Q >= 0 else -1.0
    B = np.array(sorted(active | {j}), dtype=int)
    q = np.where(B == j, q_j, np.sign(theta_hat[B]))
    tdp = np.zeros(prob.dim)
    tdp[B] = -np.linalg.solve(prob.gram[np.ix_(B, B)], q)
    return Rays(tp, tdp, Q, sQ, -sQ, j, q_j)


def ray_directions(X, target, theta_hat_star, equi_set):
    """Ray directions at ``theta_hat_star`` with one extra equicorrelation index.

    ``sign(Q)`` is taken as +1 when ``Q == 0``.
    """
    return _rays(gram_problem(X, target), np.asarray(theta_hat_star, dtype=float), equi_set)


def tangency_residual(model, X, theta_hat_star, normalized=False):
    """``theta'^T Gamma (theta_hat - theta*)``, optionally divided by both norms."""
    prob = gram_problem(X, model.target)
    theta = np.asarray(theta_hat_star, dtype=float)
    val, val_norm = _tangency(model, _line(prob, theta), theta)
    return val_norm if normalized else val


def _tangency(model, tp, theta):
    r = model.gamma @ (theta - model.theta_star)
    val = float(tp @ r)
    nr = np.linalg.norm(r)
    # theta_hat == theta* up to rounding: the residual is exactly zero
    if nr <= 1e-12 * (1.0 + np.linalg.norm(model.v)) or not tp.any():
        return val, 0.0
    return val, val / (np.linalg.norm(tp) * nr)


def _perturb_passes(prob, theta_hat, direction, lam_star, lam_rate, check=None):
    """KKT check of ``theta_hat + t direction`` at ``lam_star + t lam_rate``.

    ``t`` starts at ``1e-4 lam_star`` and is halved down to ``1e-10 lam_star``.
    """
    t = DELTA_SCALE * lam_star
    while t >= DELTA_FLOOR * lam_star:
        th = theta_hat + t * direction
        lam = lam_star + t * lam_rate
        if lam > 0 and kkt_violations(prob, th, lam).max_violation <= KKT_TOL:
            if check is None or check(th):
                return True
        t /= 2
    return False


@dataclass(frozen=True)
class TheoryEvent:
    rep: int
    seed: int
    n: int
    p: int
    s: int
    kappa: float
    lambda_star: float
    theta_hat: np.ndarray
    active_set: frozenset
    equicorrelation_set: frozenset
    exact_recovery: bool
    case: str
    extra_count: int
    tangency_residual: float
    tangency_normalized: float
    q_value: float = None
    line_kkt_pass: bool = None
    ray1_kkt_pass: bool = None
    ray2_kkt_pass: bool = None
    at_knot: bool = False
    flagged: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def extra_element(self):
        return self.extra_count == 1


def analyze_instance(model, X, rep=0, seed=0, bracket="full"):
    """Locate the risk-minimizing fit for one sample and run every check.

    ``case`` is ``"I"`` (no extra equicorrelation index), ``"II"`` (exactly
    one), ``"excluded"`` (two or more) or ``"boundary"`` (the risk keeps
    decreasing down to the bottom of the bracket, i.e. the unpenalized fit
    wins). The last two are logged but not analysed further.

    ``bracket="full"`` searches ``[1e-4 lambda_max, lambda_max]``.
    """
    prob = gram_problem(X, model.target)
    orc = oracle_penalty_continuous(model, X, bracket=bracket)
    lam, theta = orc.lam, orc.theta_hat
    active = frozenset(int(i) for i in np.flatnonzero(theta))
    g = prob.gradient(theta)
    equi = frozenset(int(i) for i in
                     np.flatnonzero(np.abs(np.abs(g) - lam) <= EQUI_RTOL * lam))
    extra = len(equi) - len(active)
    tp = _line(prob, theta)
    tan, tan_norm = _tangency(model, tp, theta)
    kw = dict(rep=rep, seed=seed, n=prob.n, p=model.p, s=model.s, kappa=model.kappa,
              lambda_star=lam, theta_hat=theta, active_set=active,
              equicorrelation_set=equi,
              exact_recovery=active == model.true_neighborhood,
              extra_count=extra, tangency_residual=tan,
              tangency_normalized=tan_norm,
              at_knot=orc.at_knot, flagged=orc.flagged)
    if orc.flagged:
        return TheoryEvent(case="boundary", **kw)
    if extra == 0:
        ok = (_perturb_passes(prob, theta, tp, lam, 1.0)
              and _perturb_passes(prob, theta, -tp, lam, -1.0))
        return TheoryEvent(case="I", line_kkt_pass=ok, **kw)
    if extra > 1:
        return TheoryEvent(case="excluded", **kw)
    rays = _rays(prob, theta, equi)
    sQ = rays.r1_sign
    ok1 = _perturb_passes(prob, theta, sQ * rays.theta_prime, lam, sQ)
    j, qj = rays.extra, rays.q_extra
    ok2 = _perturb_passes(prob, theta, -sQ * rays.theta_dprime, lam, -sQ,
                          check=lambda th: np.sign(th[j]) == qj)
    return TheoryEvent(case="II", q_value=rays.Q, ray1_kkt_pass=ok1, ray2_kkt_pass=ok2,
                       **kw)


# --- Monte Carlo ---

@dataclass(frozen=True)
class RecoveryEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    successes: int
    reps: int


def wilson_interval(successes, reps, confidence=0.95):
    ci = scipy.stats.binomtest(int(successes), int(reps)).proportion_ci(
        confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def rep_seed(base_seed, rep):
    return derive_seed(base_seed, "theory", rep)


def grid_oracle_support(model, X, grid_size=100, lambda_min_ratio=0.01):
    """Support of the Lasso fit at the risk-minimizing grid penalty."""
    prob = gram_problem(X, model.target)
    lmax = float(np.abs(prob.corr).max(initial=0.0))
    grid = log_grid(lmax, grid_size, lambda_min_ratio)
    thetas, _, _, _ = _cd.cd_path(prob.gram, prob.corr, grid, TOL_CHANGE, KKT_TOL,
                                  MAX_ITER)
    d = thetas - model.theta_star
    risks = np.einsum("li,ij,lj->l", d, model.gamma, d)
    k = int(np.flatnonzero(risks == risks.min())[0])
    return frozenset(int(i) for i in np.flatnonzero(thetas[k])), float(grid[k])


def oracle_recovery_probability(model, n, reps, grid_size=100, lambda_min_ratio=0.01,
                                base_seed=0):
    """Monte-Carlo probability that the grid oracle penalty recovers the support.

    Returns the fraction of repetitions with ``N_hat = N*`` and its 95%
    Wilson interval.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    hits = 0
    for rep in range(reps):
        X = sample(model, n, rep_seed(base_seed, rep))
        supp, _ = grid_oracle_support(model, X, grid_size, lambda_min_ratio)
        hits += supp == model.true_neighborhood
    lo, hi = wilson_interval(hits, reps)
    return RecoveryEstimate(hits / reps, lo, hi, hits, reps)


EVENT_COLUMNS = ("rep", "seed", "n", "p", "s", "kappa", "lambda_star", "exact_recovery",
                 "case", "extra_count", "tangency_residual", "q_sign", "line_kkt_pass",
                 "ray1_kkt_pass", "ray2_kkt_pass")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def event_row(ev):
    q_sign = None if ev.q_value is None else (1 if ev.q_value >= 0 else -1)
    vals = dict(rep=ev.rep, seed=ev.seed, n=ev.n, p=ev.p, s=ev.s, kappa=ev.kappa,
                lambda_star=ev.lambda_star, exact_recovery=ev.exact_recovery,
                case=ev.case, extra_count=ev.extra_count,
                tangency_residual=ev.tangency_residual, q_sign=q_sign,
                line_kkt_pass=ev.line_kkt_pass, ray1_kkt_pass=ev.ray1_kkt_pass,
                ray2_kkt_pass=ev.ray2_kkt_pass)
    return [_fmt(vals[c]) for c in EVENT_COLUMNS]


def run_theory(model, n, reps, base_seed=0, out=None, threads=1, wall_time=math.inf,
               meta=()):
    """Analyse ``reps`` independent samples; optionally write the event CSV.

    Repetitions are independent (seeded by ``(base_seed, rep)``) and the
    output is ordered by ``rep`` whatever the thread count. Repetitions not
    started before ``wall_time`` seconds have elapsed are skipped. With
    ``out`` set, a ``<out>.meta`` sidecar records ``meta`` lines, the run
    parameters and the number of completed repetitions.
    """
    deadline = time.monotonic() + wall_time

    def one(rep):
        if time.monotonic() > deadline:
            return None
        seed = rep_seed(base_seed, rep)
        return analyze_instance(model, sample(model, n, seed), rep=rep, seed=seed)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            events = list(ex.map(one, range(reps)))
    else:
        events = [one(rep) for rep in range(reps)]
    events = [ev for ev in events if ev is not None]
    if out is not None:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EVENT_COLUMNS)
            for ev in events:
                w.writerow(event_row(ev))
        write_meta(out, list(meta) + ["experiment=theory", "n=%d" % n, "reps=%d" % reps,
                                      "seed=%d" % base_seed, "wall_time=%s" % wall_time,
                                      "completed_reps=%d" % len(events)])
    return events


_SPEC = re.compile(r"^(\w+)(?::(.*))?$")


def parse_model_spec(spec):
    """Model from a string such as ``single_edge:p=10,rho=0.5``.

    Kinds: ``single_edge`` (p, rho), ``neighborhood`` (p, s, weight, seed),
    ``identity`` (p). The target is always the last node.
    """
    m = _SPEC.match(spec.strip())
    if not m:
        raise ValueError("bad model spec %r" % spec)
    kind, rest = m.group(1), m.group(2) or ""
    params = {}
    for part in filter(None, (x.strip() for x in rest.split(","))):
        if "=" not in part:
            raise ValueError("bad model parameter %r" % part)
        k, v = part.split("=", 1)
        params[k.strip()] = float(v) if "." in v or "e" in v.lower() else int(v)
    allowed = {"single_edge": {"p", "rho"}, "neighborhood": {"p", "s", "weight", "seed"},
               "identity": {"p"}}
    if kind not in allowed:
        raise ValueError("unknown model kind %r (choose from %s)"
                         % (kind, ", ".join(sorted(allowed))))
    unknown = set(params) - allowed[kind]
    if unknown:
        raise ValueError("unknown parameters for %s: %s" % (kind, ", ".join(sorted(unknown))))
    if kind == "single_edge":
        return single_edge_model(int(params.get("p", 10)), float(params.get("rho", 0.5)))
    if kind == "neighborhood":
        return neighborhood_model(int(params.get("p", 6)), int(params.get("s", 2)),
                                  float(params.get("weight", 0.35)),
                                  int(params.get("seed", 0)))
    return CovarianceModel.from_sigma(np.eye(int(params.get("p", 5))))
