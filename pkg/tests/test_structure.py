import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import multivariate_normal

from cvgraph.gaussian_model import sample
from cvgraph.graphs import band_graph, make_instance
from cvgraph.harness import ExperimentConfig, run_experiment, summarize
from cvgraph.lasso import ConvergenceWarning, solve
from cvgraph.selection import refit_mle
from cvgraph.structure import (cv_scores, dag_known_ordering, gaussian_loglik, glasso,
                               graph_lambda_max, graph_path, graph_with_criterion,
                               is_acyclic, ns_graph, pseudo_loglik, refit_precision,
                               second_moment, select_on_path, symmetrize)
from oracles import undirected_edges

CHAIN_K = np.array([[1.0, 0.4, 0.0], [0.4, 1.0, 0.4], [0.0, 0.4, 1.0]])


def band_sample(p, n, seed):
    inst = make_instance("band", p)
    return inst, sample(inst.covariance, n, seed)


# --- neighbourhood selection ---

def test_symmetrize_rules():
    coef = np.array([[0, 0.5, 0], [0, 0, 0.2], [0, 0.1, 0]])
    assert undirected_edges(symmetrize(coef, "OR")) == {(0, 1), (1, 2)}
    assert undirected_edges(symmetrize(coef, "AND")) == {(1, 2)}


@given(st.integers(0, 10**6), st.floats(0.02, 1.0))
def test_and_subset_of_or(seed, frac):
    inst, X = band_sample(6, 40, seed)
    lam = frac * graph_lambda_max(X)
    a = ns_graph(X, lam, "AND").adjacency
    o = ns_graph(X, lam, "OR").adjacency
    assert not (a & ~o).any()
    for adj in (a, o):
        assert (adj == adj.T).all() and not adj.diagonal().any()


def test_ns_matches_nodewise_lasso():
    inst, X = band_sample(5, 100, 1)
    lam = 0.2 * graph_lambda_max(X)
    est = ns_graph(X, lam)
    for j in range(5):
        pred = [i for i in range(5) if i != j]
        assert np.allclose(est.coef[pred, j], solve(X, j, lam).theta_hat, atol=1e-10)


def test_ns_empty_at_lambda_max():
    inst, X = band_sample(8, 100, 2)
    lmax = graph_lambda_max(X)
    assert ns_graph(X, lmax).n_edges == 0
    assert ns_graph(X, 0.999 * lmax).n_edges >= 1
    gp = graph_path(X, "NS")
    assert gp.edge_counts[0] == 0


def test_ns_rejects_bad_arguments():
    inst, X = band_sample(4, 20, 0)
    with pytest.raises(ValueError):
        ns_graph(X, 0.0)
    with pytest.raises(ValueError):
        ns_graph(X, 0.1, rule="XOR")


@pytest.mark.parametrize("rule", ["AND", "OR"])
def test_chain_recovered_by_ebic(rule):
    sigma = np.linalg.inv(CHAIN_K)
    truth = band_graph(3)
    hits = 0
    for rep in range(100):
        X = sample(sigma, 5000, rep)
        est, _ = graph_with_criterion(X, "NS", "ebic", rule=rule)
        hits += np.array_equal(est.adjacency, truth)
    assert hits >= 90


# --- graphical lasso ---

def test_glasso_large_penalty_is_diagonal():
    inst, X = band_sample(6, 200, 3)
    theta, est = glasso(X, 10 * graph_lambda_max(X))
    assert est.n_edges == 0
    assert np.allclose(theta, np.diag(np.diag(theta)))
    S, _ = second_moment(X)
    assert np.allclose(np.diag(theta), 1 / np.diag(S))


def test_glasso_small_penalty_inverts_covariance():
    inst, X = band_sample(5, 5000, 4)
    S, _ = second_moment(X)
    theta, est = glasso(X, 1e-8)
    assert est.converged
    assert np.abs(theta - np.linalg.inv(S)).max() < 1e-4
    assert np.linalg.eigvalsh(theta).min() > 0


def test_glasso_kkt():
    inst, X = band_sample(6, 300, 5)
    S, _ = second_moment(X)
    lam = 0.1
    theta, est = glasso(X, lam)
    W = np.linalg.inv(theta)
    G = W - S
    off = ~np.eye(6, dtype=bool)
    nz = off & (np.abs(theta) > 1e-8)
    assert np.allclose(np.diag(G), 0, atol=1e-5)
    assert np.allclose(G[nz], lam * np.sign(theta[nz]), atol=1e-5)
    assert np.all(np.abs(G[off & ~nz]) <= lam + 1e-5)


def test_glasso_reports_non_convergence():
    inst, X = band_sample(8, 50, 6)
    with pytest.warns(ConvergenceWarning):
        _, est = glasso(X, 0.01, max_iter=1)
    assert not est.converged


def test_glasso_cv_has_false_discoveries():
    inst = make_instance("band", 10)
    truth = undirected_edges(inst.adjacency)
    positive = 0
    for rep in range(30):
        X = sample(inst.covariance, 2000, rep)
        est, sel = graph_with_criterion(X, "Glasso", "cv", seed=rep)
        assert sel.metadata["score_type"] == "loglik"
        positive += bool(undirected_edges(est.adjacency) - truth)
    assert positive > 15


# --- DAG under a known ordering ---

def test_dag_independent_columns():
    X = sample(np.eye(2), 1000, 0)
    est = dag_known_ordering(X, [0, 1], 0.2)
    assert est.n_edges == 0


def test_dag_planted_edge():
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal(1000)
    X = np.column_stack([x0, x0 + 0.1 * rng.standard_normal(1000)])
    est = dag_known_ordering(X, [0, 1], 0.01)
    assert est.edges() == [(0, 1)]
    assert est.coef[0, 1] == pytest.approx(1.0, abs=0.05)


def test_dag_reversed_ordering_is_denser():
    # collider 0 -> 2 <- 1: the reversed ordering needs the extra edge 0 -- 1
    denser = 0
    for rep in range(50):
        rng = np.random.default_rng(rep)
        a, b = rng.standard_normal((2, 500))
        X = np.column_stack([a, b, a + b + 0.5 * rng.standard_normal(500)])
        fwd = dag_known_ordering(X, [0, 1, 2], 0.1)
        rev = dag_known_ordering(X, [2, 1, 0], 0.1)
        denser += rev.n_edges > fwd.n_edges
    assert denser >= 45


@given(st.integers(0, 10**6), st.floats(0.01, 0.5))
def test_dag_respects_ordering(seed, lam):
    X = sample(make_instance("er", 6, seed=seed % 20).covariance, 60, seed)
    order = np.random.default_rng(seed).permutation(6)
    est = dag_known_ordering(X, order, lam)
    pos = np.argsort(order)
    for i, j in est.edges():
        assert pos[i] < pos[j]
    assert is_acyclic(est.adjacency)


def test_dag_bad_ordering():
    with pytest.raises(ValueError):
        dag_known_ordering(np.zeros((5, 3)) + np.arange(3), [0, 0, 1], 0.1)


def test_is_acyclic():
    a = np.zeros((3, 3), dtype=bool)
    a[0, 1] = a[1, 2] = True
    assert is_acyclic(a)
    a[2, 0] = True
    assert not is_acyclic(a)


# --- refits and likelihoods ---

def test_gaussian_loglik_matches_scipy():
    inst, X = band_sample(4, 50, 7)
    S, n = second_moment(X)
    theta = inst.precision
    ref = multivariate_normal(np.zeros(4), np.linalg.inv(theta)).logpdf(X.data).sum()
    assert gaussian_loglik(S, n, theta) == pytest.approx(ref, rel=1e-10)


def test_refit_full_and_empty_support():
    inst, X = band_sample(5, 500, 8)
    S, _ = second_moment(X)
    full = ~np.eye(5, dtype=bool)
    theta, ok = refit_precision(S, full)
    assert ok and np.allclose(theta, np.linalg.inv(S), atol=1e-8)
    theta, ok = refit_precision(S, np.zeros((5, 5), dtype=bool))
    assert ok and np.allclose(theta, np.diag(1 / np.diag(S)))


@given(st.integers(0, 10**6))
def test_refit_moment_matching(seed):
    inst = make_instance("er", 6, seed=seed % 30)
    X = sample(inst.covariance, 80, seed)
    S, _ = second_moment(X)
    theta, ok = refit_precision(S, inst.adjacency)
    assert ok
    W = np.linalg.inv(theta)
    free = inst.adjacency | np.eye(6, dtype=bool)
    assert np.abs(W - S)[free].max() < 1e-5
    assert not theta[~free].any()


def test_pseudo_loglik_is_sum_of_nodewise_refits():
    inst, X = band_sample(5, 100, 9)
    S, n = second_moment(X)
    adj = inst.adjacency
    ref = 0.0
    for j in range(5):
        nb = [i for i in range(5) if adj[i, j]]
        support = frozenset(i if i < j else i - 1 for i in nb)
        ref += refit_mle(X, j, support).loglik
    assert pseudo_loglik(S, n, adj) == pytest.approx(ref, rel=1e-10)


# --- criteria on graph paths ---

def test_oracle_identity_gives_empty_graph():
    X = sample(np.eye(6), 200, 0)
    est, sel = graph_with_criterion(X, "NS", "oracle", sigma=np.eye(6))
    assert est.n_edges == 0 and sel.chosen_index == 0


def test_oracle_needs_sigma():
    inst, X = band_sample(4, 50, 0)
    with pytest.raises(ValueError):
        graph_with_criterion(X, "NS", "oracle")


def test_score_types_recorded():
    inst, X = band_sample(5, 100, 10)
    _, sel = graph_with_criterion(X, "NS", "cv")
    assert sel.metadata["score_type"] == "sq_error"
    _, sel = graph_with_criterion(X, "NS", "bic")
    assert sel.metadata["likelihood"] == "joint"
    _, sel = graph_with_criterion(X, "NS", "cv", cv_score="refit_loglik")
    assert sel.metadata["score_type"] == "refit_loglik"
    with pytest.raises(ValueError):
        cv_scores(X, "NS", sel.grid, score="loglik")
    with pytest.raises(ValueError):
        cv_scores(X, "Glasso", sel.grid, score="sq_error")


def test_cv_sq_error_matches_direct_computation():
    inst, X = band_sample(4, 40, 11)
    d = X.data
    gp = graph_path(X, "NS", grid_size=5)
    folds = [np.arange(0, 20), np.arange(20, 40)]
    scores, fold_scores, _ = cv_scores(X, "NS", gp.grid, folds=folds)
    for k, test in enumerate(folds):
        train = np.setdiff1d(np.arange(40), test)
        for l, lam in enumerate(gp.grid):
            coef = ns_graph(d[train], lam).coef
            r = d[test] - d[test] @ coef
            assert fold_scores[k, l] == pytest.approx((r ** 2).sum() / 20, rel=1e-8)
    assert np.allclose(scores, fold_scores.mean(axis=0))


def test_cv_inconsistency_signature():
    inst = make_instance("band", 10)
    exact = {"cv": [], "ebic": []}
    for n in (1000, 2000, 4000):
        hits = {"cv": 0, "ebic": 0}
        for rep in range(100):
            X = sample(inst.covariance, n, rep, n)
            gp = graph_path(X, "NS")
            for crit in hits:
                sel = select_on_path(gp, X, crit, seed=rep)
                hits[crit] += np.array_equal(gp.adjacency[sel.chosen_index], inst.adjacency)
        for crit in hits:
            exact[crit].append(hits[crit] / 100)
    assert max(exact["cv"]) <= 0.2
    assert exact["ebic"][-1] > exact["cv"][-1]


def test_band_cv_table_values():
    # band p=100, n=1000, NS with CV: reference averages FDR 0.0119, SHD 1.2
    cfg = ExperimentConfig(family=("band",), method=("NS",), criteria=("cv",),
                           n_list=(1000,), p_list=(100,), reps=5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        cell = summarize(run_experiment(cfg, output_path=False))["band", "NS", "cv", 100, 1000]
    assert 0 < cell["fdr_mean"] < 0.05
    assert 0 < cell["shd_mean"] <= 12
