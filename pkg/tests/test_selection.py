import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvgraph.gaussian_model import CovarianceModel, neighborhood_model, sample, single_edge_model
from cvgraph.lasso import lambda_max, solution_path
from cvgraph.selection import (EmptySelectionError, choose_index, cv_penalty, fold_indices,
                               information_criterion, oracle_penalty, refit_mle,
                               select_by_ic)
from oracles import mc_risk


def cv_and_oracle(m, n, rep, K=5):
    X = sample(m, n, rep, n)
    cv = cv_penalty(X, m.target, K=K, seed=rep)
    return X, cv, oracle_penalty(cv.metadata["path"], m)


# --- choose_index ---

def test_choose_index_ties_prefer_first():
    assert choose_index([3.0, 1.0, 1.0, 2.0]) == 1
    assert choose_index([np.nan, 2.0, np.inf, 2.0]) == 1
    with pytest.raises(EmptySelectionError):
        choose_index([np.nan, np.inf])


# --- oracle ---

def test_oracle_identity_picks_empty():
    m = CovarianceModel.from_sigma(np.eye(4))
    X = sample(m, 100, 0)
    res = oracle_penalty(solution_path(X, m.target), m)
    assert res.chosen_index == 0
    assert res.chosen_support == frozenset()
    assert res.scores[0] == pytest.approx(1.0)


def test_oracle_contains_true_neighborhood():
    m = single_edge_model(3)
    hits = 0
    for rep in range(100):
        X = sample(m, 200, rep)
        hits += m.true_neighborhood <= oracle_penalty(solution_path(X, m.target), m).chosen_support
    assert hits >= 95


def test_oracle_scores_match_monte_carlo():
    m = neighborhood_model(4, 2, seed=1)
    path = solution_path(sample(m, 100, 3), m.target, grid_size=10)
    res = oracle_penalty(path, m)
    for l in (0, 4, 9):
        mean, se = mc_risk(path.thetas[l], m.sigma, m.target, 10**6, seed=l)
        assert abs(res.scores[l] - mean) < 3 * se


@given(st.integers(0, 10**6))
def test_oracle_dominance(seed):
    m = neighborhood_model(5, 2, seed=seed % 50)
    res = oracle_penalty(solution_path(sample(m, 40, seed), m.target, grid_size=30), m)
    assert np.all(res.scores[res.chosen_index] <= res.scores)
    assert res.scores.shape == res.grid.shape


def test_oracle_dimension_mismatch():
    m = single_edge_model(4)
    path = solution_path(sample(m, 50, 0), m.target)
    with pytest.raises(ValueError):
        oracle_penalty(path, single_edge_model(5))


# --- cross-validation ---

def test_fold_indices_partition():
    folds = fold_indices(23, 5, seed=1)
    sizes = sorted(len(f) for f in folds)
    assert sizes == [4, 4, 5, 5, 5]
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(23))
    with pytest.raises(ValueError):
        fold_indices(3, 5)
    with pytest.raises(ValueError):
        fold_indices(10, 1)


def test_cv_too_few_rows():
    m = single_edge_model(3)
    with pytest.raises(ValueError):
        cv_penalty(sample(m, 4, 0), m.target, K=5)


def test_cv_leave_one_out():
    m = single_edge_model(3)
    res = cv_penalty(sample(m, 20, 0), m.target, K=20)
    assert res.metadata["K"] == 20
    assert res.grid[-1] <= res.chosen_lambda <= res.grid[0]
    assert np.all(np.isfinite(res.scores))


def test_cv_score_is_heldout_mean_square():
    m = neighborhood_model(4, 2, seed=0)
    X = sample(m, 30, 1)
    d = X.data
    folds = fold_indices(30, 3, seed=2)
    res = cv_penalty(X, m.target, folds=folds, grid_size=5)
    pred = [0, 1, 2]
    for k, test in enumerate(folds):
        train = np.setdiff1d(np.arange(30), test)
        fit = solution_path(d[train], m.target, grid=res.grid)
        for l in range(5):
            r = d[test, 3] - d[np.ix_(test, pred)] @ fit.thetas[l]
            assert res.metadata["fold_scores"][k, l] == pytest.approx(r @ r / len(test), rel=1e-8)


def test_cv_determinism():
    m = neighborhood_model(6, 2, seed=2)
    X = sample(m, 100, 5)
    a, b = cv_penalty(X, m.target, seed=9), cv_penalty(X, m.target, seed=9)
    assert a.chosen_lambda == b.chosen_lambda
    assert np.array_equal(a.scores, b.scores)


def test_cv_fold_exchangeability():
    m = neighborhood_model(5, 2, seed=3)
    X = sample(m, 60, 1)
    folds = fold_indices(60, 4, seed=11)
    perm = np.random.default_rng(0).permutation(60)
    inv = np.argsort(perm)
    a = cv_penalty(X, m.target, folds=folds)
    b = cv_penalty(X.data[perm], m.target, folds=[np.sort(inv[f]) for f in folds])
    fa = np.sort(a.metadata["fold_scores"], axis=0)
    fb = np.sort(b.metadata["fold_scores"], axis=0)
    assert np.allclose(fa, fb, rtol=1e-10, atol=1e-14)


def test_cv_lambda_close_to_oracle():
    # single instances scatter around the threshold; the median over 500 reps does not
    m = single_edge_model(10)
    rel = [abs(cv.chosen_lambda - o.chosen_lambda) / o.chosen_lambda
           for cv, o in (cv_and_oracle(m, 2000, rep)[1:] for rep in range(500))]
    assert np.median(rel) < 0.5


def test_cv_includes_false_discoveries():
    m = single_edge_model(10)
    over = sum(cv.chosen_support > m.true_neighborhood
               for _, cv, _ in (cv_and_oracle(m, 2000, rep) for rep in range(100)))
    assert over > 50


def test_cv_oracle_gap_shrinks_with_n():
    m = single_edge_model(5)
    med = []
    for n in (250, 500, 1000, 2000):
        gaps = [abs(cv.chosen_lambda - o.chosen_lambda)
                for _, cv, o in (cv_and_oracle(m, n, rep) for rep in range(50))]
        med.append(np.median(gaps))
    assert all(b <= a for a, b in zip(med, med[1:]))


# --- refit and information criteria ---

def test_refit_empty_support():
    m = single_edge_model(3)
    X = sample(m, 50, 0)
    fit = refit_mle(X, 2, frozenset())
    y = X.data[:, 2]
    assert fit.coef.size == 0
    assert fit.noise_variance == pytest.approx(y @ y / 50)
    assert fit.loglik == pytest.approx(-25 * (np.log(2 * np.pi * y @ y / 50) + 1))


def test_refit_full_support_matches_normal_equations():
    m = neighborhood_model(5, 3, seed=1)
    X = sample(m, 5000, 2)
    d = X.data
    fit = refit_mle(X, 4, frozenset(range(4)))
    coef = np.linalg.solve(d[:, :4].T @ d[:, :4], d[:, :4].T @ d[:, 4])
    assert np.allclose(fit.coef, coef, atol=1e-8)


def test_refit_noiseless_floor():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((30, 2))
    X = np.column_stack([Z, Z @ [1.0, -2.0]])
    fit = refit_mle(X, 2, frozenset({0, 1}))
    assert fit.noise_variance == 1e-12
    assert np.isfinite(fit.loglik)


def test_refit_rank_deficient_flagged():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(20)
    X = np.column_stack([z, z, rng.standard_normal(20)])
    assert not refit_mle(X, 2, frozenset({0, 1})).ok
    assert not refit_mle(X[:2], 2, frozenset({0, 1})).ok


def test_information_criterion_examples():
    assert information_criterion(-10.0, 0, 100, 5, "aic") == 20.0
    assert information_criterion(-10.0, 0, 100, 5, "bic") == 20.0
    assert information_criterion(-10.0, 0, 100, 5, "ebic") == 20.0
    assert information_criterion(-10.0, 3, 100, 5, "ebic", gamma=0) == \
        information_criterion(-10.0, 3, 100, 5, "bic")
    n = np.exp(2)
    assert information_criterion(-1.0, 2, n, 5, "bic") == \
        pytest.approx(information_criterion(-1.0, 2, n, 5, "aic"))
    assert information_criterion(-1.0, 2, 100, 10, "ebic", 0.5) == \
        pytest.approx(2 + 2 * np.log(100) + 4 * np.log(10))
    with pytest.raises(ValueError):
        information_criterion(0.0, 1, 10, 5, "hqic")


def test_ic_on_zero_only_path():
    m = single_edge_model(4)
    X = sample(m, 100, 0)
    path = solution_path(X, m.target, grid=[2 * lambda_max(X, m.target)])
    res = select_by_ic(path, X, "bic")
    assert res.chosen_index == 0 and res.chosen_support == frozenset()


def test_ebic_recovers_single_edge():
    m = single_edge_model(3)
    exact = 0
    for rep in range(100):
        X = sample(m, 2000, rep)
        path = solution_path(X, m.target)
        exact += select_by_ic(path, X, "ebic", gamma=0.5).chosen_support == m.true_neighborhood
    assert exact >= 90


@given(st.integers(0, 10**6), st.integers(8, 200))
def test_ic_ordering(seed, n):
    m = neighborhood_model(6, 2, seed=seed % 40)
    X = sample(m, n, seed)
    path = solution_path(X, m.target, grid_size=40)
    aic, bic, ebic = (select_by_ic(path, X, k, gamma=0.5) for k in ("aic", "bic", "ebic"))
    assert aic.chosen_lambda <= bic.chosen_lambda <= ebic.chosen_lambda
    assert len(ebic.chosen_support) <= len(bic.chosen_support) <= len(aic.chosen_support)
    assert ebic.metadata["gamma"] == 0.5
