#!/usr/bin/env python3
"""Cross-validation tracks the risk-optimal penalty, not the true support.

A ten-node model with a single true edge. For growing n we compare the
cross-validated penalty with the exact risk minimizer and count how often
each of them selects exactly the true neighbor.

Run: python demos/cv_overselection.py
"""

import numpy as np

from cvgraph.gaussian_model import sample, single_edge_model
from cvgraph.selection import cv_penalty, select_by_ic
from cvgraph.theory import oracle_penalty_continuous, rep_seed, wilson_interval

REPS = 100
model = single_edge_model(10)
truth = model.true_neighborhood

print("%6s %10s %10s %10s %10s %10s" % ("n", "med gap", "CV exact", "CV super", "oracle ex", "EBIC ex"))
for n in (250, 1000, 4000):
    gaps, cv_exact, cv_super, orc_exact, ebic_exact = [], 0, 0, 0, 0
    for rep in range(REPS):
        X = sample(model, n, rep_seed(1, rep))
        cv = cv_penalty(X, model.target, seed=rep)
        orc = oracle_penalty_continuous(model, X, bracket="full")
        ebic = select_by_ic(cv.metadata["path"], X, "ebic")
        gaps.append(abs(cv.chosen_lambda - orc.lam))
        cv_exact += cv.chosen_support == truth
        cv_super += cv.chosen_support > truth
        orc_exact += frozenset(np.flatnonzero(orc.theta_hat).tolist()) == truth
        ebic_exact += ebic.chosen_support == truth
    print("%6d %10.4f %10d %10d %10d %10d" % (n, np.median(gaps), cv_exact, cv_super,
                                              orc_exact, ebic_exact))

lo, hi = wilson_interval(orc_exact, REPS)
print()
print("oracle exact-recovery rate at n=4000: %.2f, 95%% CI [%.2f, %.2f]" % (orc_exact / REPS, lo, hi))
