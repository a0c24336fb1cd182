#!/usr/bin/env python3
"""Where the risk-optimal Lasso fit sits relative to the truth.

For one sample from a six-node neighborhood model we locate the penalty
that minimizes the population prediction risk, then look at the geometry
around it: the ellipsoid of equal risk centred at the true coefficients,
the equicorrelation set at that penalty, and the tangency residual.

Run: python demos/oracle_geometry.py [seed]
"""

import sys

import numpy as np

from cvgraph.gaussian_model import excess_risk, neighborhood_model, sample
from cvgraph.lasso import lambda_max
from cvgraph.theory import analyze_instance, oracle_penalty_continuous, verify_ellipsoid_exclusion

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 3
model = neighborhood_model(6, 2, seed=0)
X = sample(model, 50, seed)

print("true coefficients   ", np.round(model.theta_star, 3))
print("lambda_max          ", round(lambda_max(X, model.target), 4))

orc = oracle_penalty_continuous(model, X, bracket="full")
print("risk-optimal lambda ", round(orc.lam, 5), "(best of 100-point grid: %.5f)" % orc.grid_lambda)
print("fit at that lambda  ", np.round(orc.theta_hat, 3))
print("excess risk         ", "%.3g (grid: %.3g)" % (excess_risk(orc.theta_hat, model),
                                                    excess_risk(orc.grid_theta, model)))

ev = analyze_instance(model, X, seed=seed)
print()
print("active set          ", sorted(ev.active_set))
print("equicorrelation set ", sorted(ev.equicorrelation_set))
print("true neighborhood   ", sorted(model.true_neighborhood))
print("case                ", ev.case, "| exact recovery:", ev.exact_recovery)
print("tangency residual   ", "%.2e" % ev.tangency_normalized)
if ev.case == "I":
    print("line perturbation stays a Lasso solution:", ev.line_kkt_pass)
elif ev.case == "II":
    print("both rays stay Lasso solutions:", ev.ray1_kkt_pass and ev.ray2_kkt_pass)

# no Lasso solution at any penalty lies strictly inside the equal-risk ellipsoid
rep = verify_ellipsoid_exclusion(model, X, orc.theta_hat, trials=2000, seed=seed)
print()
print("interior probes     ", rep.n_probes, "| Lasso solutions among them:", rep.counterexamples)
print("min ellipsoid value along the path: %.3g" % rep.min_path_value)
