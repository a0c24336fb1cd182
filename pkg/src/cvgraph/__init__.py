"""Penalty selection and structure learning for Gaussian graphical models.

Submodules
----------
gaussian_model
    Ground-truth covariance models, population risk and sampling.
lasso
    Nodewise Lasso solver, gradient correlations, KKT checks and paths.
selection
    Oracle, cross-validated and information-criterion penalty choice.
structure
    Neighbourhood selection, graphical lasso and DAG estimation.
graphs
    Benchmark graph families and precision matrices.
theory
    Numerical checks around the risk-minimizing Lasso fit.
harness
    Simulation experiments and metrics.
"""

__version__ = "0.1.0"
