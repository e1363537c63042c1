"""Numerical laboratory for Feynman-Kac semigroups of symmetric jump processes.

Submodules
----------
model       kernel / potential families and their analytic functionals
rates       rate-function calculus and the ultracontractivity classifier
discretize  grids, generator matrices, quadratic forms, inequality checks
spectral    eigenproblems, heat kernels, intrinsic diagnostics
montecarlo  jump-process simulation and the probabilistic cross-checks
bounds      ground-state envelopes and decay fits
cli         experiment pipelines, config ingestion, result persistence
"""

__version__ = "0.1.0"
