"""Numerical tolerances and thresholds shared by operations and tests."""

# core linear algebra
SYMMETRY_RTOL = 1e-12
JACOBI_OFF_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
PIVOT_RTOL = 1e-12
RECONSTRUCTION_TOL = 1e-10
ORTHONORMAL_TOL = 1e-10
SOLVE_RESIDUAL_TOL = 1e-9

# stability module
DECOMPOSITION_TOL = 1e-12
STABLE_RESIDUAL_TOL = 1e-8
BLOCK_EQUATION_TOL = 1e-9
DGAMMA_SUM_TOL = 1e-12

# optimizer
DIVERGENCE_NORM = 1e12

# spectral
BOUNDARY_RTOL = 1e-12

# data
STANDARDIZE_TOL = 1e-10
