"""Centralized numerical tolerances and defaults.

Every report written by the CLI echoes :data:`TOLERANCES` so that results can be
compared against the thresholds they were checked with.
"""

# supertrace normalization; calibrated so that the degree-0 eta form equals the
# spectral eta invariant of the pointwise boundary problem
KAPPA = 2.0

TOLERANCES = {
    "hermitian_input": 1e-9,
    "unitary_input": 1e-9,
    "branch_cut_margin": 1e-6,
    "transversality": 1e-8,
    "phase_degenerate": 1e-8,
    "signature_relative": 1e-8,
    "divided_difference_series": 1e-6,
    "fit_relative_residual": 1e-3,
    "plaquette_phase_max": 1.5707963267948966,
    "lattice_rounding_residual": 0.05,
}

DEFAULTS = {
    "galerkin_nodes": 64,
    "galerkin_panels": 8,
    "hurwitz_shift": 20,
    "hurwitz_terms": 8,
    "s_min": 1e-3,
    "s_max": 30.0,
    "s_points": 200,
    "pf_window": 15,
    "basis_K": 128,
    "fd_step": 1e-3,
}
