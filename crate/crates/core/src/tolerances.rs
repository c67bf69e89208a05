// SPDX-License-Identifier: Apache-2.0

//! Numerical tolerances shared across the crate.

/// Max entrywise |M - M^dagger| for a matrix to count as Hermitian.
pub const HERM_TOL: f64 = 1e-10;

/// Eigenvalues down to `-PSD_TOL` are accepted as numerically zero.
pub const PSD_TOL: f64 = 1e-8;

/// |<psi|psi> - 1| allowed for a state vector.
pub const NORM_TOL: f64 = 1e-12;

/// |Tr rho - 1| allowed for a density matrix.
pub const TRACE_TOL: f64 = 1e-10;

/// Max entrywise |U^dagger U - I| for a gate.
pub const UNITARY_TOL: f64 = 1e-10;

/// Imaginary residue tolerated in an expectation value of a Hermitian operator.
pub const EXPECTATION_IMAG_TOL: f64 = 1e-10;

/// Per-eigenpair residual bound ||M v - lambda v||.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Relative singular-value threshold used for numerical rank.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Convergence threshold on successive tomography iterates (Frobenius norm).
pub const RECONSTRUCT_STEP_TOL: f64 = 1e-10;

/// Bisection stopping threshold on fidelity.
pub const CALIBRATION_TOL: f64 = 1e-6;

/// Concurrence refuses two-qubit inputs with eigenvalues below `-CONCURRENCE_NEG_TOL`.
pub const CONCURRENCE_NEG_TOL: f64 = 1e-10;
