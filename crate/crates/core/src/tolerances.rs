//! Central table of tolerances and resource caps.
//!
//! Every threshold used by the certificates, samplers and test suites is
//! defined here once.

/// Structural invariants: orthonormality, exact reconstructions.
pub const STRUCTURAL: f64 = 1e-12;

/// Comparisons between derived quantities (identities, recomputed margins).
pub const DERIVED: f64 = 1e-10;

/// Slack allowed when checking a certificate inequality `lhs >= rhs`.
pub const CERTIFICATE: f64 = 1e-10;

/// Relative error budget for first-order finite-difference checks.
pub const FD_ORDER1: f64 = 1e-6;

/// Relative error budget for second-order finite-difference checks.
pub const FD_ORDER2: f64 = 1e-4;

/// Gradient norm below which a constructed critical point is accepted.
pub const CRITICAL_GRAD: f64 = 1e-10;

/// Relative tolerance of the iterative smallest-eigenvalue solver.
pub const ITERATIVE_EIG: f64 = 1e-8;

/// Largest Hessian dimension `(n+m)*r` assembled densely.
pub const DENSE_HESSIAN_CAP: usize = 400;

/// Largest number of scalars stored by a measurement ensemble.
pub const ENSEMBLE_CAP: usize = 20_000_000;

/// Largest spectrum size for critical-point enumeration (2^12 masks).
pub const ENUMERATION_CAP: usize = 12;

/// Proposals drawn by a region sampler before giving up.
pub const SAMPLER_BUDGET: usize = 100_000;

/// A run aborts once its value exceeds this multiple of the initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Default regularisation weight.
pub const DEFAULT_MU: f64 = 0.5;

/// Default decimation stride for stored iterates.
pub const DEFAULT_STRIDE: usize = 10;

/// Finite-difference step for gradients: eps^{1/3} (1 + ||W||_F).
pub fn fd_step_order1(scale: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + scale)
}

/// Finite-difference step for second differences: eps^{1/4} (1 + ||W||_F).
pub fn fd_step_order2(scale: f64) -> f64 {
    f64::EPSILON.powf(0.25) * (1.0 + scale)
}
