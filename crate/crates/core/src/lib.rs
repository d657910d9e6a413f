//! Factored low-rank matrix optimisation.
//!
//! The variable is the stacked pair `W = [U; V]` representing `X = U V^T`.
//! The crate provides the factored objectives (plain factorization, a
//! general plugin loss, matrix sensing, weighted PCA) with hand-coded
//! derivatives, numerical certificates for the global landscape, gradient
//! solvers, and falsification suites for the supporting inequalities.

pub mod error;
pub mod factored;
pub mod geometry;
pub mod linalg;
pub mod matio;
pub mod objectives;
pub mod rng;
pub mod sensing;
pub mod solvers;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
pub use factored::{
    distance, ground_truth_factor, hat_stack, procrustes_align, AlignmentResult, FactoredPoint, GroundTruth,
    Parameterization,
};
pub use objectives::{Objective, ObjectiveKind};
