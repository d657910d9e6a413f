//! Factored objectives with value, gradient and Hessian forms.
//!
//! Every objective acts on a dense parameter matrix: the stacked factor
//! `W = [U; V]` for the factored objectives, `U` alone for the symmetric
//! weighted PCA example. Derivatives are hand-coded and checked against
//! finite differences in [`crate::verify`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;

mod factorization;
mod general;
mod probe;
mod regularizer;
mod weighted_pca;

pub use factorization::Factorization;
pub use general::{GeneralObjective, HalfSquaredDistance, MatrixFunction, WeightedQuadratic, ZeroFunction};
pub use probe::{restricted_convexity_probe, SmoothnessEstimate};
pub use regularizer::Regularizer;
pub use weighted_pca::WeightedPca;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Regularizer,
    Factorization,
    General,
    Sensing,
    WeightedPca,
}

/// Uniform interface over the objectives.
pub trait Objective: Send + Sync {
    fn kind(&self) -> ObjectiveKind;

    /// Shape of the parameter matrix.
    fn shape(&self) -> (usize, usize);

    /// Row at which the parameter splits into `U` and `V`, if factored.
    fn split(&self) -> Option<usize>;

    /// Regularisation weight, if a balancing regularizer is present.
    fn mu(&self) -> Option<f64>;

    fn value(&self, w: &DMatrix<f64>) -> Result<f64>;

    fn gradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    fn value_and_gradient(&self, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        Ok((self.value(w)?, self.gradient(w)?))
    }

    /// Symmetric Hessian bilinear form `[D^2 h(W)](d1, d2)`.
    fn hessian_bilinear(&self, w: &DMatrix<f64>, d1: &DMatrix<f64>, d2: &DMatrix<f64>) -> Result<f64>;

    /// Hessian quadratic form `[D^2 h(W)](d, d)`.
    fn hessian_form(&self, w: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<f64> {
        self.hessian_bilinear(w, d, d)
    }

    /// Matrix-free Hessian-vector product.
    fn hessian_vector(&self, w: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Split a stacked matrix into owned `(U, V)` blocks.
pub(crate) fn blocks(w: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = w.nrows() - n;
    (w.rows(0, n).into_owned(), w.rows(n, m).into_owned())
}

/// Stack two blocks back into `[top; bottom]`.
pub(crate) fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}
