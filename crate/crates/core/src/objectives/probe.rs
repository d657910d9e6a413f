use rayon::prelude::*;
use serde::Serialize;

use super::MatrixFunction;
use crate::error::{Error, Result};
use crate::rng::{low_rank_unit, stream_rng};

/// Empirical restricted strong convexity / smoothness constants.
///
/// These bracket the true constants from inside: sampling can never certify
/// the infimum/supremum over all low-rank directions.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SmoothnessEstimate {
    pub a_hat: f64,
    pub b_hat: f64,
    /// `(b - a) / (a + b)`: the normalised deviation.
    pub c_hat: f64,
    pub trials: usize,
}

impl SmoothnessEstimate {
    /// Deviation of the unnormalised Hessian from the identity,
    /// `max(b - 1, 1 - a)`.
    pub fn identity_deviation(&self) -> f64 {
        (self.b_hat - 1.0).max(1.0 - self.a_hat).max(0.0)
    }
}

/// Sample `[D^2 f(X)](D, D) / ||D||_F^2` for `trials` random pairs with
/// `rank(X) <= rank_point` and `rank(D) <= rank_dir`.
pub fn restricted_convexity_probe(
    f: &dyn MatrixFunction,
    rank_point: usize,
    rank_dir: usize,
    trials: usize,
    seed: u64,
) -> Result<SmoothnessEstimate> {
    if trials == 0 {
        return Err(Error::Validation("probe needs at least one trial".into()));
    }
    let (n, m) = f.dims();
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let x = low_rank_unit(&mut rng, n, m, rank_point.max(1));
            let d = low_rank_unit(&mut rng, n, m, rank_dir.max(1));
            f.hessian_bilinear(&x, &d, &d)
        })
        .collect::<Result<_>>()?;
    let a_hat = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let b_hat = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(a_hat > 0.0) {
        return Err(Error::Domain(format!(
            "sampled curvature {a_hat:.3e} is not positive; the function is not restricted strongly convex"
        )));
    }
    Ok(SmoothnessEstimate { a_hat, b_hat, c_hat: (b_hat - a_hat) / (a_hat + b_hat), trials })
}
