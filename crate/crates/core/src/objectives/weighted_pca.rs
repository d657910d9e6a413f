use nalgebra::DMatrix;

use super::{Objective, ObjectiveKind};
use crate::error::{check_shape, Error, Result};

/// Symmetric weighted PCA `h(U) = 1/2 ||Omega .* (U U^T - X*)||_F^2`.
#[derive(Clone, Debug)]
pub struct WeightedPca {
    omega: DMatrix<f64>,
    weights_sq: DMatrix<f64>,
    x_star: DMatrix<f64>,
    r: usize,
}

impl WeightedPca {
    pub fn new(omega: DMatrix<f64>, x_star: DMatrix<f64>, r: usize) -> Result<Self> {
        if !omega.is_square() {
            return Err(Error::Validation("weight matrix must be square".into()));
        }
        check_shape("weighted PCA target", &x_star, omega.shape())?;
        if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Validation("weights must be positive".into()));
        }
        if (&x_star - x_star.transpose()).norm() > 1e-12 * (1.0 + x_star.norm()) {
            return Err(Error::Validation("target must be symmetric".into()));
        }
        if r == 0 {
            return Err(Error::Validation("rank must be positive".into()));
        }
        let weights_sq = omega.component_mul(&omega);
        Ok(Self { omega, weights_sq, x_star, r })
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    fn check(&self, u: &DMatrix<f64>) -> Result<()> {
        check_shape("weighted PCA", u, self.shape())
    }

    /// `Omega^2 .* (U U^T - X*)`.
    fn weighted_residual(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        self.weights_sq.component_mul(&(u * u.transpose() - &self.x_star))
    }
}

impl Objective for WeightedPca {
    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::WeightedPca
    }

    fn shape(&self) -> (usize, usize) {
        (self.omega.nrows(), self.r)
    }

    fn split(&self) -> Option<usize> {
        None
    }

    fn mu(&self) -> Option<f64> {
        None
    }

    fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        self.check(u)?;
        let e = u * u.transpose() - &self.x_star;
        Ok(0.5 * self.weights_sq.component_mul(&e).dot(&e))
    }

    fn gradient(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(u)?;
        let r = self.weighted_residual(u);
        Ok((&r + r.transpose()) * u)
    }

    fn hessian_bilinear(&self, u: &DMatrix<f64>, d1: &DMatrix<f64>, d2: &DMatrix<f64>) -> Result<f64> {
        self.check(u)?;
        self.check(d1)?;
        self.check(d2)?;
        let s1 = d1 * u.transpose() + u * d1.transpose();
        let s2 = d2 * u.transpose() + u * d2.transpose();
        let cross = d1 * d2.transpose() + d2 * d1.transpose();
        Ok(self.weights_sq.component_mul(&s1).dot(&s2) + self.weighted_residual(u).dot(&cross))
    }

    fn hessian_vector(&self, u: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(u)?;
        self.check(d)?;
        let s = self.weights_sq.component_mul(&(d * u.transpose() + u * d.transpose()));
        let r = self.weighted_residual(u);
        Ok((&s + s.transpose()) * u + (&r + r.transpose()) * d)
    }
}
