use nalgebra::DMatrix;

use super::{Objective, ObjectiveKind};
use crate::error::{check_shape, Error, Result};
use crate::factored::hat_matrix;

/// Balancing regularizer `rho(W) = (mu/4) ||U^T U - V^T V||_F^2`.
#[derive(Clone, Debug)]
pub struct Regularizer {
    n: usize,
    m: usize,
    r: usize,
    mu: f64,
}

impl Regularizer {
    pub fn new(n: usize, m: usize, r: usize, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Validation(format!("regularisation weight must be positive, got {mu}")));
        }
        Ok(Self { n, m, r, mu })
    }

    fn check(&self, w: &DMatrix<f64>) -> Result<()> {
        check_shape("regularizer", w, (self.n + self.m, self.r))
    }
}

/// `U^T U - V^T V` as `What^T W`.
pub(crate) fn gap(w: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    hat_matrix(w, n).transpose() * w
}

pub(crate) fn value(w: &DMatrix<f64>, n: usize, mu: f64) -> f64 {
    0.25 * mu * gap(w, n).norm_squared()
}

pub(crate) fn gradient(w: &DMatrix<f64>, n: usize, mu: f64) -> DMatrix<f64> {
    hat_matrix(w, n) * gap(w, n) * mu
}

/// Directional derivative of the gap: `Dhat^T W + What^T D`.
fn gap_derivative(w: &DMatrix<f64>, d: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    hat_matrix(d, n).transpose() * w + hat_matrix(w, n).transpose() * d
}

pub(crate) fn bilinear(w: &DMatrix<f64>, d1: &DMatrix<f64>, d2: &DMatrix<f64>, n: usize, mu: f64) -> f64 {
    let g = gap(w, n);
    let first = gap_derivative(w, d1, n).dot(&gap_derivative(w, d2, n));
    let second_dir = hat_matrix(d1, n).transpose() * d2 + hat_matrix(d2, n).transpose() * d1;
    0.5 * mu * (first + g.dot(&second_dir))
}

pub(crate) fn hessian_vector(w: &DMatrix<f64>, d: &DMatrix<f64>, n: usize, mu: f64) -> DMatrix<f64> {
    let g = gap(w, n);
    (hat_matrix(w, n) * gap_derivative(w, d, n) + hat_matrix(d, n) * g) * mu
}

impl Objective for Regularizer {
    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::Regularizer
    }

    fn shape(&self) -> (usize, usize) {
        (self.n + self.m, self.r)
    }

    fn split(&self) -> Option<usize> {
        Some(self.n)
    }

    fn mu(&self) -> Option<f64> {
        Some(self.mu)
    }

    fn value(&self, w: &DMatrix<f64>) -> Result<f64> {
        self.check(w)?;
        Ok(value(w, self.n, self.mu))
    }

    fn gradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(w)?;
        Ok(gradient(w, self.n, self.mu))
    }

    fn hessian_bilinear(&self, w: &DMatrix<f64>, d1: &DMatrix<f64>, d2: &DMatrix<f64>) -> Result<f64> {
        self.check(w)?;
        self.check(d1)?;
        self.check(d2)?;
        Ok(bilinear(w, d1, d2, self.n, self.mu))
    }

    fn hessian_vector(&self, w: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(w)?;
        self.check(d)?;
        Ok(hessian_vector(w, d, self.n, self.mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, random_orthonormal, stream_rng};

    #[test]
    fn balanced_point_is_flat() {
        let mut rng = stream_rng(1, 0);
        let u = gaussian_matrix(&mut rng, 3, 2);
        let w = super::super::stack(&u, &u);
        let reg = Regularizer::new(3, 3, 2, 0.5).unwrap();
        assert_eq!(reg.value(&w).unwrap(), 0.0);
        assert_eq!(reg.gradient(&w).unwrap().norm(), 0.0);
    }

    #[test]
    fn scalar_example() {
        // (1/2)/4 * (1 - 4)^2 = 9/8
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let reg = Regularizer::new(1, 1, 1, 0.5).unwrap();
        assert!((reg.value(&w).unwrap() - 9.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn psd_on_balanced_set() {
        let mut rng = stream_rng(2, 0);
        // balanced: U = L S^{1/2}, V = P S^{1/2} with orthonormal L, P
        let l = random_orthonormal(&mut rng, 4, 2);
        let p = random_orthonormal(&mut rng, 3, 2);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.7, 0.4]));
        let w = super::super::stack(&(l * &s), &(p * &s));
        let reg = Regularizer::new(4, 3, 2, 0.5).unwrap();
        assert!(reg.value(&w).unwrap() < 1e-24);
        for _ in 0..100 {
            let d = gaussian_matrix(&mut rng, 7, 2);
            assert!(reg.hessian_form(&w, &d).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_weight() {
        assert!(Regularizer::new(2, 2, 1, 0.0).is_err());
        assert!(Regularizer::new(2, 2, 1, -1.0).is_err());
    }
}
