use nalgebra::DMatrix;

use super::{blocks, regularizer, stack, Objective, ObjectiveKind};
use crate::error::{check_shape, Error, Result};
use crate::factored::GroundTruth;

/// Matrix factorization `g(W) = 1/2 ||U V^T - X*||_F^2 + rho(W)`.
#[derive(Clone, Debug)]
pub struct Factorization {
    x_star: DMatrix<f64>,
    r: usize,
    mu: f64,
}

impl Factorization {
    pub fn new(gt: &GroundTruth, mu: f64) -> Result<Self> {
        Self::from_target(gt.x_star().clone(), gt.r_model(), mu)
    }

    pub fn from_target(x_star: DMatrix<f64>, r: usize, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Validation(format!("regularisation weight must be positive, got {mu}")));
        }
        if r == 0 {
            return Err(Error::Validation("model rank must be positive".into()));
        }
        Ok(Self { x_star, r, mu })
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.x_star
    }

    fn n(&self) -> usize {
        self.x_star.nrows()
    }

    fn check(&self, w: &DMatrix<f64>) -> Result<()> {
        check_shape("factorization", w, self.shape())
    }

    fn residual(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        u * v.transpose() - &self.x_star
    }
}

impl Objective for Factorization {
    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::Factorization
    }

    fn shape(&self) -> (usize, usize) {
        (self.x_star.nrows() + self.x_star.ncols(), self.r)
    }

    fn split(&self) -> Option<usize> {
        Some(self.n())
    }

    fn mu(&self) -> Option<f64> {
        Some(self.mu)
    }

    fn value(&self, w: &DMatrix<f64>) -> Result<f64> {
        self.check(w)?;
        let (u, v) = blocks(w, self.n());
        Ok(0.5 * self.residual(&u, &v).norm_squared() + regularizer::value(w, self.n(), self.mu))
    }

    fn gradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(w)?;
        let (u, v) = blocks(w, self.n());
        let e = self.residual(&u, &v);
        let data = stack(&(&e * &v), &(e.transpose() * &u));
        Ok(data + regularizer::gradient(w, self.n(), self.mu))
    }

    fn value_and_gradient(&self, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        self.check(w)?;
        let (u, v) = blocks(w, self.n());
        let e = self.residual(&u, &v);
        let value = 0.5 * e.norm_squared() + regularizer::value(w, self.n(), self.mu);
        let grad = stack(&(&e * &v), &(e.transpose() * &u)) + regularizer::gradient(w, self.n(), self.mu);
        Ok((value, grad))
    }

    fn hessian_bilinear(&self, w: &DMatrix<f64>, d1: &DMatrix<f64>, d2: &DMatrix<f64>) -> Result<f64> {
        self.check(w)?;
        self.check(d1)?;
        self.check(d2)?;
        let n = self.n();
        let (u, v) = blocks(w, n);
        let (a_u, a_v) = blocks(d1, n);
        let (b_u, b_v) = blocks(d2, n);
        let e = self.residual(&u, &v);
        let ha = &a_u * v.transpose() + &u * a_v.transpose();
        let hb = &b_u * v.transpose() + &u * b_v.transpose();
        let cross = &a_u * b_v.transpose() + &b_u * a_v.transpose();
        Ok(ha.dot(&hb) + e.dot(&cross) + regularizer::bilinear(w, d1, d2, n, self.mu))
    }

    fn hessian_vector(&self, w: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(w)?;
        self.check(d)?;
        let n = self.n();
        let (u, v) = blocks(w, n);
        let (d_u, d_v) = blocks(d, n);
        let e = self.residual(&u, &v);
        let h = &d_u * v.transpose() + &u * d_v.transpose();
        let top = &h * &v + &e * &d_v;
        let bottom = h.transpose() * &u + e.transpose() * &d_u;
        Ok(stack(&top, &bottom) + regularizer::hessian_vector(w, d, n, self.mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::{hat_matrix, GroundTruth};
    use crate::rng::{gaussian_matrix, stream_rng};

    #[test]
    fn optimum_is_stationary() {
        let mut rng = stream_rng(3, 0);
        let gt = GroundTruth::random(&mut rng, 4, 3, 2, 2, 1.0, 3.0).unwrap();
        let g = Factorization::new(&gt, 0.5).unwrap();
        let w = gt.w_star().into_stacked();
        assert!(g.value(&w).unwrap() < 1e-24);
        assert!(g.gradient(&w).unwrap().norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_lifted_form_at_half() {
        // at mu = 1/2 the gradient is (WW^T - W*W*^T)W/2 + What* What*^T W/2
        let mut rng = stream_rng(4, 0);
        let gt = GroundTruth::random(&mut rng, 4, 3, 2, 2, 1.0, 3.0).unwrap();
        let g = Factorization::new(&gt, 0.5).unwrap();
        let ws = gt.w_star().into_stacked();
        let wh = hat_matrix(&ws, 4);
        for _ in 0..5 {
            let w = gaussian_matrix(&mut rng, 7, 2);
            let lifted = (&w * w.transpose() - &ws * ws.transpose()) * &w * 0.5 + &wh * wh.transpose() * &w * 0.5;
            assert!((g.gradient(&w).unwrap() - lifted).norm() < 1e-12);
        }
    }

    #[test]
    fn hvp_matches_bilinear() {
        let mut rng = stream_rng(5, 0);
        let gt = GroundTruth::random(&mut rng, 4, 3, 2, 2, 1.0, 3.0).unwrap();
        let g = Factorization::new(&gt, 0.7).unwrap();
        let w = gaussian_matrix(&mut rng, 7, 2);
        let a = gaussian_matrix(&mut rng, 7, 2);
        let b = gaussian_matrix(&mut rng, 7, 2);
        let via_hvp = g.hessian_vector(&w, &a).unwrap().dot(&b);
        let direct = g.hessian_bilinear(&w, &a, &b).unwrap();
        assert!((via_hvp - direct).abs() < 1e-10 * (1.0 + direct.abs()));
        let sym = g.hessian_bilinear(&w, &b, &a).unwrap();
        assert!((sym - direct).abs() < 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn shape_is_checked() {
        let g = Factorization::from_target(DMatrix::identity(3, 2), 1, 0.5).unwrap();
        assert!(g.value(&DMatrix::zeros(4, 1)).is_err());
        assert!(Factorization::from_target(DMatrix::identity(3, 2), 1, 0.0).is_err());
    }
}
