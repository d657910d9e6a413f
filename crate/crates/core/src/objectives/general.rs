use std::sync::Arc;

use nalgebra::DMatrix;

use super::{blocks, regularizer, stack, Objective, ObjectiveKind};
use crate::error::{check_shape, Error, Result};

/// Smooth function `f` on `n x m` matrices, supplied to the factored
/// objective `G(W) = f(U V^T) + rho(W)`.
pub trait MatrixFunction: Send + Sync {
    fn dims(&self) -> (usize, usize);

    fn value(&self, x: &DMatrix<f64>) -> Result<f64>;

    fn gradient(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    fn value_and_gradient(&self, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }

    /// `[D^2 f(X)](d, h)`.
    fn hessian_bilinear(&self, x: &DMatrix<f64>, d: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64>;

    /// `[D^2 f(X)](d)` as a matrix. The default assembles it entrywise from
    /// the bilinear form, which costs `n*m` form evaluations.
    fn hessian_apply(&self, x: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (n, m) = self.dims();
        let mut out = DMatrix::zeros(n, m);
        let mut e = DMatrix::zeros(n, m);
        for j in 0..m {
            for i in 0..n {
                e[(i, j)] = 1.0;
                out[(i, j)] = self.hessian_bilinear(x, d, &e)?;
                e[(i, j)] = 0.0;
            }
        }
        Ok(out)
    }
}

/// `f(X) = 1/2 ||X - X*||_F^2`.
#[derive(Clone, Debug)]
pub struct HalfSquaredDistance {
    pub x_star: DMatrix<f64>,
}

impl MatrixFunction for HalfSquaredDistance {
    fn dims(&self) -> (usize, usize) {
        self.x_star.shape()
    }

    fn value(&self, x: &DMatrix<f64>) -> Result<f64> {
        check_shape("half squared distance", x, self.dims())?;
        Ok(0.5 * (x - &self.x_star).norm_squared())
    }

    fn gradient(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_shape("half squared distance", x, self.dims())?;
        Ok(x - &self.x_star)
    }

    fn hessian_bilinear(&self, _x: &DMatrix<f64>, d: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
        Ok(d.dot(h))
    }

    fn hessian_apply(&self, _x: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(d.clone())
    }
}

/// `f(X) = 1/2 ||Omega .* (X - X*)||_F^2`; restricted strong convexity and
/// smoothness constants are `min Omega^2` and `max Omega^2`.
#[derive(Clone, Debug)]
pub struct WeightedQuadratic {
    weights_sq: DMatrix<f64>,
    x_star: DMatrix<f64>,
}

impl WeightedQuadratic {
    pub fn new(omega: &DMatrix<f64>, x_star: DMatrix<f64>) -> Result<Self> {
        check_shape("weighted quadratic", omega, x_star.shape())?;
        if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Validation("weights must be positive".into()));
        }
        Ok(Self { weights_sq: omega.component_mul(omega), x_star })
    }

    pub fn min_weight_sq(&self) -> f64 {
        self.weights_sq.min()
    }

    pub fn max_weight_sq(&self) -> f64 {
        self.weights_sq.max()
    }
}

impl MatrixFunction for WeightedQuadratic {
    fn dims(&self) -> (usize, usize) {
        self.x_star.shape()
    }

    fn value(&self, x: &DMatrix<f64>) -> Result<f64> {
        check_shape("weighted quadratic", x, self.dims())?;
        let e = x - &self.x_star;
        Ok(0.5 * self.weights_sq.component_mul(&e).dot(&e))
    }

    fn gradient(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_shape("weighted quadratic", x, self.dims())?;
        Ok(self.weights_sq.component_mul(&(x - &self.x_star)))
    }

    fn hessian_bilinear(&self, _x: &DMatrix<f64>, d: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
        Ok(self.weights_sq.component_mul(d).dot(h))
    }

    fn hessian_apply(&self, _x: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.weights_sq.component_mul(d))
    }
}

/// The identically zero function.
#[derive(Clone, Debug)]
pub struct ZeroFunction {
    pub n: usize,
    pub m: usize,
}

impl MatrixFunction for ZeroFunction {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    fn value(&self, _x: &DMatrix<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn gradient(&self, _x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.n, self.m))
    }

    fn hessian_bilinear(&self, _x: &DMatrix<f64>, _d: &DMatrix<f64>, _h: &DMatrix<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn hessian_apply(&self, _x: &DMatrix<f64>, _d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.n, self.m))
    }
}

fn plugin<T>(context: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Plugin { context, source: Box::new(e) })
}

/// `G(W) = f(U V^T) + rho(W)` for a plugin `f`.
#[derive(Clone)]
pub struct GeneralObjective {
    f: Arc<dyn MatrixFunction>,
    r: usize,
    mu: f64,
    kind: ObjectiveKind,
}

impl GeneralObjective {
    pub fn new(f: Arc<dyn MatrixFunction>, r: usize, mu: f64) -> Result<Self> {
        Self::with_kind(f, r, mu, ObjectiveKind::General)
    }

    /// Same objective, labelled as a sensing objective.
    pub fn sensing(f: Arc<dyn MatrixFunction>, r: usize, mu: f64) -> Result<Self> {
        Self::with_kind(f, r, mu, ObjectiveKind::Sensing)
    }

    fn with_kind(f: Arc<dyn MatrixFunction>, r: usize, mu: f64, kind: ObjectiveKind) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Validation(format!("regularisation weight must be positive, got {mu}")));
        }
        if r == 0 {
            return Err(Error::Validation("model rank must be positive".into()));
        }
        Ok(Self { f, r, mu, kind })
    }

    pub fn function(&self) -> &Arc<dyn MatrixFunction> {
        &self.f
    }

    fn n(&self) -> usize {
        self.f.dims().0
    }

    fn check(&self, w: &DMatrix<f64>) -> Result<()> {
        check_shape("general objective", w, self.shape())
    }
}

impl Objective for GeneralObjective {
    fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    fn shape(&self) -> (usize, usize) {
        let (n, m) = self.f.dims();
        (n + m, self.r)
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
        let fx = plugin("value", self.f.value(&(&u * v.transpose())))?;
        Ok(fx + regularizer::value(w, self.n(), self.mu))
    }

    fn gradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.value_and_gradient(w)?.1)
    }

    fn value_and_gradient(&self, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        self.check(w)?;
        let n = self.n();
        let (u, v) = blocks(w, n);
        let (fx, gx) = plugin("gradient", self.f.value_and_gradient(&(&u * v.transpose())))?;
        let grad = stack(&(&gx * &v), &(gx.transpose() * &u)) + regularizer::gradient(w, n, self.mu);
        Ok((fx + regularizer::value(w, n, self.mu), grad))
    }

    fn hessian_bilinear(&self, w: &DMatrix<f64>, d1: &DMatrix<f64>, d2: &DMatrix<f64>) -> Result<f64> {
        self.check(w)?;
        self.check(d1)?;
        self.check(d2)?;
        let n = self.n();
        let (u, v) = blocks(w, n);
        let (a_u, a_v) = blocks(d1, n);
        let (b_u, b_v) = blocks(d2, n);
        let x = &u * v.transpose();
        let gx = plugin("gradient", self.f.gradient(&x))?;
        let ha = &a_u * v.transpose() + &u * a_v.transpose();
        let hb = &b_u * v.transpose() + &u * b_v.transpose();
        let curv = plugin("hessian", self.f.hessian_bilinear(&x, &ha, &hb))?;
        let cross = &a_u * b_v.transpose() + &b_u * a_v.transpose();
        Ok(curv + gx.dot(&cross) + regularizer::bilinear(w, d1, d2, n, self.mu))
    }

    fn hessian_vector(&self, w: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(w)?;
        self.check(d)?;
        let n = self.n();
        let (u, v) = blocks(w, n);
        let (d_u, d_v) = blocks(d, n);
        let x = &u * v.transpose();
        let gx = plugin("gradient", self.f.gradient(&x))?;
        let h = &d_u * v.transpose() + &u * d_v.transpose();
        let fh = plugin("hessian", self.f.hessian_apply(&x, &h))?;
        let top = &fh * &v + &gx * &d_v;
        let bottom = fh.transpose() * &u + gx.transpose() * &d_u;
        Ok(stack(&top, &bottom) + regularizer::hessian_vector(w, d, n, self.mu))
    }
}
