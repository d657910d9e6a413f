//! Linear measurement operators `A: R^{n x m} -> R^p`, the least-squares
//! sensing loss and empirical RIP diagnostics.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_shape, Error, Result};
use crate::linalg::to_row_major;
use crate::matio;
use crate::objectives::MatrixFunction;
use crate::rng::{low_rank_unit, normal, stream_rng};
use crate::tolerances::ENSEMBLE_CAP;

/// `p` dense `n x m` measurement matrices, stored as the rows of a
/// `p x (n*m)` matrix acting on row-major vectorisations.
#[derive(Clone, Debug)]
pub struct MeasurementOperator {
    n: usize,
    m: usize,
    seed: Option<u64>,
    rows: DMatrix<f64>,
}

/// Gaussian ensemble with i.i.d. `N(0, 1/p)` entries under the default
/// memory cap.
pub fn gaussian_ensemble(n: usize, m: usize, p: usize, seed: u64) -> Result<MeasurementOperator> {
    MeasurementOperator::gaussian(n, m, p, seed, ENSEMBLE_CAP)
}

impl MeasurementOperator {
    /// Entries are drawn from stream 0 of `seed` in the order
    /// (measurement, row, column).
    pub fn gaussian(n: usize, m: usize, p: usize, seed: u64, cap: usize) -> Result<Self> {
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::Validation(format!("ensemble dimensions must be positive, got n={n} m={m} p={p}")));
        }
        let total = p.checked_mul(n * m).unwrap_or(usize::MAX);
        if total > cap {
            return Err(Error::Resource(format!("ensemble of {total} scalars exceeds cap {cap}")));
        }
        let mut rng = stream_rng(seed, 0);
        let scale = (1.0 / p as f64).sqrt();
        let data: Vec<f64> = (0..total).map(|_| normal(&mut rng) * scale).collect();
        Ok(Self { n, m, seed: Some(seed), rows: DMatrix::from_row_slice(p, n * m, &data) })
    }

    /// Operator from explicit measurement matrices.
    pub fn from_matrices(mats: &[DMatrix<f64>]) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::Validation("no measurement matrices".into()))?;
        let (n, m) = first.shape();
        let mut data = Vec::with_capacity(mats.len() * n * m);
        for a in mats {
            check_shape("MeasurementOperator::from_matrices", a, (n, m))?;
            data.extend(to_row_major(a));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("measurement matrices must be finite".into()));
        }
        Ok(Self { n, m, seed: None, rows: DMatrix::from_row_slice(mats.len(), n * m, &data) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.rows.nrows()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The `l`-th measurement matrix.
    pub fn matrix(&self, l: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.m, self.rows.row(l).transpose().as_slice())
    }

    /// `y_l = <A_l, X>`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_shape("MeasurementOperator::apply", x, (self.n, self.m))?;
        Ok(&self.rows * DVector::from_vec(to_row_major(x)))
    }

    /// `A*(y) = sum_l y_l A_l`.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        if y.len() != self.p() {
            return Err(Error::Dimension {
                context: "MeasurementOperator::adjoint",
                expected: format!("{} measurements", self.p()),
                actual: format!("{}", y.len()),
            });
        }
        let v = self.rows.tr_mul(y);
        Ok(DMatrix::from_row_slice(self.n, self.m, v.as_slice()))
    }

    /// `A* A` as an `(n*m) x (n*m)` matrix on row-major vectorisations.
    pub fn gram(&self) -> DMatrix<f64> {
        self.rows.tr_mul(&self.rows)
    }

    /// One line sufficient to regenerate a Gaussian ensemble.
    pub fn manifest_line(&self) -> Option<String> {
        self.seed.map(|s| format!("{} {} {} {}", self.n, self.m, self.p(), s))
    }

    /// Dump every measurement matrix in the repo matrix format, blocks
    /// separated by blank lines.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> Result<()> {
        for l in 0..self.p() {
            if l > 0 {
                writeln!(out)?;
            }
            matio::write_matrix(out, &self.matrix(l))?;
        }
        Ok(())
    }
}

/// `f(X) = 1/2 ||A(X) - y||^2`.
///
/// With [`SensingLoss::with_gram`] the gradient and Hessian use the
/// precomputed `A*A`, which is cheaper whenever `p > n*m`. When the loss
/// is built from a known target the value is evaluated as
/// `1/2 (X - X*)^T A*A (X - X*)`, avoiding cancellation near the optimum.
#[derive(Clone, Debug)]
pub struct SensingLoss {
    op: Arc<MeasurementOperator>,
    y: DVector<f64>,
    target: Option<DVector<f64>>,
    gram: Option<Arc<DMatrix<f64>>>,
}

impl SensingLoss {
    pub fn new(op: Arc<MeasurementOperator>, y: DVector<f64>) -> Result<Self> {
        if y.len() != op.p() {
            return Err(Error::Dimension {
                context: "SensingLoss::new",
                expected: format!("{} measurements", op.p()),
                actual: format!("{}", y.len()),
            });
        }
        Ok(Self { op, y, target: None, gram: None })
    }

    /// Noiseless measurements `y = A(X*)`.
    pub fn from_target(op: Arc<MeasurementOperator>, x_star: &DMatrix<f64>) -> Result<Self> {
        let y = op.apply(x_star)?;
        let mut loss = Self::new(op, y)?;
        loss.target = Some(DVector::from_vec(to_row_major(x_star)));
        Ok(loss)
    }

    pub fn with_gram(mut self) -> Self {
        self.gram = Some(Arc::new(self.op.gram()));
        self
    }

    pub fn operator(&self) -> &Arc<MeasurementOperator> {
        &self.op
    }

    fn vec(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_shape("sensing loss", x, (self.op.n, self.op.m))?;
        Ok(DVector::from_vec(to_row_major(x)))
    }

    fn unvec(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.op.n, self.op.m, v.as_slice())
    }
}

impl MatrixFunction for SensingLoss {
    fn dims(&self) -> (usize, usize) {
        (self.op.n, self.op.m)
    }

    fn value(&self, x: &DMatrix<f64>) -> Result<f64> {
        let xv = self.vec(x)?;
        if let (Some(g), Some(t)) = (&self.gram, &self.target) {
            let e = xv - t;
            return Ok(0.5 * e.dot(&(g.as_ref() * &e)));
        }
        Ok(0.5 * (&self.op.rows * xv - &self.y).norm_squared())
    }

    fn gradient(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    fn value_and_gradient(&self, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let xv = self.vec(x)?;
        if let (Some(g), Some(t)) = (&self.gram, &self.target) {
            let e = xv - t;
            let ge = g.as_ref() * &e;
            return Ok((0.5 * e.dot(&ge), self.unvec(&ge)));
        }
        let resid = &self.op.rows * xv - &self.y;
        let grad = self.op.rows.tr_mul(&resid);
        Ok((0.5 * resid.norm_squared(), self.unvec(&grad)))
    }

    fn hessian_bilinear(&self, _x: &DMatrix<f64>, d: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64> {
        let dv = self.vec(d)?;
        let hv = self.vec(h)?;
        if let Some(g) = &self.gram {
            return Ok(dv.dot(&(g.as_ref() * hv)));
        }
        Ok((&self.op.rows * dv).dot(&(&self.op.rows * hv)))
    }

    fn hessian_apply(&self, _x: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let dv = self.vec(d)?;
        let out = match &self.gram {
            Some(g) => g.as_ref() * dv,
            None => self.op.rows.tr_mul(&(&self.op.rows * dv)),
        };
        Ok(self.unvec(&out))
    }
}

/// Empirical restricted isometry report. `delta_hat` is a lower bound on
/// the true constant: sampling cannot certify the supremum.
#[derive(Clone, Debug, Serialize)]
pub struct RipReport {
    pub r_tested: usize,
    pub delta_hat: f64,
    pub trials: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub empirical: bool,
}

/// Sample `||A(D)||^2 / ||D||_F^2` over unit-norm `D` of rank `k` for every
/// `k <= r`. Rank-`k` samples come from a stream that depends only on
/// `(seed, k, trial)`, so the sample set for rank `r` contains the sample set
/// for every smaller rank and `delta_hat` is monotone in `r` exactly.
pub fn rip_estimate(op: &MeasurementOperator, r: usize, trials: usize, seed: u64) -> Result<RipReport> {
    if trials == 0 || r == 0 {
        return Err(Error::Validation("rip_estimate needs r >= 1 and trials >= 1".into()));
    }
    let ratios: Vec<f64> = (1..=r)
        .flat_map(|k| (0..trials).map(move |t| (k, t)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, t)| {
            let mut rng = stream_rng(seed, ((k as u64) << 32) | t as u64);
            let d = low_rank_unit(&mut rng, op.n, op.m, k);
            Ok(op.apply(&d)?.norm_squared())
        })
        .collect::<Result<_>>()?;
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RipReport {
        r_tested: r,
        delta_hat: (max_ratio - 1.0).max(1.0 - min_ratio).max(0.0),
        trials: ratios.len(),
        min_ratio,
        max_ratio,
        empirical: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    #[test]
    fn ensemble_is_deterministic() {
        let a = gaussian_ensemble(4, 3, 10, 7).unwrap();
        let b = gaussian_ensemble(4, 3, 10, 7).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_ne!(a.rows, gaussian_ensemble(4, 3, 10, 8).unwrap().rows);
        assert_eq!(a.manifest_line().unwrap(), "4 3 10 7");
    }

    #[test]
    fn cap_and_validation() {
        assert!(matches!(MeasurementOperator::gaussian(10, 10, 10, 0, 999), Err(Error::Resource(_))));
        assert!(gaussian_ensemble(0, 3, 10, 0).is_err());
        assert!(gaussian_ensemble(3, 3, 0, 0).is_err());
    }

    #[test]
    fn matrix_layout_matches_apply() {
        let op = gaussian_ensemble(3, 2, 5, 1).unwrap();
        let x = gaussian_matrix(&mut stream_rng(1, 1), 3, 2);
        let y = op.apply(&x).unwrap();
        for l in 0..5 {
            assert!((op.matrix(l).dot(&x) - y[l]).abs() < 1e-14);
        }
    }

    #[test]
    fn adjoint_identity_and_linearity() {
        let op = gaussian_ensemble(4, 3, 20, 2).unwrap();
        let mut rng = stream_rng(2, 1);
        let x1 = gaussian_matrix(&mut rng, 4, 3);
        let x2 = gaussian_matrix(&mut rng, 4, 3);
        let y = DVector::from_fn(20, |_, _| normal(&mut rng));
        let lhs = op.apply(&x1).unwrap().dot(&y);
        let rhs = x1.dot(&op.adjoint(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-10);
        let comb = op.apply(&(&x1 * 2.5 + &x2)).unwrap();
        let sep = op.apply(&x1).unwrap() * 2.5 + op.apply(&x2).unwrap();
        assert!((comb - sep).norm() < 1e-12);
        assert_eq!(op.apply(&DMatrix::zeros(4, 3)).unwrap().norm(), 0.0);
        assert!(op.apply(&DMatrix::zeros(3, 4)).is_err());
        assert!(op.adjoint(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn gram_and_plain_paths_agree() {
        let op = Arc::new(gaussian_ensemble(4, 3, 30, 3).unwrap());
        let mut rng = stream_rng(3, 1);
        let x_star = gaussian_matrix(&mut rng, 4, 3);
        let plain = SensingLoss::from_target(op.clone(), &x_star).unwrap();
        let fast = plain.clone().with_gram();
        let x = gaussian_matrix(&mut rng, 4, 3);
        let d = gaussian_matrix(&mut rng, 4, 3);
        let h = gaussian_matrix(&mut rng, 4, 3);
        assert!((plain.value(&x).unwrap() - fast.value(&x).unwrap()).abs() < 1e-12);
        assert!((plain.gradient(&x).unwrap() - fast.gradient(&x).unwrap()).norm() < 1e-12);
        let a = plain.hessian_bilinear(&x, &d, &h).unwrap();
        let b = fast.hessian_bilinear(&x, &d, &h).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((plain.hessian_apply(&x, &d).unwrap() - fast.hessian_apply(&x, &d).unwrap()).norm() < 1e-12);
        assert!(fast.gradient(&x_star).unwrap().norm() < 1e-14);
        assert!(plain.gradient(&x_star).unwrap().norm() < 1e-12);
    }

    #[test]
    fn identity_operator_is_an_isometry() {
        let (n, m) = (3, 2);
        let mats: Vec<DMatrix<f64>> = (0..n * m)
            .map(|k| {
                let mut e = DMatrix::zeros(n, m);
                e[(k / m, k % m)] = 1.0;
                e
            })
            .collect();
        let op = MeasurementOperator::from_matrices(&mats).unwrap();
        let rep = rip_estimate(&op, 2, 50, 4).unwrap();
        assert!(rep.delta_hat < 1e-12);
        assert!(op.manifest_line().is_none());
    }

    #[test]
    fn rip_is_nested_in_rank() {
        let op = gaussian_ensemble(6, 6, 60, 5).unwrap();
        let r1 = rip_estimate(&op, 1, 40, 9).unwrap();
        let r2 = rip_estimate(&op, 2, 40, 9).unwrap();
        assert!(r2.delta_hat >= r1.delta_hat);
        assert!(r2.min_ratio <= r1.min_ratio && r2.max_ratio >= r1.max_ratio);
        assert_eq!(r2.trials, 80);
    }

    #[test]
    fn dump_round_trips() {
        let op = gaussian_ensemble(2, 2, 3, 6).unwrap();
        let mut buf = Vec::new();
        op.write_dump(&mut buf).unwrap();
        let mut reader = buf.as_slice();
        for l in 0..3 {
            assert_eq!(matio::read_matrix(&mut reader).unwrap(), op.matrix(l));
        }
    }
}
