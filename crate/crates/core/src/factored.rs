//! The factored variable `W = [U; V]`, the hat operator, Procrustes
//! alignment and the ground-truth factorization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{check_shape, shape_error, Error, Result};
use crate::linalg::{self, orthonormality_defect};
use crate::rng;
use crate::tolerances::STRUCTURAL;

/// Stacked factor pair `W = [U; V]` with `U` of size `n x r` and `V` of size
/// `m x r`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredPoint {
    w: DMatrix<f64>,
    n: usize,
}

impl FactoredPoint {
    pub fn new(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::Dimension {
                context: "FactoredPoint::new",
                expected: format!("V with {} columns", u.ncols()),
                actual: format!("{} columns", v.ncols()),
            });
        }
        let (n, m, r) = (u.nrows(), v.nrows(), u.ncols());
        let mut w = DMatrix::zeros(n + m, r);
        w.rows_mut(0, n).copy_from(u);
        w.rows_mut(n, m).copy_from(v);
        Self::from_stacked(w, n)
    }

    /// Wrap an already stacked `(n+m) x r` matrix.
    pub fn from_stacked(w: DMatrix<f64>, n: usize) -> Result<Self> {
        if n == 0 || n >= w.nrows() || w.ncols() == 0 {
            return Err(Error::Validation(format!(
                "stacked matrix {}x{} cannot be split at row {n}",
                w.nrows(),
                w.ncols()
            )));
        }
        if !linalg::is_finite(&w) {
            return Err(Error::Validation("factored point has non-finite entries".into()));
        }
        Ok(Self { w, n })
    }

    pub fn zeros(n: usize, m: usize, r: usize) -> Self {
        Self { w: DMatrix::zeros(n + m, r), n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.w.nrows() - self.n
    }

    pub fn r(&self) -> usize {
        self.w.ncols()
    }

    pub fn stacked(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_stacked(self) -> DMatrix<f64> {
        self.w
    }

    pub fn u(&self) -> DMatrix<f64> {
        self.w.rows(0, self.n).into_owned()
    }

    pub fn v(&self) -> DMatrix<f64> {
        self.w.rows(self.n, self.m()).into_owned()
    }

    /// `U V^T`.
    pub fn product(&self) -> DMatrix<f64> {
        self.u() * self.v().transpose()
    }

    /// `U^T U - V^T V`; zero exactly on the balanced set.
    pub fn gram_gap(&self) -> DMatrix<f64> {
        hat_matrix(&self.w, self.n).transpose() * &self.w
    }

    /// Another point with the same split.
    pub fn with_stacked(&self, w: DMatrix<f64>) -> Result<Self> {
        check_shape("FactoredPoint::with_stacked", &w, self.w.shape())?;
        Self::from_stacked(w, self.n)
    }

    /// Right action of an `r x r` matrix: `W R`.
    pub fn rotate(&self, r: &DMatrix<f64>) -> Result<Self> {
        check_shape("FactoredPoint::rotate", r, (self.r(), self.r()))?;
        Ok(Self { w: &self.w * r, n: self.n })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { w: &self.w * s, n: self.n }
    }
}

/// `What = [U; -V]` for a stacked matrix split at row `n`.
pub fn hat_matrix(w: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut h = w.clone();
    let m = w.nrows() - n;
    h.rows_mut(n, m).neg_mut();
    h
}

/// The hat operator `[U; V] -> [U; -V]`.
pub fn hat_stack(w: &FactoredPoint) -> FactoredPoint {
    FactoredPoint { w: hat_matrix(&w.w, w.n), n: w.n }
}

/// Solution of `min_R ||W1 - W2 R||_F` over orthogonal `R`.
#[derive(Clone, Debug, Serialize)]
pub struct AlignmentResult {
    #[serde(skip)]
    pub rotation: DMatrix<f64>,
    pub distance: f64,
}

/// Orthogonal Procrustes on raw matrices of equal shape: with the SVD
/// `W2^T W1 = L S P^T`, the optimal rotation is `R = L P^T`.
pub fn procrustes_matrices(w1: &DMatrix<f64>, w2: &DMatrix<f64>) -> Result<AlignmentResult> {
    if w1.shape() != w2.shape() {
        return Err(shape_error("procrustes_align", w1.shape(), w2.shape()));
    }
    let cross = w2.transpose() * w1;
    let d = linalg::svd(&cross);
    let rotation = &d.u * d.v.transpose();
    let distance = (w1 - w2 * &rotation).norm();
    Ok(AlignmentResult { rotation, distance })
}

pub fn procrustes_align(w1: &FactoredPoint, w2: &FactoredPoint) -> Result<AlignmentResult> {
    if w1.n != w2.n {
        return Err(Error::Dimension {
            context: "procrustes_align",
            expected: format!("split at row {}", w1.n),
            actual: format!("split at row {}", w2.n),
        });
    }
    procrustes_matrices(&w1.w, &w2.w)
}

/// Distance between the orbits of `W1` and `W2` under the orthogonal group.
pub fn distance(w1: &DMatrix<f64>, w2: &DMatrix<f64>) -> Result<f64> {
    Ok(procrustes_matrices(w1, w2)?.distance)
}

/// How the model rank relates to the rank of the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Exact,
    Over,
    Under,
}

/// Reduced SVD `X* = Phi Sigma Psi^T` of a target matrix, plus the model rank
/// `r` used by the factorization.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    phi: DMatrix<f64>,
    sigma: Vec<f64>,
    psi: DMatrix<f64>,
    r_model: usize,
    x_star: DMatrix<f64>,
}

impl GroundTruth {
    pub fn new(phi: DMatrix<f64>, sigma: Vec<f64>, psi: DMatrix<f64>, r_model: usize) -> Result<Self> {
        let k = sigma.len();
        if k == 0 || r_model == 0 {
            return Err(Error::Validation("target rank and model rank must be positive".into()));
        }
        if phi.ncols() != k || psi.ncols() != k {
            return Err(Error::Dimension {
                context: "GroundTruth::new",
                expected: format!("{k} singular vectors"),
                actual: format!("{} and {}", phi.ncols(), psi.ncols()),
            });
        }
        if phi.nrows() < k || psi.nrows() < k {
            return Err(Error::Validation("more singular values than dimensions".into()));
        }
        if orthonormality_defect(&phi) > STRUCTURAL * (k as f64).max(1.0) * 10.0
            || orthonormality_defect(&psi) > STRUCTURAL * (k as f64).max(1.0) * 10.0
        {
            return Err(Error::Validation("singular vectors are not orthonormal".into()));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Validation("singular values must be positive and finite".into()));
        }
        if sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Validation("singular values must be nonincreasing".into()));
        }
        let x_star = &phi * DMatrix::from_diagonal(&DVector::from_vec(sigma.clone())) * psi.transpose();
        Ok(Self { phi, sigma, psi, r_model, x_star })
    }

    /// Reduced SVD of an explicit matrix; singular values below
    /// `1e-12 * sigma_1` are treated as zero.
    pub fn from_matrix(x: &DMatrix<f64>, r_model: usize) -> Result<Self> {
        let d = linalg::svd(x);
        let s1 = d.s.first().copied().unwrap_or(0.0);
        if s1 <= 0.0 {
            return Err(Error::Validation("target matrix is zero".into()));
        }
        let k = d.s.iter().filter(|s| **s > STRUCTURAL * s1).count();
        Self::new(
            d.u.columns(0, k).into_owned(),
            d.s[..k].to_vec(),
            d.v.columns(0, k).into_owned(),
            r_model,
        )
    }

    /// Square diagonal target `diag(values)`.
    pub fn diagonal(values: &[f64], r_model: usize) -> Result<Self> {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let kept: Vec<usize> = order.into_iter().filter(|&i| values[i] > 0.0).collect();
        let mut phi = DMatrix::zeros(n, kept.len());
        for (j, &i) in kept.iter().enumerate() {
            phi[(i, j)] = 1.0;
        }
        let sigma = kept.iter().map(|&i| values[i]).collect();
        Self::new(phi.clone(), sigma, phi, r_model)
    }

    /// Random orthonormal factors with a prescribed spectrum.
    pub fn with_spectrum<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        m: usize,
        spectrum: &[f64],
        r_model: usize,
    ) -> Result<Self> {
        let k = spectrum.len();
        if k > n.min(m) {
            return Err(Error::Validation(format!("rank {k} exceeds min({n}, {m})")));
        }
        let mut sigma = spectrum.to_vec();
        sigma.sort_by(|a, b| b.total_cmp(a));
        let phi = rng::random_orthonormal(rng, n, k);
        let psi = rng::random_orthonormal(rng, m, k);
        Self::new(phi, sigma, psi, r_model)
    }

    /// Random rank-`rank` target with singular values uniform in `[lo, hi]`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        m: usize,
        rank: usize,
        r_model: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        let spectrum: Vec<f64> = (0..rank).map(|_| rng::uniform(rng, lo, hi)).collect();
        Self::with_spectrum(rng, n, m, &spectrum, r_model)
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn m(&self) -> usize {
        self.psi.nrows()
    }

    /// Rank of the target.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Model (factorization) rank.
    pub fn r_model(&self) -> usize {
        self.r_model
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.sigma
    }

    /// `i`-th singular value (0-based); zero beyond the rank.
    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma.get(i).copied().unwrap_or(0.0)
    }

    pub fn x_star(&self) -> &DMatrix<f64> {
        &self.x_star
    }

    /// Spectral norm of the target.
    pub fn sigma_1(&self) -> f64 {
        self.sigma[0]
    }

    /// Smallest singular value seen by the model, `sigma_{min(r, rank)}`.
    pub fn sigma_r(&self) -> f64 {
        self.sigma[self.r_model.min(self.rank()) - 1]
    }

    pub fn kappa(&self) -> f64 {
        self.sigma_1() / self.sigma_r()
    }

    pub fn frob_norm(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn parameterization(&self) -> Parameterization {
        match self.r_model.cmp(&self.rank()) {
            std::cmp::Ordering::Equal => Parameterization::Exact,
            std::cmp::Ordering::Greater => Parameterization::Over,
            std::cmp::Ordering::Less => Parameterization::Under,
        }
    }

    /// `Q = [Phi / sqrt2; Psi / sqrt2]`, orthonormal columns spanning the
    /// column space of `W* W*^T`.
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let (n, m, k) = (self.n(), self.m(), self.rank());
        let mut q = DMatrix::zeros(n + m, k);
        q.rows_mut(0, n).copy_from(&(&self.phi * std::f64::consts::FRAC_1_SQRT_2));
        q.rows_mut(n, m).copy_from(&(&self.psi * std::f64::consts::FRAC_1_SQRT_2));
        q
    }

    /// `W* = [Phi Sigma^{1/2}; Psi Sigma^{1/2}]`, truncated to the top
    /// `min(r, rank)` components and zero-padded to `r` columns.
    pub fn w_star(&self) -> FactoredPoint {
        let (n, m, r) = (self.n(), self.m(), self.r_model);
        let k = r.min(self.rank());
        let mut w = DMatrix::zeros(n + m, r);
        for j in 0..k {
            let s = self.sigma[j].sqrt();
            w.view_mut((0, j), (n, 1)).copy_from(&(self.phi.column(j) * s));
            w.view_mut((n, j), (m, 1)).copy_from(&(self.psi.column(j) * s));
        }
        FactoredPoint { w, n }
    }

    /// `||W*||`, the spectral norm of the optimal factor.
    pub fn w_star_norm(&self) -> f64 {
        (2.0 * self.sigma_1()).sqrt()
    }

    /// `||W* W*^T||_F = 2 ||X*_r||_F` (the model-visible part of the target).
    pub fn w_star_gram_norm(&self) -> f64 {
        let k = self.r_model.min(self.rank());
        2.0 * self.sigma[..k].iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// `U* = Phi Sigma^{1/2} R`, `V* = Psi Sigma^{1/2} R`. Under- and
/// over-parameterised targets use the truncated / zero-padded optimum.
pub fn ground_truth_factor(gt: &GroundTruth, r: &DMatrix<f64>) -> Result<FactoredPoint> {
    let k = gt.r_model();
    check_shape("ground_truth_factor", r, (k, k))?;
    if orthonormality_defect(r) > STRUCTURAL * 10.0 * k as f64 {
        return Err(Error::Validation("rotation is not orthogonal".into()));
    }
    gt.w_star().rotate(r)
}
