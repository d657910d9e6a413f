use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::Serialize;

use super::hessian::min_hessian_eig;
use super::regions::{RegionLabel, RegionMetrics};
use crate::error::{check_shape, Error, Result};
use crate::factored::{procrustes_matrices, GroundTruth, Parameterization};
use crate::linalg::{self, bottom_eigenvector};
use crate::objectives::{Objective, ObjectiveKind};
use crate::tolerances::{CERTIFICATE, DENSE_HESSIAN_CAP};

/// Constants of the robust strict saddle inequalities for one objective
/// family, all at `mu = 1/2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CertificateConstants {
    /// `alpha = alpha_factor * sigma_r(X*)`.
    pub alpha_factor: f64,
    /// `beta = beta_factor / ||X*||`.
    pub beta_factor: f64,
    /// Curvature bound `-curvature_factor * sigma_r(X*)`.
    pub curvature_factor: f64,
    /// `||grad|| >= c * sigma_r^{3/2}` on R3a.
    pub r3a_factor: f64,
    /// `||grad|| > c * ||W||^3` on R3b.
    pub r3b_factor: f64,
    /// `||grad|| > c * ||W W^T||_F^{3/2}` on R3c.
    pub r3c_factor: f64,
}

impl CertificateConstants {
    /// Matrix factorization.
    pub const FACTORIZATION: Self = Self {
        alpha_factor: 1.0 / 32.0,
        beta_factor: 1.0 / 48.0,
        curvature_factor: 1.0 / 4.0,
        r3a_factor: 1.0 / 10.0,
        r3b_factor: 39.0 / 800.0,
        r3c_factor: 1.0 / 20.0,
    };

    /// Restricted strongly convex losses (matrix sensing), valid once the
    /// deviation constant passes [`SensingGate`].
    pub const SENSING: Self = Self {
        alpha_factor: 1.0 / 16.0,
        beta_factor: 1.0 / 260.0,
        curvature_factor: 1.0 / 6.0,
        r3a_factor: 1.0 / 27.0,
        r3b_factor: 1.0 / 50.0,
        r3c_factor: 1.0 / 45.0,
    };

    pub fn for_kind(kind: ObjectiveKind) -> Result<Self> {
        match kind {
            ObjectiveKind::Factorization => Ok(Self::FACTORIZATION),
            ObjectiveKind::Sensing | ObjectiveKind::General => Ok(Self::SENSING),
            other => Err(Error::Validation(format!("no landscape certificate for {other:?} objectives"))),
        }
    }

    pub fn alpha(&self, gt: &GroundTruth) -> f64 {
        self.alpha_factor * gt.sigma_r()
    }

    pub fn beta(&self, gt: &GroundTruth) -> f64 {
        self.beta_factor / gt.sigma_1()
    }

    fn large_gradient_bound(&self, label: RegionLabel, metrics: &RegionMetrics, gt: &GroundTruth) -> Option<f64> {
        match label {
            RegionLabel::R3a => Some(self.r3a_factor * gt.sigma_r().powf(1.5)),
            RegionLabel::R3b => Some(self.r3b_factor * metrics.spectral_norm.powi(3)),
            RegionLabel::R3c => Some(self.r3c_factor * metrics.gram_norm.powf(1.5)),
            _ => None,
        }
    }
}

/// The certificates are only derived for `mu = 1/2`.
fn require_half(obj: &dyn Objective) -> Result<()> {
    match obj.mu() {
        Some(mu) if (mu - 0.5).abs() <= f64::EPSILON => Ok(()),
        other => Err(Error::Validation(format!("landscape certificates require mu = 1/2, objective has {other:?}"))),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegularityCheck {
    /// `<grad h(W), W - W* R>`.
    pub lhs: f64,
    /// `alpha dist^2 + beta ||grad h(W)||_F^2`.
    pub rhs: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dist: f64,
    pub grad_norm: f64,
    pub passed: bool,
}

/// Local regularity inequality at `W` (meaningful inside R1).
pub fn check_regularity(
    w: &DMatrix<f64>,
    obj: &dyn Objective,
    gt: &GroundTruth,
    constants: &CertificateConstants,
) -> Result<RegularityCheck> {
    require_half(obj)?;
    let w_star = gt.w_star();
    check_shape("check_regularity", w, w_star.stacked().shape())?;
    let al = procrustes_matrices(w, w_star.stacked())?;
    let grad = obj.gradient(w)?;
    let lhs = grad.dot(&(w - w_star.stacked() * &al.rotation));
    let (alpha, beta) = (constants.alpha(gt), constants.beta(gt));
    let grad_norm = grad.norm();
    let rhs = alpha * al.distance * al.distance + beta * grad_norm * grad_norm;
    Ok(RegularityCheck { lhs, rhs, alpha, beta, dist: al.distance, grad_norm, passed: lhs >= rhs - CERTIFICATE })
}

/// Unit direction of negative curvature for `W` with
/// `sigma_r(W) <= sqrt(sigma_r(X*) / 2)`.
///
/// With `Q = [Phi; Psi] / sqrt2`, take `q = Q l` where `l` is the left
/// singular vector of `Q^T W` for its smallest singular value, and `a` the
/// bottom eigenvector of `W^T W`; the direction is `q a^T`. Then
/// `<W W^T, q q^T> <= sigma_r(W)^2`, `<W* W*^T, q q^T> >= 2 sigma_r(X*)` and
/// the regularizer term vanishes, so the quadratic form of `g` along it is
/// at most `-sigma_r(X*) / 4`.
pub fn negative_direction(w: &DMatrix<f64>, gt: &GroundTruth) -> Result<DMatrix<f64>> {
    if gt.parameterization() != Parameterization::Exact {
        return Err(Error::Domain("negative-curvature direction needs an exactly parameterised target".into()));
    }
    let (n, m, r) = (gt.n(), gt.m(), gt.r_model());
    check_shape("negative_direction", w, (n + m, r))?;
    let sigma_r_w = linalg::smallest_singular_value(w);
    let limit = (0.5 * gt.sigma_r()).sqrt();
    if sigma_r_w > limit * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("sigma_r(W) = {sigma_r_w:.6e} exceeds (sigma_r/2)^(1/2) = {limit:.6e}")));
    }
    let q_mat = gt.q_matrix();
    let proj = q_mat.transpose() * w;
    let d = linalg::svd(&proj);
    let l = d.u.column(d.u.ncols() - 1).into_owned();
    let q = &q_mat * l;
    let (_, a) = bottom_eigenvector(&(w.transpose() * w));
    Ok(q * a.transpose())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CurvatureCheck {
    /// Rayleigh quotient along the constructed direction.
    pub rayleigh: f64,
    /// Exact smallest Hessian eigenvalue, when the dense Hessian is affordable.
    pub lambda_min: Option<f64>,
    pub bound: f64,
    pub passed: bool,
}

pub fn check_negative_curvature(
    w: &DMatrix<f64>,
    obj: &dyn Objective,
    gt: &GroundTruth,
    constants: &CertificateConstants,
) -> Result<CurvatureCheck> {
    require_half(obj)?;
    let dir = negative_direction(w, gt)?;
    let rayleigh = obj.hessian_form(w, &dir)? / dir.norm_squared();
    let (rows, cols) = obj.shape();
    let lambda_min = if rows * cols <= DENSE_HESSIAN_CAP { Some(min_hessian_eig(obj, w)?.lambda_min) } else { None };
    let bound = -constants.curvature_factor * gt.sigma_r();
    Ok(CurvatureCheck { rayleigh, lambda_min, bound, passed: rayleigh <= bound + CERTIFICATE })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LargeGradientCheck {
    pub label: RegionLabel,
    pub grad_norm: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Large-gradient inequality for every R3 label of `W`.
pub fn check_large_gradient(
    w: &DMatrix<f64>,
    obj: &dyn Objective,
    gt: &GroundTruth,
    constants: &CertificateConstants,
) -> Result<Vec<LargeGradientCheck>> {
    require_half(obj)?;
    let metrics = RegionMetrics::compute(w, gt)?;
    let grad_norm = obj.gradient(w)?.norm();
    Ok(metrics
        .labels()
        .into_iter()
        .filter_map(|label| {
            constants.large_gradient_bound(label, &metrics, gt).map(|bound| LargeGradientCheck {
                label,
                grad_norm,
                bound,
                passed: grad_norm >= bound - CERTIFICATE,
            })
        })
        .collect())
}

/// Deviation-constant thresholds under which the sensing constants are
/// derived. `c` is the normalised constant `(b - a) / (a + b)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SensingGate {
    pub c_hat: f64,
    /// `1/50`, for the regularity and R3c inequalities.
    pub regularity_threshold: f64,
    /// `sigma_r / (50 ||X*||_F)`.
    pub curvature_threshold: f64,
    /// `sigma_r^{3/2} / (100 ||X*||_F ||X*||^{1/2})`, for R3a and R3b.
    pub large_gradient_threshold: f64,
    pub regularity_ok: bool,
    pub curvature_ok: bool,
    pub large_gradient_ok: bool,
    pub passed: bool,
}

impl SensingGate {
    pub fn evaluate(c_hat: f64, gt: &GroundTruth) -> Self {
        let (sr, frob, s1) = (gt.sigma_r(), gt.frob_norm(), gt.sigma_1());
        let regularity_threshold = 1.0 / 50.0;
        let curvature_threshold = sr / (50.0 * frob);
        let large_gradient_threshold = sr.powf(1.5) / (100.0 * frob * s1.sqrt());
        let regularity_ok = c_hat <= regularity_threshold;
        let curvature_ok = c_hat <= curvature_threshold;
        let large_gradient_ok = c_hat <= large_gradient_threshold && c_hat <= regularity_threshold;
        Self {
            c_hat,
            regularity_threshold,
            curvature_threshold,
            large_gradient_threshold,
            regularity_ok,
            curvature_ok,
            large_gradient_ok,
            passed: regularity_ok && curvature_ok && large_gradient_ok,
        }
    }
}

/// Per-point record: labels, every applicable inequality, overall verdict.
#[derive(Clone, Debug, Serialize)]
pub struct GeometryCertificate {
    pub labels: BTreeSet<RegionLabel>,
    pub metrics: RegionMetrics,
    pub constants: CertificateConstants,
    pub regularity: Option<RegularityCheck>,
    pub curvature: Option<CurvatureCheck>,
    pub large_gradient: Vec<LargeGradientCheck>,
    pub passed: bool,
}

/// Evaluate every inequality that applies to the labels of `W`.
pub fn certify_point(
    w: &DMatrix<f64>,
    obj: &dyn Objective,
    gt: &GroundTruth,
    constants: &CertificateConstants,
) -> Result<GeometryCertificate> {
    let metrics = RegionMetrics::compute(w, gt)?;
    let labels = metrics.labels();
    let regularity =
        if labels.contains(&RegionLabel::R1) { Some(check_regularity(w, obj, gt, constants)?) } else { None };
    let curvature =
        if labels.contains(&RegionLabel::R2) { Some(check_negative_curvature(w, obj, gt, constants)?) } else { None };
    let large_gradient = check_large_gradient(w, obj, gt, constants)?;
    let passed = regularity.map_or(true, |c| c.passed)
        && curvature.map_or(true, |c| c.passed)
        && large_gradient.iter().all(|c| c.passed);
    Ok(GeometryCertificate { labels, metrics, constants: *constants, regularity, curvature, large_gradient, passed })
}
