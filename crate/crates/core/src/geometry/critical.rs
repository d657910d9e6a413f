use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::hessian::min_hessian_eig;
use crate::error::{check_shape, Error, Result};
use crate::factored::{FactoredPoint, GroundTruth, Parameterization};
use crate::linalg::{self, bottom_eigenvector, orthonormality_defect};
use crate::objectives::{Factorization, Objective};
use crate::tolerances::{CRITICAL_GRAD, DERIVED, ENUMERATION_CAP, STRUCTURAL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    GlobalMin,
    StrictSaddle,
}

/// Critical point of the factorization objective `g` (at `mu = 1/2`):
/// `U = Phi_S Sigma_S^{1/2} R`, `V = Psi_S Sigma_S^{1/2} R` for a selected
/// subset `S` of the spectrum, zero-padded to `r` columns.
#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub point: FactoredPoint,
    /// Selected spectrum indices (0-based, increasing).
    pub mask: Vec<usize>,
    pub rotation: DMatrix<f64>,
    pub kind: CriticalKind,
    /// Upper bound on `lambda_min` promised for saddles; 0 for minima.
    pub curvature_bound: f64,
}

fn normalise_mask(mask: &[usize]) -> Vec<usize> {
    let mut sorted = mask.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
}

/// Build the critical point selected by `mask`.
pub fn build_critical_point(gt: &GroundTruth, mask: &[usize], rotation: &DMatrix<f64>) -> Result<CriticalPoint> {
    let (n, m, r, k) = (gt.n(), gt.m(), gt.r_model(), gt.rank());
    check_shape("build_critical_point", rotation, (r, r))?;
    if orthonormality_defect(rotation) > STRUCTURAL * 10.0 * r as f64 {
        return Err(Error::Validation("rotation is not orthogonal".into()));
    }
    let mask = normalise_mask(mask);
    if mask.len() != mask.iter().filter(|&&i| i < k).count() {
        return Err(Error::Validation(format!("mask {mask:?} indexes beyond the rank {k}")));
    }
    let param = gt.parameterization();
    if param == Parameterization::Under {
        if mask.len() > r {
            return Err(Error::Validation(format!("mask selects {} components for rank {r}", mask.len())));
        }
        if gt.sigma(r - 1) <= gt.sigma(r) * (1.0 + STRUCTURAL) {
            return Err(Error::DegenerateSpectrum(format!(
                "sigma_r = sigma_(r+1) = {}; the optimal set is not unique",
                gt.sigma(r)
            )));
        }
    }

    let mut w = DMatrix::zeros(n + m, r);
    for (slot, &i) in mask.iter().enumerate() {
        let s = gt.sigma(i).sqrt();
        w.view_mut((0, slot), (n, 1)).copy_from(&(gt.phi().column(i) * s));
        w.view_mut((n, slot), (m, 1)).copy_from(&(gt.psi().column(i) * s));
    }
    let point = FactoredPoint::from_stacked(w * rotation, n)?;

    let top = r.min(k);
    let global = mask.len() == top && mask.iter().enumerate().all(|(j, &i)| i == j);
    let (kind, curvature_bound) = if global {
        (CriticalKind::GlobalMin, 0.0)
    } else {
        let bound = match param {
            Parameterization::Exact => -gt.sigma_r(),
            Parameterization::Over => -gt.sigma(k - 1),
            Parameterization::Under => -(gt.sigma(r - 1) - gt.sigma(r)),
        };
        (CriticalKind::StrictSaddle, bound)
    };

    let g = Factorization::new(gt, 0.5)?;
    let grad = g.gradient(point.stacked())?.norm();
    if grad > CRITICAL_GRAD * gt.sigma_1().max(1.0).powf(1.5) {
        return Err(Error::StalePoint(grad));
    }
    Ok(CriticalPoint { point, mask, rotation: rotation.clone(), kind, curvature_bound })
}

/// Every critical point with `R = I`: all subsets of the spectrum
/// (exact/over-parameterised) or all subsets of size at most `r`
/// (under-parameterised).
pub fn enumerate_critical_points(gt: &GroundTruth) -> Result<Vec<CriticalPoint>> {
    let k = gt.rank();
    if k > ENUMERATION_CAP {
        return Err(Error::Resource(format!("rank {k} exceeds enumeration cap {ENUMERATION_CAP}")));
    }
    let r = gt.r_model();
    let id = DMatrix::identity(r, r);
    (0u32..(1u32 << k))
        .map(|bits| (0..k).filter(|i| bits & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|mask| mask.len() <= r)
        .map(|mask| build_critical_point(gt, &mask, &id))
        .collect()
}

/// Outcome of auditing one critical point with the explicit directions.
#[derive(Clone, Debug, Serialize)]
pub struct SaddleAudit {
    pub kind: CriticalKind,
    pub mask: Vec<usize>,
    pub grad_norm: f64,
    pub balance_gap: f64,
    pub lambda_min: f64,
    pub curvature_bound: f64,
    /// Quadratic form along the explicit escape direction (saddles).
    pub direction_form: Option<f64>,
    pub direction_norm_sq: Option<f64>,
    pub expected_form: Option<f64>,
    /// `-1/2 ||W W^T - W* W*^T||` (exact parameterisation only).
    pub gap_bound: Option<f64>,
    /// Quadratic forms along `W (e_j e_i^T - e_i e_j^T)` (minima).
    pub flat_forms: Vec<f64>,
    pub passed: bool,
}

/// Explicit escape direction for a saddle: `Delta = [phi_k; psi_k] a^T` with
/// `k` the first unselected component below `r` and `a` the bottom
/// eigenvector of `U^T U`. Returns the direction and the expected quadratic
/// form `-2 (sigma_k - lambda_min(U^T U))`.
fn escape_direction(cp: &CriticalPoint, gt: &GroundTruth) -> Result<(DMatrix<f64>, f64)> {
    let (n, m) = (gt.n(), gt.m());
    let limit = gt.r_model().min(gt.rank());
    let k = (0..limit)
        .find(|i| !cp.mask.contains(i))
        .ok_or_else(|| Error::Domain("critical point selects the full top spectrum".into()))?;
    let u = cp.point.u();
    let (floor, a) = bottom_eigenvector(&(u.transpose() * &u));
    let mut q = DVector::zeros(n + m);
    q.rows_mut(0, n).copy_from(&gt.phi().column(k));
    q.rows_mut(n, m).copy_from(&gt.psi().column(k));
    Ok((q * a.transpose(), -2.0 * (gt.sigma(k) - floor.max(0.0))))
}

pub fn strict_saddle_audit(cp: &CriticalPoint, gt: &GroundTruth) -> Result<SaddleAudit> {
    let g = Factorization::new(gt, 0.5)?;
    let w = cp.point.stacked();
    let grad_norm = g.gradient(w)?.norm();
    if grad_norm > CRITICAL_GRAD * gt.sigma_1().max(1.0).powf(1.5) {
        return Err(Error::StalePoint(grad_norm));
    }
    let balance_gap = cp.point.gram_gap().norm();
    let lambda_min = min_hessian_eig(&g, w)?.lambda_min;
    let scale = gt.sigma_1().max(1.0);
    let mut audit = SaddleAudit {
        kind: cp.kind,
        mask: cp.mask.clone(),
        grad_norm,
        balance_gap,
        lambda_min,
        curvature_bound: cp.curvature_bound,
        direction_form: None,
        direction_norm_sq: None,
        expected_form: None,
        gap_bound: None,
        flat_forms: Vec::new(),
        passed: balance_gap <= DERIVED * scale,
    };
    match cp.kind {
        CriticalKind::StrictSaddle => {
            let (dir, expected) = escape_direction(cp, gt)?;
            let form = g.hessian_form(w, &dir)?;
            let norm_sq = dir.norm_squared();
            audit.passed &= (form - expected).abs() <= 1e-8 * scale && (norm_sq - 2.0).abs() <= 1e-8;
            audit.passed &= lambda_min <= cp.curvature_bound + 1e-8;
            if gt.parameterization() == Parameterization::Exact {
                let ws = gt.w_star().into_stacked();
                let gap = w * w.transpose() - &ws * ws.transpose();
                let bound = -0.5 * linalg::spectral_norm(&gap);
                audit.passed &= lambda_min <= bound + 1e-8;
                audit.gap_bound = Some(bound);
            }
            audit.direction_form = Some(form);
            audit.direction_norm_sq = Some(norm_sq);
            audit.expected_form = Some(expected);
        }
        CriticalKind::GlobalMin => {
            let r = gt.r_model();
            for i in 0..r {
                for j in (i + 1)..r {
                    let mut skew = DMatrix::zeros(r, r);
                    skew[(j, i)] = 1.0;
                    skew[(i, j)] = -1.0;
                    let form = g.hessian_form(w, &(w * skew))?;
                    audit.passed &= form.abs() <= DERIVED * scale;
                    audit.flat_forms.push(form);
                }
            }
            audit.passed &= lambda_min >= -1e-8 * scale;
        }
    }
    Ok(audit)
}
