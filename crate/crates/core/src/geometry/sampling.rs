use nalgebra::DMatrix;
use rand::Rng;

use super::regions::{RegionLabel, RegionMetrics, LARGE_RATIO, MODERATE_RATIO};
use crate::error::{Error, Result};
use crate::factored::{FactoredPoint, GroundTruth};
use crate::linalg::svd;
use crate::rng::{gaussian_matrix, random_orthogonal, random_orthonormal, uniform, unit_sphere};

/// Draw `count` points carrying `label`, by rejection sampling from a
/// region-specific proposal. At most `budget` proposals are made in total.
pub fn sample_region<R: Rng + ?Sized>(
    label: RegionLabel,
    gt: &GroundTruth,
    rng: &mut R,
    count: usize,
    budget: usize,
) -> Result<Vec<FactoredPoint>> {
    sample_with(gt, rng, count, budget, label, |gt, rng| propose(label, gt, rng))
}

/// Points in R3b whose spectral norm sits at `1.001x` the lower threshold.
pub fn sample_r3b_boundary<R: Rng + ?Sized>(
    gt: &GroundTruth,
    rng: &mut R,
    count: usize,
    budget: usize,
) -> Result<Vec<FactoredPoint>> {
    let scale = 1.001 * MODERATE_RATIO * gt.w_star_norm();
    sample_with(gt, rng, count, budget, RegionLabel::R3b, |gt, rng| rank_one_heavy(gt, rng, scale))
}

fn sample_with<R: Rng + ?Sized>(
    gt: &GroundTruth,
    rng: &mut R,
    count: usize,
    budget: usize,
    label: RegionLabel,
    mut proposal: impl FnMut(&GroundTruth, &mut R) -> DMatrix<f64>,
) -> Result<Vec<FactoredPoint>> {
    let mut out = Vec::with_capacity(count);
    let mut proposals = 0;
    while out.len() < count {
        if proposals >= budget {
            return Err(Error::Sampler(format!(
                "{} accepted {} of {count} points after {budget} proposals",
                label.name(),
                out.len()
            )));
        }
        proposals += 1;
        let w = proposal(gt, rng);
        if RegionMetrics::compute(&w, gt)?.labels().contains(&label) {
            out.push(FactoredPoint::from_stacked(w, gt.n())?);
        }
    }
    Ok(out)
}

fn rotated_optimum<R: Rng + ?Sized>(gt: &GroundTruth, rng: &mut R) -> DMatrix<f64> {
    gt.w_star().into_stacked() * random_orthogonal(rng, gt.r_model())
}

fn propose<R: Rng + ?Sized>(label: RegionLabel, gt: &GroundTruth, rng: &mut R) -> DMatrix<f64> {
    let (rows, r) = (gt.n() + gt.m(), gt.r_model());
    let radius = gt.sigma_r().sqrt();
    match label {
        RegionLabel::R1 => {
            let t: f64 = rng.random();
            rotated_optimum(gt, rng) + unit_sphere(rng, rows, r) * (t * radius)
        }
        RegionLabel::R2 => {
            // Rank-deficient perturbation: shrink the smallest singular value.
            let t = uniform(rng, 0.0, 2.0);
            let w = if rng.random::<f64>() < 0.2 {
                unit_sphere(rng, rows, r) * (t * radius)
            } else {
                rotated_optimum(gt, rng) + unit_sphere(rng, rows, r) * (t * radius)
            };
            let mut d = svd(&w);
            let last = d.s.len() - 1;
            d.s[last] = rng.random::<f64>() * std::f64::consts::FRAC_1_SQRT_2 * radius;
            d.recompose()
        }
        RegionLabel::R3a => {
            let t: f64 = rng.random();
            rotated_optimum(gt, rng) + unit_sphere(rng, rows, r) * (radius * (1.0 + 2.0 * t))
        }
        RegionLabel::R3b => {
            let lo = MODERATE_RATIO * gt.w_star_norm();
            let hi = (LARGE_RATIO * gt.w_star_gram_norm()).sqrt();
            let s = uniform(rng, lo, hi.max(lo));
            rank_one_heavy(gt, rng, s)
        }
        RegionLabel::R3c => {
            let g = gaussian_matrix(rng, rows, r);
            let gram = (&g * g.transpose()).norm();
            let exponent = uniform(rng, LARGE_RATIO.ln() * 1.0001, 100f64.ln());
            g * (exponent.exp() * gt.w_star_gram_norm() / gram).sqrt()
        }
    }
}

/// `s x y^T` plus a small random remainder, so that `||W||` is close to `s`
/// while `||W W^T||_F` stays close to `s^2`.
fn rank_one_heavy<R: Rng + ?Sized>(gt: &GroundTruth, rng: &mut R, s: f64) -> DMatrix<f64> {
    let (rows, r) = (gt.n() + gt.m(), gt.r_model());
    let x = random_orthonormal(rng, rows, 1);
    let y = random_orthonormal(rng, r, 1);
    let noise = unit_sphere(rng, rows, r) * (uniform(rng, 0.0, 0.05) * s);
    let w = &x * y.transpose() * s + noise;
    let top = svd(&w).s[0];
    w * (s / top)
}
