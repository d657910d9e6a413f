use std::sync::Arc;

use lowrank_core::geometry::{
    build_critical_point, certify_point, check_large_gradient, check_negative_curvature, check_regularity,
    classify_regions, enumerate_critical_points, min_hessian_eig, min_hessian_eig_with, negative_direction,
    sample_r3b_boundary, sample_region, strict_saddle_audit, CertificateConstants, CriticalKind, EigMode,
    IterativeOptions, RegionLabel, RegionMetrics, LARGE_RATIO, MODERATE_RATIO,
};
use lowrank_core::objectives::{Factorization, GeneralObjective, Objective};
use lowrank_core::rng::{gaussian_matrix, random_orthogonal, stream_rng, uniform};
use lowrank_core::sensing::{gaussian_ensemble, SensingLoss};
use lowrank_core::tolerances::SAMPLER_BUDGET;
use lowrank_core::{distance, Error, FactoredPoint, GroundTruth};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random_gt(seed: u64) -> GroundTruth {
    GroundTruth::random(&mut stream_rng(seed, 0), 6, 5, 2, 2, 1.0, 3.0).unwrap()
}

#[test]
fn region_examples() {
    let gt = random_gt(1);
    let ws = gt.w_star();
    assert!(classify_regions(&ws, &gt).unwrap().contains(&RegionLabel::R1));
    assert!(classify_regions(&FactoredPoint::zeros(6, 5, 2), &gt).unwrap().contains(&RegionLabel::R2));
    let big = ws.scaled(10.0);
    assert!(classify_regions(&big, &gt).unwrap().contains(&RegionLabel::R3c));
    let g = Factorization::new(&gt, 0.5).unwrap();
    let checks = check_large_gradient(big.stacked(), &g, &gt, &CertificateConstants::FACTORIZATION).unwrap();
    assert!(checks.iter().any(|c| c.label == RegionLabel::R3c && c.passed && c.grad_norm > c.bound));
}

#[test]
fn factorization_certificates_hold_on_sampled_points() {
    let mut failures = 0;
    for k in 0..2u64 {
        let gt = random_gt(10 + k);
        let g = Factorization::new(&gt, 0.5).unwrap();
        let mut rng = stream_rng(20 + k, 0);
        for label in RegionLabel::ALL {
            for p in sample_region(label, &gt, &mut rng, 100, SAMPLER_BUDGET).unwrap() {
                let cert = certify_point(p.stacked(), &g, &gt, &CertificateConstants::FACTORIZATION).unwrap();
                assert!(cert.labels.contains(&label));
                failures += usize::from(!cert.passed);
            }
        }
    }
    assert_eq!(failures, 0);
}

#[test]
fn boundary_adjacent_r3b_points_pass() {
    let gt = random_gt(3);
    let g = Factorization::new(&gt, 0.5).unwrap();
    let pts = sample_r3b_boundary(&gt, &mut stream_rng(4, 0), 50, SAMPLER_BUDGET).unwrap();
    for p in pts {
        let checks = check_large_gradient(p.stacked(), &g, &gt, &CertificateConstants::FACTORIZATION).unwrap();
        assert!(checks.iter().all(|c| c.passed));
    }
}

#[test]
fn regularity_is_tight_at_the_optimum_and_recomputes() {
    let gt = random_gt(5);
    let g = Factorization::new(&gt, 0.5).unwrap();
    let mut rng = stream_rng(6, 0);
    for p in sample_region(RegionLabel::R1, &gt, &mut rng, 20, SAMPLER_BUDGET).unwrap() {
        let c = check_regularity(p.stacked(), &g, &gt, &CertificateConstants::FACTORIZATION).unwrap();
        // Recompute the stored margin from scratch.
        let d = distance(p.stacked(), gt.w_star().stacked()).unwrap();
        let grad = g.gradient(p.stacked()).unwrap();
        let rhs = gt.sigma_r() / 32.0 * d * d + grad.norm_squared() / (48.0 * gt.sigma_1());
        assert!((c.rhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
        assert!(c.passed);
    }
}

#[test]
fn negative_curvature_at_the_origin_of_a_diagonal_target() {
    let gt = GroundTruth::diagonal(&[2.0, 1.0], 2).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    let zero = DMatrix::zeros(4, 2);
    let dir = negative_direction(&zero, &gt).unwrap();
    assert!((dir.norm() - 1.0).abs() < 1e-12);
    let c = check_negative_curvature(&zero, &g, &gt, &CertificateConstants::FACTORIZATION).unwrap();
    assert!(c.rayleigh <= -0.25 + 1e-12 && c.passed);
    assert!(c.lambda_min.unwrap() <= c.rayleigh + 1e-12);
    let outside = gt.w_star().into_stacked();
    assert!(matches!(negative_direction(&outside, &gt), Err(Error::Domain(_))));
}

#[test]
fn sensing_curvature_with_a_well_conditioned_operator() {
    // With enough measurements the sensing Hessian is close to the
    // factorization Hessian and the weaker sensing constant applies.
    let gt = GroundTruth::diagonal(&[1.0, 1.0], 2).unwrap();
    let op = Arc::new(gaussian_ensemble(2, 2, 20_000, 3).unwrap());
    let loss = Arc::new(SensingLoss::from_target(op, gt.x_star()).unwrap().with_gram());
    let big = GeneralObjective::sensing(loss, 2, 0.5).unwrap();
    let mut rng = stream_rng(8, 0);
    for p in sample_region(RegionLabel::R2, &gt, &mut rng, 50, SAMPLER_BUDGET).unwrap() {
        let c = check_negative_curvature(p.stacked(), &big, &gt, &CertificateConstants::SENSING).unwrap();
        assert!(c.passed, "{c:?}");
    }
}

#[test]
fn certificates_require_half() {
    let gt = random_gt(9);
    let g = Factorization::new(&gt, 0.3).unwrap();
    let w = gt.w_star().into_stacked();
    assert!(check_regularity(&w, &g, &gt, &CertificateConstants::FACTORIZATION).is_err());
}

#[test]
fn critical_point_theory_on_diagonal_and_random_spectra() {
    let mut cases = vec![GroundTruth::diagonal(&[2.0, 1.0], 2).unwrap()];
    let mut rng = stream_rng(12, 0);
    for r in 1..=3 {
        cases.push(GroundTruth::random(&mut rng, 5, 4, r, r, 0.5, 3.0).unwrap());
    }
    // over- and under-parameterised
    cases.push(GroundTruth::random(&mut rng, 5, 4, 1, 2, 0.5, 3.0).unwrap());
    cases.push(GroundTruth::diagonal(&[3.0, 2.0, 1.0], 1).unwrap());
    for gt in &cases {
        let points = enumerate_critical_points(gt).unwrap();
        assert_eq!(points.iter().filter(|c| c.kind == CriticalKind::GlobalMin).count(), 1);
        for cp in &points {
            let audit = strict_saddle_audit(cp, gt).unwrap();
            assert!(audit.passed, "{audit:?}");
            assert!(audit.grad_norm <= 1e-10 && audit.balance_gap <= 1e-10);
        }
    }
}

#[test]
fn rotated_critical_points_are_still_critical() {
    let gt = random_gt(14);
    let rot = random_orthogonal(&mut stream_rng(15, 0), 2);
    for mask in [vec![], vec![0], vec![1], vec![0, 1]] {
        let cp = build_critical_point(&gt, &mask, &rot).unwrap();
        assert!(strict_saddle_audit(&cp, &gt).unwrap().passed);
    }
    let not_orthogonal = DMatrix::from_element(2, 2, 1.0);
    assert!(build_critical_point(&gt, &[0], &not_orthogonal).is_err());
}

#[test]
fn over_parameterised_saddle_bound() {
    let gt = GroundTruth::diagonal(&[1.5], 2).unwrap();
    let saddle = build_critical_point(&gt, &[], &DMatrix::identity(2, 2)).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    let lam = min_hessian_eig(&g, saddle.point.stacked()).unwrap().lambda_min;
    assert!(lam <= -1.5 + 1e-8);
}

#[test]
fn iterative_and_dense_eigensolvers_agree() {
    let gt = random_gt(16);
    let g = Factorization::new(&gt, 0.5).unwrap();
    let w = gaussian_matrix(&mut stream_rng(17, 0), 11, 2) * 0.3;
    let dense = min_hessian_eig_with(&g, &w, EigMode::Exact, IterativeOptions::default()).unwrap();
    let iter = min_hessian_eig_with(&g, &w, EigMode::Iterative, IterativeOptions::default()).unwrap();
    assert!((dense.lambda_min - iter.lambda_min).abs() <= 1e-6 * dense.lambda_min.abs().max(1.0));
    let rq = g.hessian_form(&w, &iter.direction).unwrap() / iter.direction.norm_squared();
    assert!((rq - iter.lambda_min).abs() <= 1e-6 * iter.lambda_min.abs().max(1.0));
}

/// The regions leave exactly one band unlabelled: `||W|| <= (20/19)||W*||`
/// with `20/19 < ||W W^T||_F / ||W* W*^T||_F <= 10/9`.
fn in_uncovered_band(m: &RegionMetrics) -> bool {
    let gram = m.gram_norm / m.opt_gram_norm;
    m.spectral_norm <= MODERATE_RATIO * m.opt_norm && gram > MODERATE_RATIO && gram <= LARGE_RATIO
}

#[test]
fn region_cover_over_many_scales() {
    let gt = random_gt(18);
    let mut rng = stream_rng(19, 0);
    let mut unlabelled = 0;
    for _ in 0..2000 {
        let scale = 10f64.powf(uniform(&mut rng, -2.0, 2.0));
        let w = gaussian_matrix(&mut rng, 11, 2) * scale;
        let m = RegionMetrics::compute(&w, &gt).unwrap();
        if m.labels().is_empty() {
            assert!(in_uncovered_band(&m));
            unlabelled += 1;
        }
    }
    assert!(unlabelled <= 5, "{unlabelled} unlabelled points");
}

#[test]
fn uncovered_band_is_nonempty() {
    // [t U*; -t V*] is balanced, far from the optimal orbit and well
    // conditioned; t^2 = 1.08 puts its Gram ratio above 20/19 while its
    // spectral ratio t stays below 20/19.
    let gt = random_gt(20);
    let t = 1.08f64.sqrt();
    let mut w = gt.w_star().into_stacked() * t;
    let n = gt.n();
    let m_rows = w.nrows() - n;
    w.rows_mut(n, m_rows).neg_mut();
    let m = RegionMetrics::compute(&w, &gt).unwrap();
    assert!(m.labels().is_empty(), "{:?}", m.labels());
    assert!(in_uncovered_band(&m));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn unlabelled_points_lie_in_the_uncovered_band(seed in 0u64..1_000_000, log_scale in -2.0f64..2.0) {
        let mut rng = stream_rng(seed, 0);
        let gt = GroundTruth::random(&mut rng, 4, 3, 2, 2, 0.5, 3.0).unwrap();
        let p = FactoredPoint::from_stacked(gaussian_matrix(&mut rng, 7, 2) * 10f64.powf(log_scale), 4).unwrap();
        let m = RegionMetrics::compute(p.stacked(), &gt).unwrap();
        prop_assert_eq!(classify_regions(&p, &gt).unwrap().is_empty(), m.labels().is_empty());
        prop_assert!(!m.labels().is_empty() || in_uncovered_band(&m));
    }

    #[test]
    fn distance_is_invariant_under_rotations(seed in 0u64..1_000_000) {
        let mut rng = stream_rng(seed, 0);
        let a = gaussian_matrix(&mut rng, 7, 3);
        let b = gaussian_matrix(&mut rng, 7, 3);
        let r1 = random_orthogonal(&mut rng, 3);
        let r2 = random_orthogonal(&mut rng, 3);
        let d = distance(&a, &b).unwrap();
        let rotated = distance(&(&a * r1), &(&b * r2)).unwrap();
        prop_assert!((d - rotated).abs() <= 1e-10 * d.max(1.0));
        prop_assert!(d <= (&a - &b).norm() + 1e-12);
    }
}
