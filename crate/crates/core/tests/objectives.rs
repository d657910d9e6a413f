use std::sync::Arc;

use approx::assert_relative_eq;
use lowrank_core::objectives::{
    Factorization, GeneralObjective, HalfSquaredDistance, Objective, Regularizer, WeightedPca, WeightedQuadratic,
};
use lowrank_core::rng::{gaussian_matrix, stream_rng, uniform};
use lowrank_core::sensing::{gaussian_ensemble, SensingLoss};
use lowrank_core::verify::fd_check;
use lowrank_core::{FactoredPoint, GroundTruth};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn every_kind(seed: u64, n: usize, m: usize, r: usize) -> Vec<Box<dyn Objective>> {
    let mut rng = stream_rng(seed, 0);
    let gt = GroundTruth::random(&mut rng, n, m, r, r, 0.5, 2.0).unwrap();
    let x_star = gt.x_star().clone();
    let omega = DMatrix::from_fn(n, m, |_, _| uniform(&mut rng, 0.5, 1.5));
    let op = Arc::new(gaussian_ensemble(n, m, 6 * n * m, seed).unwrap());
    let sym = {
        let b = gaussian_matrix(&mut rng, n, r);
        &b * b.transpose()
    };
    let pca_weights = DMatrix::from_fn(n, n, |i, j| 1.0 + 0.5 * ((i + j) % 3) as f64);
    vec![
        Box::new(Regularizer::new(n, m, r, 0.5).unwrap()),
        Box::new(Factorization::new(&gt, 0.5).unwrap()),
        Box::new(
            GeneralObjective::new(Arc::new(WeightedQuadratic::new(&omega, x_star.clone()).unwrap()), r, 0.5).unwrap(),
        ),
        Box::new(
            GeneralObjective::sensing(Arc::new(SensingLoss::from_target(op, &x_star).unwrap()), r, 0.5).unwrap(),
        ),
        Box::new(WeightedPca::new(pca_weights, sym, r).unwrap()),
    ]
}

#[test]
fn derivatives_match_finite_differences_for_every_kind() {
    for trial in 0..20u64 {
        let mut rng = stream_rng(1000 + trial, 1);
        let n = rng.random_range(4..=8);
        let m = rng.random_range(3..=6);
        let r = rng.random_range(1..=3);
        for obj in every_kind(trial, n, m, r) {
            let (rows, cols) = obj.shape();
            let w = gaussian_matrix(&mut rng, rows, cols);
            let e1 = fd_check(obj.as_ref(), &w, 1, trial).unwrap();
            let e2 = fd_check(obj.as_ref(), &w, 2, trial).unwrap();
            assert!(e1 <= 1e-6, "{:?} order-1 error {e1:e}", obj.kind());
            assert!(e2 <= 1e-4, "{:?} order-2 error {e2:e}", obj.kind());
        }
    }
}

#[test]
fn hessian_vector_product_agrees_with_bilinear_form() {
    let mut rng = stream_rng(7, 0);
    for obj in every_kind(7, 5, 4, 2) {
        let (rows, cols) = obj.shape();
        let w = gaussian_matrix(&mut rng, rows, cols);
        let d1 = gaussian_matrix(&mut rng, rows, cols);
        let d2 = gaussian_matrix(&mut rng, rows, cols);
        let via_product = obj.hessian_vector(&w, &d1).unwrap().dot(&d2);
        let direct = obj.hessian_bilinear(&w, &d1, &d2).unwrap();
        assert_relative_eq!(via_product, direct, epsilon = 1e-10, max_relative = 1e-10);
        let swapped = obj.hessian_bilinear(&w, &d2, &d1).unwrap();
        assert_relative_eq!(direct, swapped, epsilon = 1e-10, max_relative = 1e-10);
    }
}

#[test]
fn quadratic_plugin_reproduces_plain_factorization() {
    let mut rng = stream_rng(8, 0);
    let gt = GroundTruth::random(&mut rng, 5, 4, 2, 2, 1.0, 3.0).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    let big =
        GeneralObjective::new(Arc::new(HalfSquaredDistance { x_star: gt.x_star().clone() }), 2, 0.5).unwrap();
    let w = gaussian_matrix(&mut rng, 9, 2);
    let d = gaussian_matrix(&mut rng, 9, 2);
    assert_relative_eq!(g.value(&w).unwrap(), big.value(&w).unwrap(), max_relative = 1e-12);
    assert!((g.gradient(&w).unwrap() - big.gradient(&w).unwrap()).norm() < 1e-10);
    assert_relative_eq!(g.hessian_form(&w, &d).unwrap(), big.hessian_form(&w, &d).unwrap(), max_relative = 1e-12);
}

#[test]
fn shapes_are_validated() {
    let gt = GroundTruth::diagonal(&[2.0, 1.0], 2).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    assert!(g.value(&DMatrix::zeros(3, 2)).is_err());
    assert!(g.gradient(&DMatrix::zeros(4, 1)).is_err());
    assert!(Factorization::new(&gt, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lifted_identity_holds_at_half(seed in 0u64..10_000, scale in 0.05f64..3.0) {
        let mut rng = stream_rng(seed, 0);
        let gt = GroundTruth::random(&mut rng, 5, 4, 2, 2, 0.5, 3.0).unwrap();
        let w = gaussian_matrix(&mut rng, 9, 2) * scale;
        let g = Factorization::new(&gt, 0.5).unwrap().value(&w).unwrap();
        let ws = gt.w_star();
        let gram = (&w * w.transpose() - ws.stacked() * ws.stacked().transpose()).norm_squared();
        let p = FactoredPoint::from_stacked(w, 5).unwrap();
        let cross = (p.u().transpose() * ws.u() - p.v().transpose() * ws.v()).norm_squared();
        prop_assert!((g - gram / 8.0 - cross / 4.0).abs() <= 1e-10 * g.max(1.0));
    }

    #[test]
    fn objectives_are_rotation_invariant(seed in 0u64..10_000) {
        let mut rng = stream_rng(seed, 0);
        let rot = lowrank_core::rng::random_orthogonal(&mut rng, 2);
        for obj in every_kind(seed, 4, 3, 2) {
            let (rows, cols) = obj.shape();
            let w = gaussian_matrix(&mut rng, rows, cols);
            let a = obj.value(&w).unwrap();
            let b = obj.value(&(&w * &rot)).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            let ga = obj.gradient(&w).unwrap() * &rot;
            let gb = obj.gradient(&(&w * &rot)).unwrap();
            prop_assert!((&ga - &gb).norm() <= 1e-9 * gb.norm().max(1.0));
        }
    }

    #[test]
    fn regularizer_vanishes_exactly_on_balanced_points(seed in 0u64..10_000) {
        let mut rng = stream_rng(seed, 0);
        let a = lowrank_core::rng::random_orthonormal(&mut rng, 5, 2);
        let b = lowrank_core::rng::random_orthonormal(&mut rng, 4, 2);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![uniform(&mut rng, 0.1, 2.0), uniform(&mut rng, 0.1, 2.0)]));
        let p = FactoredPoint::new(&(&a * &s), &(&b * &s)).unwrap();
        let rho = Regularizer::new(5, 4, 2, 0.5).unwrap();
        prop_assert!(rho.value(p.stacked()).unwrap() <= 1e-24);
        prop_assert!(rho.gradient(p.stacked()).unwrap().norm() <= 1e-12);
    }
}
