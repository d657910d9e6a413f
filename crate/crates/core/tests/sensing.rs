use std::sync::Arc;

use lowrank_core::matio::read_matrix;
use lowrank_core::objectives::{GeneralObjective, MatrixFunction, Objective};
use lowrank_core::rng::{gaussian_matrix, stream_rng};
use lowrank_core::sensing::{gaussian_ensemble, rip_estimate, MeasurementOperator, SensingLoss};
use lowrank_core::GroundTruth;
use proptest::prelude::*;

#[test]
fn dump_round_trips_through_the_matrix_format() {
    let op = gaussian_ensemble(3, 4, 6, 9).unwrap();
    let mut buf = Vec::new();
    op.write_dump(&mut buf).unwrap();
    let mut reader = buf.as_slice();
    let mats: Vec<_> = (0..op.p()).map(|_| read_matrix(&mut reader).unwrap()).collect();
    let rebuilt = MeasurementOperator::from_matrices(&mats).unwrap();
    let x = gaussian_matrix(&mut stream_rng(9, 1), 3, 4);
    assert_eq!(op.apply(&x).unwrap(), rebuilt.apply(&x).unwrap());
    assert_eq!(op.manifest_line().unwrap(), "3 4 6 9");
    assert!(rebuilt.manifest_line().is_none());
}

#[test]
fn rip_estimates_are_nested_in_rank() {
    let op = gaussian_ensemble(6, 5, 300, 4).unwrap();
    let mut last = 0.0;
    for r in 1..=4 {
        let rep = rip_estimate(&op, r, 50, 11).unwrap();
        assert!(rep.delta_hat >= last);
        assert_eq!(rep.trials, 50 * r);
        assert!(rep.empirical && rep.min_ratio <= rep.max_ratio);
        last = rep.delta_hat;
    }
    assert!(rip_estimate(&op, 0, 10, 0).is_err());
}

#[test]
fn more_measurements_give_smaller_deviation() {
    let small = rip_estimate(&gaussian_ensemble(5, 5, 60, 1).unwrap(), 2, 200, 3).unwrap();
    let large = rip_estimate(&gaussian_ensemble(5, 5, 2000, 1).unwrap(), 2, 200, 3).unwrap();
    assert!(large.delta_hat < small.delta_hat);
    assert!(large.delta_hat < 0.3);
}

#[test]
fn sensing_loss_vanishes_at_the_target_and_its_factors() {
    let mut rng = stream_rng(5, 0);
    let gt = GroundTruth::random(&mut rng, 5, 4, 2, 2, 1.0, 2.0).unwrap();
    let op = Arc::new(gaussian_ensemble(5, 4, 80, 5).unwrap());
    let loss = Arc::new(SensingLoss::from_target(op.clone(), gt.x_star()).unwrap());
    assert!(loss.value(gt.x_star()).unwrap().abs() <= 1e-24);
    assert!(loss.gradient(gt.x_star()).unwrap().norm() <= 1e-12);
    let obj = GeneralObjective::sensing(loss, 2, 0.5).unwrap();
    let ws = gt.w_star().into_stacked();
    assert!(obj.value(&ws).unwrap() <= 1e-20);
    assert!(obj.gradient(&ws).unwrap().norm() <= 1e-10);
    let y = op.apply(gt.x_star()).unwrap();
    let from_y = SensingLoss::new(op, y).unwrap();
    let x = gaussian_matrix(&mut rng, 5, 4);
    let a = from_y.value(&x).unwrap();
    let b = SensingLoss::from_target(Arc::new(gaussian_ensemble(5, 4, 80, 5).unwrap()), gt.x_star())
        .unwrap()
        .value(&x)
        .unwrap();
    assert!((a - b).abs() <= 1e-10 * a.max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_pairs_with_apply(seed in 0u64..100_000, p in 1usize..40) {
        let op = gaussian_ensemble(3, 4, p, seed).unwrap();
        let mut rng = stream_rng(seed, 7);
        let x = gaussian_matrix(&mut rng, 3, 4);
        let y = nalgebra::DVector::from_fn(p, |_, _| lowrank_core::rng::normal(&mut rng));
        let lhs = op.apply(&x).unwrap().dot(&y);
        let rhs = x.dot(&op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}
