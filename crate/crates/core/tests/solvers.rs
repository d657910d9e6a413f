use lowrank_core::geometry::{enumerate_critical_points, sample_region, RegionLabel};
use lowrank_core::objectives::{Factorization, Objective};
use lowrank_core::rng::{gaussian_matrix, stream_rng};
use lowrank_core::solvers::{
    default_step_size, gradient_descent, perturbed_gradient_descent, rate_audit, Noise, SolverConfig, Termination,
};
use lowrank_core::{distance, Error, GroundTruth};

#[test]
fn local_rate_contract_over_fifty_instances() {
    for k in 0..50u64 {
        let mut rng = stream_rng(k, 0);
        let gt = GroundTruth::random(&mut rng, 6, 5, 2, 2, 1.0, 3.0).unwrap();
        let g = Factorization::new(&gt, 0.5).unwrap();
        let w0 = sample_region(RegionLabel::R1, &gt, &mut rng, 1, 1000).unwrap().remove(0);
        let nu = 2.0 / (48.0 * gt.sigma_1());
        let ws = gt.w_star().into_stacked();
        let traj = gradient_descent(&g, w0.stacked(), &SolverConfig::new(nu, 300, 1e-12), Some(&ws)).unwrap();
        let audit = rate_audit(&traj, &gt, gt.sigma_r() / 32.0, nu).unwrap();
        assert!(audit.passed, "instance {k}: {audit:?}");
    }
}

#[test]
fn recorded_values_recompute_from_iterates() {
    let mut rng = stream_rng(1, 0);
    let gt = GroundTruth::random(&mut rng, 5, 4, 2, 2, 1.0, 2.0).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    let ws = gt.w_star().into_stacked();
    let w0 = gaussian_matrix(&mut rng, 9, 2) * 0.5;
    let mut cfg = SolverConfig::new(0.02, 400, 1e-10);
    cfg.stride = 7;
    let traj = gradient_descent(&g, &w0, &cfg, Some(&ws)).unwrap();
    assert_eq!(traj.iterates.first().unwrap().0, 0);
    assert_eq!(traj.iterates.last().unwrap().0, traj.iterations());
    for (iter, w) in &traj.iterates {
        let rec = &traj.records[*iter];
        assert!((g.value(w).unwrap() - rec.value).abs() <= 1e-10 * rec.value.max(1.0));
        assert!((g.gradient(w).unwrap().norm() - rec.grad_norm).abs() <= 1e-10 * rec.grad_norm.max(1.0));
        assert!((distance(w, &ws).unwrap() - rec.dist.unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn converged_points_are_balanced_and_critical() {
    for k in 0..6u64 {
        let mut rng = stream_rng(100 + k, 0);
        let r = 1 + (k as usize % 3);
        let gt = GroundTruth::random(&mut rng, 5, 4, r, r, 1.0, 3.0).unwrap();
        let g = Factorization::new(&gt, 0.5).unwrap();
        let w0 = gaussian_matrix(&mut rng, 9, r) * 0.3;
        let nu = default_step_size(&g, &w0, &gt).unwrap();
        let traj = gradient_descent(&g, &w0, &SolverConfig::new(nu, 200_000, 1e-11), None).unwrap();
        assert_eq!(traj.termination, Termination::GradTol);
        let end = &traj.final_point;
        let (u, v) = (end.rows(0, 5), end.rows(5, 4));
        assert!((u.transpose() * u - v.transpose() * v).norm() <= 1e-6);
        let nearest = enumerate_critical_points(&gt)
            .unwrap()
            .iter()
            .map(|cp| distance(end, cp.point.stacked()).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-6, "instance {k}: nearest critical point at {nearest:e}");
    }
}

#[test]
fn oversized_steps_are_flagged() {
    let gt = GroundTruth::diagonal(&[10.0, 1.0], 2).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    let ws = gt.w_star().into_stacked();
    let w0 = sample_region(RegionLabel::R1, &gt, &mut stream_rng(2, 0), 1, 1000).unwrap().remove(0);
    let nu = 10.0 / gt.sigma_1();
    match gradient_descent(&g, w0.stacked(), &SolverConfig::new(nu, 3, 0.0), Some(&ws)) {
        Ok(traj) => {
            let audit = rate_audit(&traj, &gt, gt.sigma_r() / 32.0, nu).unwrap();
            assert!(!audit.passed && !audit.flagged.is_empty());
        }
        Err(Error::Divergence { .. }) => {}
        Err(other) => panic!("unexpected error {other}"),
    }
}

#[test]
fn degenerate_alpha_accepts_any_nonincreasing_distance() {
    let gt = GroundTruth::diagonal(&[2.0, 1.0], 2).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    let ws = gt.w_star().into_stacked();
    let w0 = sample_region(RegionLabel::R1, &gt, &mut stream_rng(3, 0), 1, 1000).unwrap().remove(0);
    let traj = gradient_descent(&g, w0.stacked(), &SolverConfig::new(0.02, 100, 0.0), Some(&ws)).unwrap();
    assert!(rate_audit(&traj, &gt, 0.0, 0.02).unwrap().passed);
    let bare = gradient_descent(&g, w0.stacked(), &SolverConfig::new(0.02, 5, 0.0), None).unwrap();
    assert!(rate_audit(&bare, &gt, 0.0, 0.02).is_err());
}

#[test]
fn perturbed_runs_are_deterministic_in_the_seed() {
    let gt = GroundTruth::diagonal(&[2.0, 1.0], 2).unwrap();
    let g = Factorization::new(&gt, 0.5).unwrap();
    let w0 = gaussian_matrix(&mut stream_rng(4, 0), 4, 2) * 0.1;
    let mut cfg = SolverConfig::new(0.02, 3000, 0.0);
    cfg.noise = Noise::Sphere { radius: 1e-2, trigger: 1e-3, cooldown: 200, min_decrease: 1e-8 };
    let runs: Vec<_> = [5u64, 5, 6]
        .iter()
        .map(|&seed| perturbed_gradient_descent(&g, &w0, &SolverConfig { seed, ..cfg }, None).unwrap())
        .collect();
    assert_eq!(runs[0].final_point, runs[1].final_point);
    assert_eq!(runs[0].perturbations, runs[1].perturbations);
    assert!(!runs[0].perturbations.is_empty());
    assert_ne!(runs[0].final_point, runs[2].final_point);
}
