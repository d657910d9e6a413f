//! `verify`: the property suite plus finite-difference checks of every
//! objective kind.

use std::sync::Arc;

use lowrank_core::objectives::{Factorization, GeneralObjective, Regularizer, WeightedPca, WeightedQuadratic};
use lowrank_core::rng::{derive_seed, gaussian_matrix, stream_rng, uniform};
use lowrank_core::sensing::{gaussian_ensemble, SensingLoss};
use lowrank_core::tolerances::{DERIVED, FD_ORDER1, FD_ORDER2};
use lowrank_core::verify::{fd_check, lemma_suite, property_ids, replay, PropertyReport};
use lowrank_core::{GroundTruth, Objective, ObjectiveKind};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{experiment_config, schema_version};
use crate::error::CliResult;
use crate::output::RunDir;
use crate::Outcome;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Random instances per property.
    pub trials: usize,
    /// Random points per objective kind for the derivative checks.
    pub fd_points: usize,
    /// Recompute a single trial instead of running the suites.
    pub replay: Option<ReplaySpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    pub property: String,
    pub trial: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { schema_version: schema_version(), seed: 0, trials: 1000, fd_points: 20, replay: None }
    }
}

impl VerifyConfig {
    fn check(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if let Some(r) = &self.replay {
            if !property_ids().contains(&r.property.as_str()) {
                return Err(format!("unknown property {:?}; known: {}", r.property, property_ids().join(", ")));
            }
        }
        Ok(())
    }
}

experiment_config!(VerifyConfig);

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeCheck {
    pub kind: ObjectiveKind,
    pub points: usize,
    pub max_order1: f64,
    pub max_order2: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayResult {
    pub property: String,
    pub trial: usize,
    pub margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub properties: Vec<PropertyReport>,
    pub derivatives: Vec<DerivativeCheck>,
    pub replay: Option<ReplayResult>,
    pub passed: bool,
}

/// One instance of every objective kind with the given dimensions.
pub fn objective_family(seed: u64, n: usize, m: usize, r: usize) -> CliResult<Vec<Box<dyn Objective>>> {
    let mut rng = stream_rng(seed, 0);
    let gt = GroundTruth::random(&mut rng, n, m, r, r, 0.5, 2.0)?;
    let omega = DMatrix::from_fn(n, m, |_, _| uniform(&mut rng, 0.5, 1.5));
    let op = Arc::new(gaussian_ensemble(n, m, 6 * n * m, seed)?);
    let b = gaussian_matrix(&mut rng, n, r);
    let pca_target = &b * b.transpose();
    let pca_weights = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { uniform(&mut rng, 0.5, 1.5) });
    let pca_weights = (&pca_weights + pca_weights.transpose()) * 0.5;
    Ok(vec![
        Box::new(Regularizer::new(n, m, r, 0.5)?),
        Box::new(Factorization::new(&gt, 0.5)?),
        Box::new(GeneralObjective::new(Arc::new(WeightedQuadratic::new(&omega, gt.x_star().clone())?), r, 0.5)?),
        Box::new(GeneralObjective::sensing(Arc::new(SensingLoss::from_target(op, gt.x_star())?), r, 0.5)?),
        Box::new(WeightedPca::new(pca_weights, pca_target, r)?),
    ])
}

/// Order-1 and order-2 finite-difference errors of every objective kind at
/// `points` random instances with `n in 4..=8`, `m in 3..=6`, `r in 1..=3`.
pub fn derivative_checks(seed: u64, points: usize) -> CliResult<Vec<DerivativeCheck>> {
    let per_point: Vec<Vec<(ObjectiveKind, f64, f64)>> = (0..points)
        .into_par_iter()
        .map(|t| {
            let point_seed = derive_seed(seed, 0xfd00 + t as u64);
            let mut rng = stream_rng(point_seed, 1);
            let n = rng.random_range(4..=8);
            let m = rng.random_range(3..=6);
            let r = rng.random_range(1..=3);
            objective_family(point_seed, n, m, r)?
                .iter()
                .map(|obj| {
                    let (rows, cols) = obj.shape();
                    let w = gaussian_matrix(&mut rng, rows, cols);
                    Ok((obj.kind(), fd_check(obj.as_ref(), &w, 1, point_seed)?, fd_check(obj.as_ref(), &w, 2, point_seed)?))
                })
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let mut out: Vec<DerivativeCheck> = Vec::new();
    for (kind, e1, e2) in per_point.into_iter().flatten() {
        match out.iter_mut().find(|c| c.kind == kind) {
            Some(c) => {
                c.points += 1;
                c.max_order1 = c.max_order1.max(e1);
                c.max_order2 = c.max_order2.max(e2);
            }
            None => out.push(DerivativeCheck { kind, points: 1, max_order1: e1, max_order2: e2, passed: true }),
        }
    }
    for c in &mut out {
        c.passed = c.max_order1 <= FD_ORDER1 && c.max_order2 <= FD_ORDER2;
    }
    Ok(out)
}

pub fn execute(cfg: &VerifyConfig) -> CliResult<VerifyReport> {
    if let Some(spec) = &cfg.replay {
        let margin = replay(&spec.property, cfg.seed, spec.trial)?;
        let passed = margin >= -DERIVED;
        let replay = ReplayResult { property: spec.property.clone(), trial: spec.trial, margin, passed };
        return Ok(VerifyReport {
            seed: cfg.seed,
            trials: 0,
            properties: Vec::new(),
            derivatives: Vec::new(),
            replay: Some(replay),
            passed,
        });
    }
    let properties = lemma_suite(cfg.seed, cfg.trials)?;
    let derivatives = derivative_checks(cfg.seed, cfg.fd_points)?;
    let passed = properties.iter().all(PropertyReport::passed) && derivatives.iter().all(|c| c.passed);
    Ok(VerifyReport { seed: cfg.seed, trials: cfg.trials, properties, derivatives, replay: None, passed })
}

pub fn run(cfg: &VerifyConfig, dir: &RunDir) -> CliResult<Outcome> {
    let report = execute(cfg)?;
    dir.write_jsonl("properties.jsonl", &report.properties)?;
    Outcome::from_report(&report, report.passed)
}
