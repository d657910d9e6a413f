//! `solve`: gradient descent or perturbed gradient descent from one or more
//! starting points, with a stationarity classification of every end point.

use std::sync::Arc;

use lowrank_core::geometry::{build_critical_point, min_hessian_eig, CertificateConstants};
use lowrank_core::objectives::{Factorization, GeneralObjective, WeightedPca};
use lowrank_core::rng::{derive_seed, gaussian_matrix, random_orthogonal, stream_rng, unit_sphere};
use lowrank_core::sensing::{gaussian_ensemble, SensingLoss};
use lowrank_core::solvers::{
    default_step_size, hessian_norm_estimate, perturbed_gradient_descent, rate_audit, Noise, RateAudit, SolverConfig,
    Termination, Trajectory,
};
use lowrank_core::tolerances::DEFAULT_STRIDE;
use lowrank_core::{distance, Error, GroundTruth, Objective, ObjectiveKind};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{experiment_config, matrix_from_rows, matrix_to_rows, schema_version, TargetSpec};
use crate::error::{config_err, CliError, CliResult};
use crate::output::RunDir;
use crate::Outcome;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Problem {
    Factorization {
        #[serde(default)]
        target: TargetSpec,
        #[serde(default = "half")]
        mu: f64,
    },
    Sensing {
        #[serde(default)]
        target: TargetSpec,
        #[serde(default = "half")]
        mu: f64,
        /// Defaults to `8 (n+m) r^2`.
        #[serde(default)]
        p: Option<usize>,
    },
    /// `h(U) = 1/2 ||Omega .* (U U^T - X*)||_F^2`.
    WeightedPca {
        omega: Vec<Vec<f64>>,
        target: Vec<Vec<f64>>,
        r: usize,
    },
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// I.i.d. Gaussian entries with standard deviation `scale`.
    Random { scale: f64 },
    /// `W* R + fraction * sigma_r^{1/2} * S` for a random rotation `R` and a
    /// uniform unit-norm `S`; needs a ground truth.
    NearOptimum { fraction: f64 },
    /// The critical point keeping the singular pairs in `mask` (0-based),
    /// with identity rotation; needs a factorization ground truth.
    Saddle { mask: Vec<usize> },
    Given { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Defaults to `min(2 beta, 1/(4 b))` with a ground truth, `1/(4 b)`
    /// otherwise, `b` the Hessian norm estimate at the start.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub noise: Noise,
    pub stride: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { step_size: None, max_iters: 10_000, grad_tol: 1e-10, noise: Noise::None, stride: DEFAULT_STRIDE }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub problem: Problem,
    pub init: Init,
    pub starts: usize,
    pub solver: SolverSection,
    /// An end point is a spurious local minimum when its value exceeds
    /// `spurious_value`, its gradient norm is below `stationary_tol`, and the
    /// smallest Hessian eigenvalue is at least `-stationary_tol`.
    pub spurious_value: f64,
    pub stationary_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            schema_version: schema_version(),
            seed: 0,
            problem: Problem::Factorization { target: TargetSpec::default(), mu: 0.5 },
            init: Init::NearOptimum { fraction: 0.5 },
            starts: 1,
            solver: SolverSection::default(),
            spurious_value: 0.1,
            stationary_tol: 1e-8,
        }
    }
}

impl SolveConfig {
    fn check(&self) -> Result<(), String> {
        if self.starts == 0 {
            return Err("starts must be at least 1".into());
        }
        let has_gt = match &self.problem {
            Problem::Factorization { target, mu } | Problem::Sensing { target, mu, .. } => {
                target.check()?;
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(format!("mu must be positive, got {mu}"));
                }
                if let Problem::Sensing { p: Some(0), .. } = &self.problem {
                    return Err("p must be positive".into());
                }
                true
            }
            Problem::WeightedPca { omega, target, r } => {
                let o = matrix_from_rows(omega, "omega")?;
                let t = matrix_from_rows(target, "target")?;
                WeightedPca::new(o, t, *r).map_err(|e| e.to_string())?;
                false
            }
        };
        match &self.init {
            Init::Random { scale } if !(*scale >= 0.0 && scale.is_finite()) => {
                return Err("init scale must be nonnegative".into())
            }
            Init::NearOptimum { fraction } if !has_gt || !(*fraction >= 0.0) => {
                return Err("near_optimum init needs a ground truth and a nonnegative fraction".into())
            }
            Init::Saddle { .. } if !matches!(self.problem, Problem::Factorization { .. }) => {
                return Err("saddle init is only defined for the factorization problem".into())
            }
            Init::Given { matrix } => {
                matrix_from_rows(matrix, "init matrix")?;
            }
            _ => {}
        }
        let mut solver = SolverConfig::new(self.solver.step_size.unwrap_or(1.0), self.solver.max_iters, self.solver.grad_tol);
        solver.noise = self.solver.noise;
        solver.stride = self.solver.stride;
        solver.validate().map_err(|e| e.to_string())
    }
}

experiment_config!(SolveConfig);

#[derive(Clone, Debug, Serialize)]
pub struct StartSummary {
    pub start: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub value: f64,
    pub grad_norm: f64,
    /// Smallest value along the trajectory.
    pub best_value: f64,
    pub perturbations: usize,
    pub lambda_min: Option<f64>,
    /// Procrustes distance to `W*`.
    pub dist: Option<f64>,
    /// `||U V^T - X*||_F / ||X*||_F`.
    pub rel_error: Option<f64>,
    pub rate_audit: Option<RateAudit>,
    pub spurious_minimum: bool,
    pub error: Option<String>,
    pub final_point: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub seed: u64,
    pub objective: ObjectiveKind,
    pub starts: Vec<StartSummary>,
    pub spurious_minima: usize,
    pub failures: usize,
    pub passed: bool,
    #[serde(skip)]
    pub trajectories: Vec<Option<Trajectory>>,
}

pub struct BuiltProblem {
    pub objective: Box<dyn Objective>,
    pub gt: Option<GroundTruth>,
}

pub fn build_problem(cfg: &SolveConfig) -> CliResult<BuiltProblem> {
    let target_rng = || stream_rng(derive_seed(cfg.seed, 0x6700), 0);
    match &cfg.problem {
        Problem::Factorization { target, mu } => {
            let gt = target.build(&mut target_rng())?;
            Ok(BuiltProblem { objective: Box::new(Factorization::new(&gt, *mu).map_err(config_err)?), gt: Some(gt) })
        }
        Problem::Sensing { target, mu, p } => {
            let gt = target.build(&mut target_rng())?;
            let p = p.unwrap_or(8 * (gt.n() + gt.m()) * gt.r_model() * gt.r_model());
            let op = gaussian_ensemble(gt.n(), gt.m(), p, derive_seed(cfg.seed, 0x5e00))?;
            let loss = SensingLoss::from_target(Arc::new(op), gt.x_star())?;
            let loss = if p > gt.n() * gt.m() { loss.with_gram() } else { loss };
            let obj = GeneralObjective::sensing(Arc::new(loss), gt.r_model(), *mu).map_err(config_err)?;
            Ok(BuiltProblem { objective: Box::new(obj), gt: Some(gt) })
        }
        Problem::WeightedPca { omega, target, r } => {
            let omega = matrix_from_rows(omega, "omega").map_err(CliError::Config)?;
            let target = matrix_from_rows(target, "target").map_err(CliError::Config)?;
            Ok(BuiltProblem { objective: Box::new(WeightedPca::new(omega, target, *r).map_err(config_err)?), gt: None })
        }
    }
}

fn initial_point(cfg: &SolveConfig, problem: &BuiltProblem, start: usize) -> CliResult<DMatrix<f64>> {
    let (rows, cols) = problem.objective.shape();
    let mut rng = stream_rng(derive_seed(cfg.seed, 0x1417), start as u64);
    let w0 = match &cfg.init {
        Init::Random { scale } => gaussian_matrix(&mut rng, rows, cols) * *scale,
        Init::NearOptimum { fraction } => {
            let gt = problem.gt.as_ref().ok_or_else(|| CliError::Config("near_optimum needs a ground truth".into()))?;
            let rot = random_orthogonal(&mut rng, cols);
            gt.w_star().stacked() * rot + unit_sphere(&mut rng, rows, cols) * (fraction * gt.sigma_r().sqrt())
        }
        Init::Saddle { mask } => {
            let gt = problem.gt.as_ref().ok_or_else(|| CliError::Config("saddle init needs a ground truth".into()))?;
            build_critical_point(gt, mask, &DMatrix::identity(cols, cols)).map_err(config_err)?.point.into_stacked()
        }
        Init::Given { matrix } => matrix_from_rows(matrix, "init matrix").map_err(CliError::Config)?,
    };
    if w0.shape() != (rows, cols) {
        return Err(CliError::Config(format!("initial point is {:?}, objective expects {:?}", w0.shape(), (rows, cols))));
    }
    Ok(w0)
}

fn step_size(cfg: &SolveConfig, problem: &BuiltProblem, w0: &DMatrix<f64>) -> CliResult<f64> {
    if let Some(s) = cfg.solver.step_size {
        return Ok(s);
    }
    Ok(match &problem.gt {
        Some(gt) => default_step_size(problem.objective.as_ref(), w0, gt)?,
        None => {
            let b = hessian_norm_estimate(problem.objective.as_ref(), w0, 100, 0)?;
            if b > 0.0 { 0.25 / b } else { 1e-3 }
        }
    })
}

fn run_start(cfg: &SolveConfig, problem: &BuiltProblem, start: usize) -> CliResult<(StartSummary, Option<Trajectory>)> {
    let obj = problem.objective.as_ref();
    let w0 = initial_point(cfg, problem, start)?;
    let nu = step_size(cfg, problem, &w0)?;
    let solver = SolverConfig {
        step_size: nu,
        max_iters: cfg.solver.max_iters,
        grad_tol: cfg.solver.grad_tol,
        noise: cfg.solver.noise,
        seed: derive_seed(cfg.seed, 0x5000 + start as u64),
        stride: cfg.solver.stride,
    };
    let reference = problem.gt.as_ref().map(|gt| gt.w_star().into_stacked());
    let mut summary = StartSummary {
        start,
        step_size: nu,
        iterations: 0,
        termination: None,
        value: f64::NAN,
        grad_norm: f64::NAN,
        best_value: f64::NAN,
        perturbations: 0,
        lambda_min: None,
        dist: None,
        rel_error: None,
        rate_audit: None,
        spurious_minimum: false,
        error: None,
        final_point: Vec::new(),
    };
    let traj = match perturbed_gradient_descent(obj, &w0, &solver, reference.as_ref()) {
        Ok(t) => t,
        Err(Error::Divergence { iteration, value, last_finite }) => {
            summary.iterations = iteration;
            summary.value = value;
            summary.error = Some(format!("diverged at iteration {iteration} (value {value:.6e})"));
            summary.final_point = matrix_to_rows(&last_finite);
            return Ok((summary, None));
        }
        Err(e) => return Err(e.into()),
    };
    let end = &traj.final_point;
    let last = traj.final_record();
    summary.iterations = traj.iterations();
    summary.termination = Some(traj.termination);
    summary.value = last.value;
    summary.grad_norm = last.grad_norm;
    summary.best_value = traj.records.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    summary.perturbations = traj.perturbations.len();
    summary.lambda_min = Some(min_hessian_eig(obj, end)?.lambda_min);
    summary.final_point = matrix_to_rows(end);
    if let Some(gt) = &problem.gt {
        summary.dist = Some(distance(end, gt.w_star().stacked())?);
        let n = gt.n();
        let x = end.rows(0, n) * end.rows(n, gt.m()).transpose();
        summary.rel_error = Some((x - gt.x_star()).norm() / gt.x_star().norm());
        let local = matches!(cfg.init, Init::NearOptimum { .. }) && obj.kind() == ObjectiveKind::Factorization;
        if local {
            summary.rate_audit = Some(rate_audit(&traj, gt, CertificateConstants::FACTORIZATION.alpha(gt), nu)?);
        }
    }
    summary.spurious_minimum = summary.value > cfg.spurious_value
        && summary.grad_norm < cfg.stationary_tol
        && summary.lambda_min.is_some_and(|l| l >= -cfg.stationary_tol);
    Ok((summary, Some(traj)))
}

pub fn execute(cfg: &SolveConfig) -> CliResult<SolveReport> {
    let problem = build_problem(cfg)?;
    let results: Vec<(StartSummary, Option<Trajectory>)> =
        (0..cfg.starts).into_par_iter().map(|s| run_start(cfg, &problem, s)).collect::<CliResult<_>>()?;
    let (starts, trajectories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let failures = starts
        .iter()
        .filter(|s| s.error.is_some() || s.rate_audit.as_ref().is_some_and(|a| !a.passed))
        .count();
    Ok(SolveReport {
        seed: cfg.seed,
        objective: problem.objective.kind(),
        spurious_minima: starts.iter().filter(|s| s.spurious_minimum).count(),
        failures,
        passed: failures == 0,
        starts,
        trajectories,
    })
}

pub fn run(cfg: &SolveConfig, dir: &RunDir) -> CliResult<Outcome> {
    let report = execute(cfg)?;
    for (k, traj) in report.trajectories.iter().enumerate() {
        if let Some(t) = traj {
            dir.write_with(&format!("trajectory_{k:03}.csv"), |out| Ok(t.write_csv(out)?))?;
        }
    }
    Outcome::from_report(&report, report.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_optimum_start_converges_with_a_clean_audit() {
        let cfg = SolveConfig { solver: SolverSection { max_iters: 3000, ..SolverSection::default() }, ..SolveConfig::default() };
        let rep = execute(&cfg).unwrap();
        let s = &rep.starts[0];
        assert!(rep.passed, "{s:?}");
        assert!(s.rate_audit.as_ref().unwrap().passed);
        assert!(s.dist.unwrap() < 1e-3);
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        let cfg = SolveConfig {
            init: Init::Random { scale: 3.0 },
            solver: SolverSection { step_size: Some(5.0), max_iters: 100, ..SolverSection::default() },
            ..SolveConfig::default()
        };
        let rep = execute(&cfg).unwrap();
        assert!(!rep.passed && rep.starts[0].error.is_some());
    }

    #[test]
    fn invalid_configurations() {
        let pca = Problem::WeightedPca { omega: vec![vec![1.0]], target: vec![vec![1.0]], r: 1 };
        let near = SolveConfig { problem: pca.clone(), ..SolveConfig::default() };
        assert!(near.check().is_err());
        let saddle = SolveConfig { problem: pca, init: Init::Saddle { mask: vec![] }, ..SolveConfig::default() };
        assert!(saddle.check().is_err());
        assert!(SolveConfig { starts: 0, ..SolveConfig::default() }.check().is_err());
        let bad_step = SolveConfig {
            solver: SolverSection { step_size: Some(-1.0), ..SolverSection::default() },
            ..SolveConfig::default()
        };
        assert!(bad_step.check().is_err());
    }
}
