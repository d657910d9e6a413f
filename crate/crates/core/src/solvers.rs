//! Plain and perturbed gradient descent on factored objectives, with
//! trajectory recording and an audit of the local linear rate.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_shape, Error, Result};
use crate::factored::{procrustes_matrices, GroundTruth};
use crate::objectives::Objective;
use crate::rng::{stream_rng, unit_sphere};
use crate::tolerances::{CERTIFICATE, DEFAULT_STRIDE, DIVERGENCE_FACTOR};

/// Noise injected by perturbed gradient descent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    None,
    /// Uniform point on the Frobenius sphere of `radius`, added whenever the
    /// gradient norm is at most `trigger` and at least `cooldown` iterations
    /// have passed since the previous perturbation. If the value has not
    /// dropped by `min_decrease` `cooldown` iterations after a perturbation,
    /// the run stops: the point is treated as a local minimum.
    Sphere { radius: f64, trigger: f64, cooldown: usize, min_decrease: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    #[serde(default = "default_noise")]
    pub noise: Noise,
    #[serde(default)]
    pub seed: u64,
    /// Keep every `stride`-th iterate (first and last are always kept).
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_noise() -> Noise {
    Noise::None
}

fn default_stride() -> usize {
    DEFAULT_STRIDE
}

impl SolverConfig {
    pub fn new(step_size: f64, max_iters: usize, grad_tol: f64) -> Self {
        Self { step_size, max_iters, grad_tol, noise: Noise::None, seed: 0, stride: DEFAULT_STRIDE }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Validation(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Validation("gradient tolerance must be nonnegative".into()));
        }
        if self.stride == 0 {
            return Err(Error::Validation("stride must be at least 1".into()));
        }
        if let Noise::Sphere { radius, trigger, min_decrease, .. } = self.noise {
            if !(radius >= 0.0 && trigger >= 0.0 && min_decrease >= 0.0) {
                return Err(Error::Validation("noise radii and thresholds must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    MaxIters,
    /// A perturbation failed to decrease the value (perturbed descent only).
    NoEscape,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub dist: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// One record per visited iterate, `records[k].iter == k`.
    pub records: Vec<IterRecord>,
    /// Decimated iterates `(iter, W)`.
    pub iterates: Vec<(usize, DMatrix<f64>)>,
    pub final_point: DMatrix<f64>,
    pub termination: Termination,
    /// Iterations at which noise was injected (after the gradient step).
    pub perturbations: Vec<usize>,
}

impl Trajectory {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_record(&self) -> &IterRecord {
        self.records.last().expect("trajectory has at least one record")
    }

    /// CSV with header `iter,value,grad_norm,dist`; `dist` is empty when no
    /// reference point was given.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,value,grad_norm,dist")?;
        for r in &self.records {
            let dist = r.dist.map(|d| format!("{d:.17e}")).unwrap_or_default();
            writeln!(out, "{},{:.17e},{:.17e},{}", r.iter, r.value, r.grad_norm, dist)?;
        }
        Ok(())
    }
}

struct Recorder<'a> {
    reference: Option<&'a DMatrix<f64>>,
    stride: usize,
    records: Vec<IterRecord>,
    iterates: Vec<(usize, DMatrix<f64>)>,
}

impl Recorder<'_> {
    fn push(&mut self, w: &DMatrix<f64>, value: f64, grad_norm: f64) -> Result<()> {
        let iter = self.records.len();
        let dist = self.reference.map(|r| procrustes_matrices(w, r).map(|a| a.distance)).transpose()?;
        self.records.push(IterRecord { iter, value, grad_norm, dist });
        if iter % self.stride == 0 {
            self.iterates.push((iter, w.clone()));
        }
        Ok(())
    }

    fn finish(mut self, w: DMatrix<f64>, termination: Termination, perturbations: Vec<usize>) -> Trajectory {
        let last = self.records.len() - 1;
        if self.iterates.last().map(|(i, _)| *i) != Some(last) {
            self.iterates.push((last, w.clone()));
        }
        Trajectory { records: self.records, iterates: self.iterates, final_point: w, termination, perturbations }
    }
}

fn diverged(iteration: usize, value: f64, v0: f64, last: &DMatrix<f64>) -> Option<Error> {
    let blown = !value.is_finite() || (v0 > 0.0 && value > DIVERGENCE_FACTOR * v0);
    blown.then(|| Error::Divergence { iteration, value, last_finite: Box::new(last.clone()) })
}

/// `W_{t+1} = W_t - nu grad h(W_t)`. When `reference` is given, the
/// Procrustes distance to it is recorded at every iterate.
pub fn gradient_descent(
    obj: &dyn Objective,
    w0: &DMatrix<f64>,
    config: &SolverConfig,
    reference: Option<&DMatrix<f64>>,
) -> Result<Trajectory> {
    run(obj, w0, &SolverConfig { noise: Noise::None, ..*config }, reference)
}

/// Gradient descent with sphere noise injected near stationary points.
/// A zero radius (or no noise) reproduces [`gradient_descent`] exactly.
pub fn perturbed_gradient_descent(
    obj: &dyn Objective,
    w0: &DMatrix<f64>,
    config: &SolverConfig,
    reference: Option<&DMatrix<f64>>,
) -> Result<Trajectory> {
    match config.noise {
        Noise::Sphere { radius, .. } if radius > 0.0 => run(obj, w0, config, reference),
        _ => gradient_descent(obj, w0, config, reference),
    }
}

fn run(
    obj: &dyn Objective,
    w0: &DMatrix<f64>,
    config: &SolverConfig,
    reference: Option<&DMatrix<f64>>,
) -> Result<Trajectory> {
    config.validate()?;
    check_shape("solver initial point", w0, obj.shape())?;
    if let Some(r) = reference {
        check_shape("solver reference point", r, obj.shape())?;
    }
    let mut rng = stream_rng(config.seed, 0);
    let mut rec = Recorder { reference, stride: config.stride, records: Vec::new(), iterates: Vec::new() };
    let mut perturbations = Vec::new();
    let mut last_noise: Option<(usize, f64)> = None;

    let mut w = w0.clone();
    let (mut value, mut grad) = obj.value_and_gradient(&w)?;
    let v0 = value;
    if let Some(e) = diverged(0, value, v0, &w) {
        return Err(e);
    }
    loop {
        let t = rec.records.len();
        let grad_norm = grad.norm();
        rec.push(&w, value, grad_norm)?;

        let termination = match config.noise {
            Noise::None => (grad_norm <= config.grad_tol).then_some(Termination::GradTol),
            Noise::Sphere { cooldown, min_decrease, .. } => match last_noise {
                Some((t0, v_noise)) if t == t0 + cooldown && value > v_noise - min_decrease => {
                    Some(Termination::NoEscape)
                }
                _ => None,
            },
        };
        if let Some(reason) = termination {
            return Ok(rec.finish(w, reason, perturbations));
        }
        if t >= config.max_iters {
            return Ok(rec.finish(w, Termination::MaxIters, perturbations));
        }

        let previous = w.clone();
        w -= &grad * config.step_size;
        if let Noise::Sphere { radius, trigger, cooldown, .. } = config.noise {
            let rested = last_noise.map_or(true, |(t0, _)| t >= t0 + cooldown);
            if grad_norm <= trigger && rested {
                w += unit_sphere(&mut rng, w.nrows(), w.ncols()) * radius;
                last_noise = Some((t + 1, value));
                perturbations.push(t + 1);
            }
        }
        (value, grad) = obj.value_and_gradient(&w)?;
        if let Some(e) = diverged(t + 1, value, v0, &previous) {
            return Err(e);
        }
    }
}

/// Largest Hessian eigenvalue magnitude at `w`, by power iteration on
/// Hessian-vector products.
pub fn hessian_norm_estimate(obj: &dyn Objective, w: &DMatrix<f64>, iters: usize, seed: u64) -> Result<f64> {
    let (rows, cols) = obj.shape();
    let mut v = unit_sphere(&mut stream_rng(seed, 0), rows, cols);
    let mut estimate = 0.0;
    for _ in 0..iters {
        let hv = obj.hessian_vector(w, &v)?;
        estimate = hv.norm();
        if estimate == 0.0 {
            return Ok(0.0);
        }
        v = hv / estimate;
    }
    Ok(estimate)
}

/// `min(2 beta, 1 / (4 b))` with `beta = 1 / (48 ||X*||)` and `b` the
/// Hessian norm estimate at the initial point.
pub fn default_step_size(obj: &dyn Objective, w0: &DMatrix<f64>, gt: &GroundTruth) -> Result<f64> {
    let two_beta = 2.0 / (48.0 * gt.sigma_1());
    let b = hessian_norm_estimate(obj, w0, 100, 0)?;
    Ok(if b > 0.0 { two_beta.min(0.25 / b) } else { two_beta })
}

/// Per-step contraction audit of a trajectory started in the ball
/// `dist <= sigma_r^{1/2}`.
#[derive(Clone, Debug, Serialize)]
pub struct RateAudit {
    pub bound: f64,
    pub max_ratio: f64,
    /// Steps `t` with `dist^2_{t+1} / dist^2_t > bound + 1e-10`.
    pub flagged: Vec<usize>,
    /// Iterates outside the ball.
    pub outside_ball: Vec<usize>,
    pub steps: usize,
    pub passed: bool,
}

pub fn rate_audit(traj: &Trajectory, gt: &GroundTruth, alpha: f64, nu: f64) -> Result<RateAudit> {
    let dists = traj
        .records
        .iter()
        .map(|r| r.dist.ok_or_else(|| Error::Validation("trajectory was recorded without a reference".into())))
        .collect::<Result<Vec<_>>>()?;
    let bound = 1.0 - 2.0 * nu * alpha;
    let radius = gt.sigma_r().sqrt();
    let mut audit = RateAudit {
        bound,
        max_ratio: 0.0,
        flagged: Vec::new(),
        outside_ball: Vec::new(),
        steps: dists.len().saturating_sub(1),
        passed: true,
    };
    for (t, d) in dists.iter().enumerate() {
        if *d > radius + CERTIFICATE {
            audit.outside_ball.push(t);
        }
    }
    for (t, pair) in dists.windows(2).enumerate() {
        let (before, after) = (pair[0] * pair[0], pair[1] * pair[1]);
        if before == 0.0 {
            if after > 0.0 {
                audit.flagged.push(t);
            }
            continue;
        }
        let ratio = after / before;
        audit.max_ratio = audit.max_ratio.max(ratio);
        if ratio > bound + CERTIFICATE {
            audit.flagged.push(t);
        }
    }
    audit.passed = audit.flagged.is_empty() && audit.outside_ball.is_empty();
    Ok(audit)
}
