//! `sweep`: empirical recovery probability of gradient descent on the
//! sensing objective over a grid of measurement counts and condition numbers.

use std::io::Write;
use std::sync::Arc;

use lowrank_core::objectives::GeneralObjective;
use lowrank_core::rng::{derive_seed, gaussian_matrix, stream_rng};
use lowrank_core::sensing::{gaussian_ensemble, SensingLoss};
use lowrank_core::solvers::{gradient_descent, SolverConfig, Termination};
use lowrank_core::GroundTruth;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{experiment_config, schema_version};
use crate::error::CliResult;
use crate::output::{csv_opt, RunDir};
use crate::Outcome;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    /// Condition numbers; the spectrum runs linearly from `kappa` down to 1.
    pub kappa: Vec<f64>,
    /// Measurement counts as multiples of `(n+m) r^2`.
    pub p_multipliers: Vec<f64>,
    /// Explicit measurement counts; overrides `p_multipliers`.
    pub p_values: Option<Vec<usize>>,
    /// Independent instances per grid cell.
    pub seeds: usize,
    /// Success when `||U V^T - X*||_F / ||X*||_F <= success_tol`.
    pub success_tol: f64,
    pub mu: f64,
    /// Standard deviation of the Gaussian initial factors.
    pub init_scale: f64,
    /// Step size as a multiple of `1 / sigma_1(X*)`.
    pub step_factor: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Required success rate at `target_multiplier (n+m) r^2` for the
    /// smallest `kappa`, when that count is on the grid.
    pub target_multiplier: f64,
    pub target_rate: f64,
    /// Monotonicity violations tolerated per trend check.
    pub allowed_violations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schema_version: schema_version(),
            seed: 0,
            n: 20,
            m: 20,
            r: 2,
            kappa: vec![1.0],
            p_multipliers: vec![1.0, 2.0, 4.0, 8.0, 12.0],
            p_values: None,
            seeds: 20,
            success_tol: 1e-3,
            mu: 0.5,
            init_scale: 0.1,
            step_factor: 0.25,
            max_iters: 5000,
            grad_tol: 1e-9,
            target_multiplier: 8.0,
            target_rate: 0.9,
            allowed_violations: 1,
        }
    }
}

impl SweepConfig {
    fn check(&self) -> Result<(), String> {
        if self.n == 0 || self.m == 0 || self.r == 0 || self.r > self.n.min(self.m) {
            return Err(format!("need 1 <= r <= min(n, m), got n={} m={} r={}", self.n, self.m, self.r));
        }
        if self.kappa.is_empty() || self.kappa.iter().any(|k| !(*k >= 1.0 && k.is_finite())) {
            return Err("kappa must be a nonempty list of values >= 1".into());
        }
        if self.r == 1 && self.kappa.iter().any(|k| *k != 1.0) {
            return Err("a rank-1 target has condition number 1".into());
        }
        match &self.p_values {
            Some(ps) if ps.is_empty() || ps.contains(&0) => return Err("p_values must be positive".into()),
            None if self.p_multipliers.is_empty() || self.p_multipliers.iter().any(|x| !(*x > 0.0)) => {
                return Err("p_multipliers must be positive".into())
            }
            _ => {}
        }
        if self.seeds == 0 {
            return Err("seeds must be at least 1".into());
        }
        if !(self.step_factor > 0.0 && self.mu > 0.0 && self.init_scale > 0.0 && self.success_tol > 0.0) {
            return Err("step_factor, mu, init_scale and success_tol must be positive".into());
        }
        Ok(())
    }

    fn base(&self) -> f64 {
        ((self.n + self.m) * self.r * self.r) as f64
    }

    /// Measurement counts of the grid, ascending.
    pub fn grid(&self) -> Vec<usize> {
        let mut ps = match &self.p_values {
            Some(ps) => ps.clone(),
            None => self.p_multipliers.iter().map(|x| (x * self.base()).round().max(1.0) as usize).collect(),
        };
        ps.sort_unstable();
        ps.dedup();
        ps
    }

    /// Spectrum `kappa, ..., 1` with `r` linearly spaced entries.
    pub fn spectrum(&self, kappa: f64) -> Vec<f64> {
        if self.r == 1 {
            return vec![1.0];
        }
        (0..self.r).map(|i| kappa - (kappa - 1.0) * i as f64 / (self.r - 1) as f64).collect()
    }
}

experiment_config!(SweepConfig);

#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub kappa: f64,
    pub p: usize,
    pub instance: usize,
    pub rel_error: Option<f64>,
    pub success: bool,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub kappa: f64,
    pub p: usize,
    pub multiplier: f64,
    pub successes: usize,
    pub runs: usize,
    pub rate: f64,
    pub median_rel_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendCheck {
    pub name: String,
    pub rates: Vec<f64>,
    pub violations: usize,
    pub allowed: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub rates: Vec<RateRow>,
    pub checks: Vec<TrendCheck>,
    pub passed: bool,
    #[serde(skip)]
    pub cells: Vec<Cell>,
}

/// Instances share their randomness across grid cells: instance `s` uses
/// the same singular vectors and initial point for every `(kappa, p)`, and
/// the same operator seed for every `kappa` at a given `p`.
pub fn run_cell(cfg: &SweepConfig, kappa: f64, p: usize, s: usize) -> Cell {
    let mut cell =
        Cell { kappa, p, instance: s, rel_error: None, success: false, iterations: 0, termination: None, error: None };
    let result = (|| -> CliResult<_> {
        let gt = GroundTruth::with_spectrum(
            &mut stream_rng(derive_seed(cfg.seed, 0x6700), s as u64),
            cfg.n,
            cfg.m,
            &cfg.spectrum(kappa),
            cfg.r,
        )?;
        let op = gaussian_ensemble(cfg.n, cfg.m, p, derive_seed(derive_seed(cfg.seed, 0xa000 + s as u64), p as u64))?;
        let loss = SensingLoss::from_target(Arc::new(op), gt.x_star())?;
        let loss = if p > cfg.n * cfg.m { loss.with_gram() } else { loss };
        let obj = GeneralObjective::sensing(Arc::new(loss), cfg.r, cfg.mu)?;
        let w0 = gaussian_matrix(&mut stream_rng(derive_seed(cfg.seed, 0x1417), s as u64), cfg.n + cfg.m, cfg.r)
            * cfg.init_scale;
        let mut solver = SolverConfig::new(cfg.step_factor / gt.sigma_1(), cfg.max_iters, cfg.grad_tol);
        solver.stride = cfg.max_iters.max(1);
        let traj = gradient_descent(&obj, &w0, &solver, None)?;
        let w = &traj.final_point;
        let x = w.rows(0, cfg.n) * w.rows(cfg.n, cfg.m).transpose();
        Ok(((x - gt.x_star()).norm() / gt.x_star().norm(), traj.iterations(), traj.termination))
    })();
    match result {
        Ok((err, iterations, termination)) => {
            cell.rel_error = Some(err);
            cell.success = err <= cfg.success_tol;
            cell.iterations = iterations;
            cell.termination = Some(termination);
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

fn violations(rates: &[f64], increasing: bool) -> usize {
    rates
        .windows(2)
        .filter(|w| if increasing { w[1] < w[0] } else { w[1] > w[0] })
        .count()
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[k] } else { 0.5 * (xs[k - 1] + xs[k]) })
}

pub fn execute(cfg: &SweepConfig) -> CliResult<SweepReport> {
    let grid = cfg.grid();
    let mut kappas = cfg.kappa.clone();
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();
    let jobs: Vec<(f64, usize, usize)> = kappas
        .iter()
        .flat_map(|&k| grid.iter().flat_map(move |&p| (0..cfg.seeds).map(move |s| (k, p, s))))
        .collect();
    let cells: Vec<Cell> = jobs.par_iter().map(|&(k, p, s)| run_cell(cfg, k, p, s)).collect();

    let rates: Vec<RateRow> = kappas
        .iter()
        .flat_map(|&kappa| grid.iter().map(move |&p| (kappa, p)))
        .map(|(kappa, p)| {
            let group: Vec<&Cell> = cells.iter().filter(|c| c.kappa == kappa && c.p == p).collect();
            let successes = group.iter().filter(|c| c.success).count();
            RateRow {
                kappa,
                p,
                multiplier: p as f64 / cfg.base(),
                successes,
                runs: group.len(),
                rate: successes as f64 / group.len() as f64,
                median_rel_error: median(group.iter().filter_map(|c| c.rel_error).collect()),
            }
        })
        .collect();

    let rate_of = |kappa: f64, p: usize| rates.iter().find(|r| r.kappa == kappa && r.p == p).map(|r| r.rate);
    let mut checks = Vec::new();
    for &kappa in &kappas {
        let series: Vec<f64> = grid.iter().filter_map(|&p| rate_of(kappa, p)).collect();
        if series.len() > 1 {
            let v = violations(&series, true);
            checks.push(TrendCheck {
                name: format!("nondecreasing in p at kappa={kappa}"),
                rates: series,
                violations: v,
                allowed: cfg.allowed_violations,
                passed: v <= cfg.allowed_violations,
            });
        }
    }
    if kappas.len() > 1 {
        for &p in &grid {
            let series: Vec<f64> = kappas.iter().filter_map(|&k| rate_of(k, p)).collect();
            let v = violations(&series, false);
            checks.push(TrendCheck {
                name: format!("nonincreasing in kappa at p={p}"),
                rates: series,
                violations: v,
                allowed: cfg.allowed_violations,
                passed: v <= cfg.allowed_violations,
            });
        }
    }
    let target_p = (cfg.target_multiplier * cfg.base()).round() as usize;
    if let Some(rate) = rate_of(kappas[0], target_p) {
        checks.push(TrendCheck {
            name: format!("rate >= {} at p={target_p}, kappa={}", cfg.target_rate, kappas[0]),
            rates: vec![rate],
            violations: usize::from(rate < cfg.target_rate),
            allowed: 0,
            passed: rate >= cfg.target_rate,
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SweepReport { seed: cfg.seed, rates, checks, passed, cells })
}

fn write_cells_csv(out: &mut dyn Write, cells: &[Cell]) -> CliResult<()> {
    writeln!(out, "kappa,p,instance,success,rel_error,iterations,error")?;
    for c in cells {
        let error = c.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(out, "{},{},{},{},{},{},{}", c.kappa, c.p, c.instance, c.success, csv_opt(c.rel_error), c.iterations, error)?;
    }
    Ok(())
}

fn write_rates_csv(out: &mut dyn Write, rates: &[RateRow]) -> CliResult<()> {
    writeln!(out, "kappa,p,multiplier,successes,runs,rate,median_rel_error")?;
    for r in rates {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.kappa,
            r.p,
            r.multiplier,
            r.successes,
            r.runs,
            r.rate,
            csv_opt(r.median_rel_error)
        )?;
    }
    Ok(())
}

pub fn run(cfg: &SweepConfig, dir: &RunDir) -> CliResult<Outcome> {
    let report = execute(cfg)?;
    dir.write_with("cells.csv", |out| write_cells_csv(out, &report.cells))?;
    dir.write_with("rates.csv", |out| write_rates_csv(out, &report.rates))?;
    Outcome::from_report(&report, report.passed)
}
