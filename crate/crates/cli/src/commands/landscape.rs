//! `landscape`: the two-dimensional weighted PCA objective `h(u)` for
//! `u in R^2` on a square grid, with a discrete basin analysis.

use std::io::Write;

use lowrank_core::objectives::WeightedPca;
use lowrank_core::Objective;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{experiment_config, matrix_from_rows, schema_version};
use crate::error::{config_err, CliError, CliResult};
use crate::output::RunDir;
use crate::Outcome;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub schema_version: u32,
    /// Unused by the grid itself; kept so every command accepts `--seed`.
    pub seed: u64,
    pub omega: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    pub r: usize,
    pub lo: f64,
    pub hi: f64,
    /// Grid points per axis.
    pub points: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            schema_version: schema_version(),
            seed: 0,
            omega: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            target: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            r: 1,
            lo: -2.0,
            hi: 2.0,
            points: 81,
        }
    }
}

impl LandscapeConfig {
    fn check(&self) -> Result<(), String> {
        let omega = matrix_from_rows(&self.omega, "omega")?;
        if omega.shape() != (2, 2) || self.r != 1 {
            return Err(format!(
                "unsupported dimension: the landscape grid needs a 2x2 weight matrix and r = 1, got {:?} and r = {}",
                omega.shape(),
                self.r
            ));
        }
        let target = matrix_from_rows(&self.target, "target")?;
        WeightedPca::new(omega, target, 1).map_err(|e| e.to_string())?;
        if !(self.lo < self.hi && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(format!("grid range [{}, {}] is empty", self.lo, self.hi));
        }
        if self.points < 3 {
            return Err("points must be at least 3".into());
        }
        Ok(())
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
    }
}

experiment_config!(LandscapeConfig);

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridPoint {
    pub u1: f64,
    pub u2: f64,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Basin {
    pub u1: f64,
    pub u2: f64,
    pub value: f64,
    pub grad_norm: f64,
    /// Grid points whose discrete steepest-descent path ends here.
    pub size: usize,
    pub on_boundary: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LandscapeReport {
    pub points: usize,
    pub basins: Vec<Basin>,
    pub passed: bool,
    #[serde(skip)]
    pub grid: Vec<GridPoint>,
}

/// Total order on grid points: by value, ties broken by index, so every
/// plateau has a single discrete minimum.
fn lower(grid: &[GridPoint], a: usize, b: usize) -> bool {
    (grid[a].value, a) < (grid[b].value, b)
}

fn neighbours(k: usize, n: usize) -> impl Iterator<Item = usize> {
    let (i, j) = ((k / n) as isize, (k % n) as isize);
    (-1isize..=1)
        .flat_map(move |di| (-1isize..=1).map(move |dj| (i + di, j + dj)))
        .filter(move |&(a, b)| (a, b) != (i, j) && a >= 0 && b >= 0 && a < n as isize && b < n as isize)
        .map(move |(a, b)| a as usize * n + b as usize)
}

/// Lowest of `k` and its eight neighbours.
fn descend(grid: &[GridPoint], n: usize, k: usize) -> usize {
    neighbours(k, n).fold(k, |best, q| if lower(grid, q, best) { q } else { best })
}

pub fn evaluate_grid(cfg: &LandscapeConfig) -> CliResult<Vec<GridPoint>> {
    let omega = matrix_from_rows(&cfg.omega, "omega").map_err(CliError::Config)?;
    let target = matrix_from_rows(&cfg.target, "target").map_err(CliError::Config)?;
    let h = WeightedPca::new(omega, target, 1).map_err(config_err)?;
    let n = cfg.points;
    (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (u1, u2) = (cfg.coordinate(k / n), cfg.coordinate(k % n));
            let u = DMatrix::from_column_slice(2, 1, &[u1, u2]);
            let (value, grad) = h.value_and_gradient(&u)?;
            Ok(GridPoint { u1, u2, value, grad_norm: grad.norm() })
        })
        .collect()
}

/// Discrete minima of the grid and the size of their basins.
pub fn basins(grid: &[GridPoint], n: usize) -> Vec<Basin> {
    let mut sizes = vec![0usize; grid.len()];
    for k in 0..grid.len() {
        let mut cur = k;
        loop {
            let next = descend(grid, n, cur);
            if next == cur {
                break;
            }
            cur = next;
        }
        sizes[cur] += 1;
    }
    (0..grid.len())
        .filter(|&k| sizes[k] > 0)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let g = grid[k];
            Basin {
                u1: g.u1,
                u2: g.u2,
                value: g.value,
                grad_norm: g.grad_norm,
                size: sizes[k],
                on_boundary: i == 0 || j == 0 || i == n - 1 || j == n - 1,
            }
        })
        .collect()
}

pub fn execute(cfg: &LandscapeConfig) -> CliResult<LandscapeReport> {
    let grid = evaluate_grid(cfg)?;
    let basins = basins(&grid, cfg.points);
    Ok(LandscapeReport { points: cfg.points, basins, passed: true, grid })
}

fn write_grid_csv(out: &mut dyn Write, grid: &[GridPoint]) -> CliResult<()> {
    writeln!(out, "u1,u2,value,grad_norm")?;
    for g in grid {
        writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", g.u1, g.u2, g.value, g.grad_norm)?;
    }
    Ok(())
}

pub fn run(cfg: &LandscapeConfig, dir: &RunDir) -> CliResult<Outcome> {
    let report = execute(cfg)?;
    dir.write_with("grid.csv", |out| write_grid_csv(out, &report.grid))?;
    Outcome::from_report(&report, report.passed)
}
