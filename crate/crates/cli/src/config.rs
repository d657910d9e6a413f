//! Experiment configuration: JSON documents with a top-level
//! `schema_version`, unknown fields rejected, every field defaulted.

use std::path::Path;

use lowrank_core::rng::StreamRng;
use lowrank_core::GroundTruth;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Behaviour shared by every command configuration.
pub trait ExperimentConfig: DeserializeOwned + Serialize + Default {
    fn schema_version(&self) -> u32;
    fn seed(&self) -> u64;
    fn set_seed(&mut self, seed: u64);
    /// Reject inconsistent parameters before anything runs.
    fn validate(&self) -> Result<(), String>;
}

/// Read a configuration file, or fall back to the defaults when no path is
/// given. The seed override is applied before validation.
pub fn load<C: ExperimentConfig>(path: Option<&Path>, seed: Option<u64>) -> CliResult<C> {
    let mut cfg: C = match path {
        None => C::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    if cfg.schema_version() != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version()
        )));
    }
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

pub(crate) fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Implements [`ExperimentConfig`] for a struct with `schema_version` and
/// `seed` fields and an inherent `check` method.
macro_rules! experiment_config {
    ($ty:ty) => {
        impl $crate::config::ExperimentConfig for $ty {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }

            fn seed(&self) -> u64 {
                self.seed
            }

            fn set_seed(&mut self, seed: u64) {
                self.seed = seed;
            }

            fn validate(&self) -> Result<(), String> {
                self.check()
            }
        }
    };
}
pub(crate) use experiment_config;

/// How to build a ground truth `X* = Phi Sigma Psi^T`.
///
/// With `diagonal` the target is `diag(spectrum)` (so `n = m = len`);
/// otherwise the singular vectors are random and the spectrum is either
/// given or drawn uniformly from `[lo, hi]` with `rank` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub n: usize,
    pub m: usize,
    /// Model rank of the factorization.
    pub r: usize,
    /// Rank of the target; defaults to `r`.
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default)]
    pub diagonal: bool,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
}

fn default_lo() -> f64 {
    1.0
}

fn default_hi() -> f64 {
    3.0
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self { n: 6, m: 5, r: 2, rank: None, spectrum: None, diagonal: false, lo: default_lo(), hi: default_hi() }
    }
}

impl TargetSpec {
    pub fn check(&self) -> Result<(), String> {
        if self.r == 0 {
            return Err("target.r must be positive".into());
        }
        if self.diagonal {
            let s = self.spectrum.as_ref().ok_or("a diagonal target needs an explicit spectrum")?;
            if s.len() != self.n || s.len() != self.m {
                return Err(format!("diagonal spectrum of length {} does not match n={} m={}", s.len(), self.n, self.m));
            }
            return Ok(());
        }
        if self.n == 0 || self.m == 0 {
            return Err("target dimensions must be positive".into());
        }
        let rank = match &self.spectrum {
            Some(s) => s.len(),
            None => {
                if !(self.lo > 0.0 && self.lo <= self.hi && self.hi.is_finite()) {
                    return Err(format!("spectrum range [{}, {}] must satisfy 0 < lo <= hi", self.lo, self.hi));
                }
                self.rank.unwrap_or(self.r)
            }
        };
        if rank == 0 || rank > self.n.min(self.m) {
            return Err(format!("target rank {rank} must lie in 1..=min(n, m) = {}", self.n.min(self.m)));
        }
        Ok(())
    }

    pub fn build(&self, rng: &mut StreamRng) -> CliResult<GroundTruth> {
        let gt = match (&self.spectrum, self.diagonal) {
            (Some(s), true) => GroundTruth::diagonal(s, self.r),
            (Some(s), false) => GroundTruth::with_spectrum(rng, self.n, self.m, s, self.r),
            (None, _) => GroundTruth::random(rng, self.n, self.m, self.rank.unwrap_or(self.r), self.r, self.lo, self.hi),
        };
        gt.map_err(config_err)
    }
}

/// A dense matrix written as a list of rows.
pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(format!("{what} must be a nonempty list of rows"));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(format!("{what} has rows of different lengths"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(format!("{what} has non-finite entries"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_validation() {
        assert!(TargetSpec::default().check().is_ok());
        let bad = TargetSpec { rank: Some(7), ..TargetSpec::default() };
        assert!(bad.check().is_err());
        let diag = TargetSpec { n: 2, m: 2, spectrum: Some(vec![2.0, 1.0]), diagonal: true, ..TargetSpec::default() };
        assert!(diag.check().is_ok());
        let wrong = TargetSpec { n: 3, ..diag.clone() };
        assert!(wrong.check().is_err());
        let gt = diag.build(&mut lowrank_core::rng::stream_rng(0, 0)).unwrap();
        assert_eq!(gt.spectrum(), &[2.0, 1.0]);
    }

    #[test]
    fn matrices_round_trip_through_rows() {
        let m = matrix_from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], "m").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(matrix_to_rows(&m), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(matrix_from_rows(&[vec![1.0], vec![1.0, 2.0]], "m").is_err());
        assert!(matrix_from_rows(&[], "m").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<TargetSpec>(r#"{"n": 2, "m": 2, "r": 1, "bogus": 1}"#).is_err());
    }
}
