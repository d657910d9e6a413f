//! `geometry`: sample every region, certify each point, and check that the
//! regions cover the space.

use std::io::Write;
use std::sync::Arc;

use lowrank_core::geometry::{certify_point, classify_regions, sample_region, CertificateConstants, GeometryCertificate, RegionLabel, SensingGate};
use lowrank_core::objectives::{restricted_convexity_probe, Factorization, GeneralObjective, SmoothnessEstimate};
use lowrank_core::rng::{derive_seed, gaussian_matrix, stream_rng, uniform};
use lowrank_core::sensing::{gaussian_ensemble, SensingLoss};
use lowrank_core::tolerances::SAMPLER_BUDGET;
use lowrank_core::{Error, FactoredPoint, GroundTruth, Objective};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{experiment_config, schema_version, TargetSpec};
use crate::error::{CliError, CliResult};
use crate::output::{csv_opt, RunDir};
use crate::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifiedObjective {
    Factorization,
    Sensing,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub target: TargetSpec,
    pub ground_truths: usize,
    pub per_region: usize,
    pub objective: CertifiedObjective,
    /// Measurements for the sensing objective; defaults to `8 (n+m) r^2`.
    pub p: Option<usize>,
    /// Samples used to estimate the deviation constant `c_hat`.
    pub probe_trials: usize,
    /// Random points for the region-cover check (0 disables it).
    pub cover_points: usize,
    pub sampler_budget: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            schema_version: schema_version(),
            seed: 0,
            target: TargetSpec::default(),
            ground_truths: 5,
            per_region: 500,
            objective: CertifiedObjective::Factorization,
            p: None,
            probe_trials: 2000,
            cover_points: 10_000,
            sampler_budget: SAMPLER_BUDGET,
        }
    }
}

impl GeometryConfig {
    fn check(&self) -> Result<(), String> {
        self.target.check()?;
        if self.ground_truths == 0 {
            return Err("ground_truths must be at least 1".into());
        }
        if self.sampler_budget == 0 {
            return Err("sampler_budget must be positive".into());
        }
        if self.objective == CertifiedObjective::Sensing {
            if self.p == Some(0) {
                return Err("p must be positive".into());
            }
            if self.probe_trials == 0 {
                return Err("probe_trials must be positive".into());
            }
        }
        Ok(())
    }

    pub fn measurements(&self) -> usize {
        let t = &self.target;
        self.p.unwrap_or(8 * (t.n + t.m) * t.r * t.r)
    }
}

experiment_config!(GeometryConfig);

/// One certified point. Margins are `lhs - rhs` of each inequality, so a
/// point passes when every margin is at least `-1e-10`.
#[derive(Clone, Debug, Serialize)]
pub struct PointRecord {
    pub ground_truth: usize,
    pub region: RegionLabel,
    pub index: usize,
    pub labels: Vec<RegionLabel>,
    pub passed: bool,
    /// False when the ground truth failed the sensing gate: the point is
    /// reported but not counted.
    pub counted: bool,
    pub regularity_margin: Option<f64>,
    pub curvature_margin: Option<f64>,
    pub gradient_margin: Option<f64>,
    /// Stacked `W = [U; V]`, row-major.
    pub point: Vec<f64>,
}

impl PointRecord {
    fn new(k: usize, region: RegionLabel, index: usize, w: &FactoredPoint, cert: &GeometryCertificate, counted: bool) -> Self {
        let m = w.stacked();
        Self {
            ground_truth: k,
            region,
            index,
            labels: cert.labels.iter().copied().collect(),
            passed: cert.passed,
            counted,
            regularity_margin: cert.regularity.map(|c| c.lhs - c.rhs),
            curvature_margin: cert.curvature.map(|c| c.bound - c.rayleigh),
            gradient_margin: cert
                .large_gradient
                .iter()
                .map(|c| c.grad_norm - c.bound)
                .min_by(f64::total_cmp),
            point: (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundTruthSummary {
    pub index: usize,
    pub spectrum: Vec<f64>,
    pub probe: Option<SmoothnessEstimate>,
    pub gate: Option<SensingGate>,
    pub counted: bool,
    pub points: usize,
    pub failures: usize,
    /// Regions whose sampler ran out of budget.
    pub exhausted: Vec<RegionLabel>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionSummary {
    pub region: RegionLabel,
    pub certified: usize,
    pub failures: usize,
    pub pass_rate: f64,
    pub worst_margin: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverSummary {
    pub points: usize,
    pub covered: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometryReport {
    pub seed: u64,
    pub objective: CertifiedObjective,
    pub p: Option<usize>,
    pub ground_truths: Vec<GroundTruthSummary>,
    pub gate_passes: usize,
    pub regions: Vec<RegionSummary>,
    pub cover: Option<CoverSummary>,
    /// Failures among counted points.
    pub failures: usize,
    /// Points of ground truths that failed the sensing gate, and how many of
    /// them violated an inequality anyway.
    pub uncounted_points: usize,
    pub uncounted_failures: usize,
    pub partial: bool,
    pub passed: bool,
    #[serde(skip)]
    pub points: Vec<PointRecord>,
}

struct Instance {
    gt: GroundTruth,
    objective: Box<dyn Objective>,
    constants: CertificateConstants,
    probe: Option<SmoothnessEstimate>,
    gate: Option<SensingGate>,
}

fn build_instance(cfg: &GeometryConfig, k: usize) -> CliResult<Instance> {
    let gt = cfg.target.build(&mut stream_rng(derive_seed(cfg.seed, 0x6700), k as u64))?;
    match cfg.objective {
        CertifiedObjective::Factorization => Ok(Instance {
            objective: Box::new(Factorization::new(&gt, 0.5)?),
            gt,
            constants: CertificateConstants::FACTORIZATION,
            probe: None,
            gate: None,
        }),
        CertifiedObjective::Sensing => {
            let (n, m, r) = (gt.n(), gt.m(), gt.r_model());
            let op = gaussian_ensemble(n, m, cfg.measurements(), derive_seed(cfg.seed, 0x5e00 + k as u64))?;
            let loss = Arc::new(SensingLoss::from_target(Arc::new(op), gt.x_star())?.with_gram());
            let probe = restricted_convexity_probe(
                loss.as_ref(),
                (2 * r).min(n.min(m)),
                (4 * r).min(n.min(m)),
                cfg.probe_trials,
                derive_seed(cfg.seed, 0x9b00 + k as u64),
            )?;
            let gate = SensingGate::evaluate(probe.c_hat, &gt);
            Ok(Instance {
                objective: Box::new(GeneralObjective::sensing(loss, r, 0.5)?),
                gt,
                constants: CertificateConstants::SENSING,
                probe: Some(probe),
                gate: Some(gate),
            })
        }
    }
}

/// Fraction of random points, at scales `10^-2 .. 10^2`, carrying a label.
pub fn region_cover(gt: &GroundTruth, seed: u64, points: usize) -> CliResult<CoverSummary> {
    let rows = gt.n() + gt.m();
    let covered: usize = (0..points)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(derive_seed(seed, 0xc0e7), t as u64);
            let scale = 10f64.powf(uniform(&mut rng, -2.0, 2.0));
            let w = FactoredPoint::from_stacked(gaussian_matrix(&mut rng, rows, gt.r_model()) * scale, gt.n())?;
            Ok(usize::from(!classify_regions(&w, gt)?.is_empty()))
        })
        .collect::<CliResult<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(CoverSummary { points, covered, rate: if points == 0 { 1.0 } else { covered as f64 / points as f64 } })
}

pub fn execute(cfg: &GeometryConfig) -> CliResult<GeometryReport> {
    let mut summaries = Vec::new();
    let mut points = Vec::new();
    for k in 0..cfg.ground_truths {
        let inst = build_instance(cfg, k)?;
        let counted = inst.gate.map_or(true, |g| g.passed);
        let per_region: Vec<(RegionLabel, Result<Vec<PointRecord>, CliError>)> = RegionLabel::ALL
            .par_iter()
            .enumerate()
            .map(|(j, &label)| {
                let mut rng = stream_rng(derive_seed(cfg.seed, 0x5a00 + k as u64), j as u64);
                let result = sample_region(label, &inst.gt, &mut rng, cfg.per_region, cfg.sampler_budget)
                    .map_err(CliError::from)
                    .and_then(|sample| {
                        sample
                            .par_iter()
                            .enumerate()
                            .map(|(i, w)| {
                                let cert = certify_point(w.stacked(), inst.objective.as_ref(), &inst.gt, &inst.constants)?;
                                Ok(PointRecord::new(k, label, i, w, &cert, counted))
                            })
                            .collect()
                    });
                (label, result)
            })
            .collect();
        let mut summary = GroundTruthSummary {
            index: k,
            spectrum: inst.gt.spectrum().to_vec(),
            probe: inst.probe,
            gate: inst.gate,
            counted,
            points: 0,
            failures: 0,
            exhausted: Vec::new(),
        };
        for (label, result) in per_region {
            match result {
                Ok(records) => {
                    summary.points += records.len();
                    summary.failures += records.iter().filter(|r| !r.passed).count();
                    points.extend(records);
                }
                Err(CliError::Core(Error::Sampler(_))) => summary.exhausted.push(label),
                Err(e) => return Err(e),
            }
        }
        summaries.push(summary);
    }

    let regions = RegionLabel::ALL
        .iter()
        .map(|&region| {
            let counted: Vec<&PointRecord> = points.iter().filter(|p| p.counted && p.region == region).collect();
            let failures = counted.iter().filter(|p| !p.passed).count();
            let worst_margin = counted
                .iter()
                .flat_map(|p| [p.regularity_margin, p.curvature_margin, p.gradient_margin])
                .flatten()
                .min_by(f64::total_cmp);
            RegionSummary {
                region,
                certified: counted.len(),
                failures,
                pass_rate: if counted.is_empty() { 0.0 } else { 1.0 - failures as f64 / counted.len() as f64 },
                worst_margin,
            }
        })
        .collect::<Vec<_>>();

    let cover = if cfg.cover_points > 0 {
        let gt = cfg.target.build(&mut stream_rng(derive_seed(cfg.seed, 0x6700), 0))?;
        Some(region_cover(&gt, cfg.seed, cfg.cover_points)?)
    } else {
        None
    };

    let gate_passes = summaries.iter().filter(|s| s.counted).count();
    let failures: usize = regions.iter().map(|r| r.failures).sum();
    let partial = summaries.iter().any(|s| !s.exhausted.is_empty());
    let uncounted_points = points.iter().filter(|p| !p.counted).count();
    let uncounted_failures = points.iter().filter(|p| !p.counted && !p.passed).count();
    // The sensing constants only apply behind the gate; require it to hold
    // on at least four fifths of the ground truths.
    let gate_ok = 5 * gate_passes >= 4 * summaries.len();
    let passed = failures == 0 && !partial && gate_ok && cover.map_or(true, |c| c.covered == c.points);
    Ok(GeometryReport {
        seed: cfg.seed,
        objective: cfg.objective,
        p: (cfg.objective == CertifiedObjective::Sensing).then(|| cfg.measurements()),
        ground_truths: summaries,
        gate_passes,
        regions,
        cover,
        failures,
        uncounted_points,
        uncounted_failures,
        partial,
        passed,
        points,
    })
}

fn write_points_csv(out: &mut dyn Write, points: &[PointRecord]) -> CliResult<()> {
    writeln!(out, "ground_truth,region,index,labels,passed,counted,regularity_margin,curvature_margin,gradient_margin")?;
    for p in points {
        let labels: Vec<&str> = p.labels.iter().map(|l| l.name()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.ground_truth,
            p.region.name(),
            p.index,
            labels.join("|"),
            p.passed,
            p.counted,
            csv_opt(p.regularity_margin),
            csv_opt(p.curvature_margin),
            csv_opt(p.gradient_margin)
        )?;
    }
    Ok(())
}

pub fn run(cfg: &GeometryConfig, dir: &RunDir) -> CliResult<Outcome> {
    let report = execute(cfg)?;
    dir.write_with("points.csv", |out| write_points_csv(out, &report.points))?;
    dir.write_jsonl("points.jsonl", &report.points)?;
    Outcome::from_report(&report, report.passed)
}
