use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Result};
use crate::factored::{procrustes_matrices, FactoredPoint, GroundTruth};
use crate::linalg::singular_values;

/// The five regions partitioning the factored space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    /// Ball of radius `sigma_r^{1/2}` around the optimal orbit.
    R1,
    /// Nearly rank-deficient points of moderate size.
    R2,
    /// Far from the optimum, well conditioned, moderate size.
    R3a,
    /// Large spectral norm, moderate `||W W^T||_F`.
    R3b,
    /// Large `||W W^T||_F`.
    R3c,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 5] = [Self::R1, Self::R2, Self::R3a, Self::R3b, Self::R3c];

    pub fn name(self) -> &'static str {
        match self {
            Self::R1 => "R1",
            Self::R2 => "R2",
            Self::R3a => "R3a",
            Self::R3b => "R3b",
            Self::R3c => "R3c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name().eq_ignore_ascii_case(s))
    }
}

/// Threshold ratios used by the region definitions.
pub const MODERATE_RATIO: f64 = 20.0 / 19.0;
pub const LARGE_RATIO: f64 = 10.0 / 9.0;

/// Spectral quantities entering the region inequalities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegionMetrics {
    /// `dist(W, W*)`.
    pub dist: f64,
    /// `||W||`.
    pub spectral_norm: f64,
    /// `sigma_r(W)`.
    pub sigma_r_w: f64,
    /// `||W W^T||_F`.
    pub gram_norm: f64,
    /// `sigma_r(X*)^{1/2}`.
    pub radius: f64,
    /// `||W*||`.
    pub opt_norm: f64,
    /// `||W* W*^T||_F`.
    pub opt_gram_norm: f64,
}

impl RegionMetrics {
    pub fn compute(w: &DMatrix<f64>, gt: &GroundTruth) -> Result<Self> {
        let w_star = gt.w_star();
        check_shape("region metrics", w, w_star.stacked().shape())?;
        let s = singular_values(w);
        let gram = w.transpose() * w;
        Ok(Self {
            dist: procrustes_matrices(w, w_star.stacked())?.distance,
            spectral_norm: s[0],
            sigma_r_w: *s.last().expect("nonempty factor"),
            gram_norm: gram.norm(),
            radius: gt.sigma_r().sqrt(),
            opt_norm: gt.w_star_norm(),
            opt_gram_norm: gt.w_star_gram_norm(),
        })
    }

    pub fn labels(&self) -> BTreeSet<RegionLabel> {
        let mut out = BTreeSet::new();
        let moderate_gram = self.gram_norm <= MODERATE_RATIO * self.opt_gram_norm;
        let thin = self.sigma_r_w <= std::f64::consts::FRAC_1_SQRT_2 * self.radius;
        if self.dist <= self.radius {
            out.insert(RegionLabel::R1);
        }
        if thin && moderate_gram {
            out.insert(RegionLabel::R2);
        }
        if self.dist > self.radius
            && self.spectral_norm <= MODERATE_RATIO * self.opt_norm
            && !thin
            && moderate_gram
        {
            out.insert(RegionLabel::R3a);
        }
        if self.spectral_norm > MODERATE_RATIO * self.opt_norm && self.gram_norm <= LARGE_RATIO * self.opt_gram_norm {
            out.insert(RegionLabel::R3b);
        }
        if self.gram_norm > LARGE_RATIO * self.opt_gram_norm {
            out.insert(RegionLabel::R3c);
        }
        out
    }
}

/// All region labels carried by `W`; boundary points may carry two.
pub fn classify_regions(w: &FactoredPoint, gt: &GroundTruth) -> Result<BTreeSet<RegionLabel>> {
    Ok(RegionMetrics::compute(w.stacked(), gt)?.labels())
}
