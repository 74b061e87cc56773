//! Scan likelihood over a grid of candidate positions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{scan_loglik_sample_based, LocalRegion, Scan, ScanModelConfig};
use crate::beam_model::BeamParams;
use crate::error::{invalid, Result};
use crate::geometry::{Pose, SegmentMap};
use crate::numeric::log_sum_exp;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    pub heading: f64,
    /// Heading offsets averaged per cell; empty means the fixed heading only.
    #[serde(default)]
    pub heading_offsets: Vec<f64>,
}

impl GridSpec {
    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.x_min, self.x_max, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min, self.y_max, self.ny)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(invalid("grid", "needs at least one cell per axis"));
        }
        if !(self.x_max >= self.x_min && self.y_max >= self.y_min) {
            return Err(invalid("grid", "extents must be ordered"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major log-likelihoods, one row per `y`.
    pub loglik: Vec<f64>,
}

impl ProbabilityMap {
    pub fn loglik_at(&self, ix: usize, iy: usize) -> f64 {
        self.loglik[iy * self.xs.len() + ix]
    }

    /// CSV grid of likelihood values: header row of `x`, first column `y`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("y\\x");
        for x in &self.xs {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
        for (iy, y) in self.ys.iter().enumerate() {
            out.push_str(&y.to_string());
            for ix in 0..self.xs.len() {
                out.push_str(&format!(",{}", self.loglik_at(ix, iy).exp()));
            }
            out.push('\n');
        }
        out
    }
}

/// Sample-based scan likelihood at every grid cell. Cell `i` draws its
/// region poses from a seed derived from `(seed, i)`.
pub fn probability_map(
    scan: &Scan,
    map: &SegmentMap,
    params: &BeamParams,
    region: &LocalRegion,
    cfg: &ScanModelConfig,
    grid: &GridSpec,
    seed: u64,
) -> Result<ProbabilityMap> {
    grid.validate()?;
    let xs = grid.xs();
    let ys = grid.ys();
    let offsets = if grid.heading_offsets.is_empty() {
        vec![0.0]
    } else {
        grid.heading_offsets.clone()
    };
    let cells: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let loglik = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let cell_seed = derive_seed(seed, i as u64);
            let per_heading = offsets
                .iter()
                .enumerate()
                .map(|(k, off)| {
                    let pose = Pose::new(x, y, grid.heading + off);
                    scan_loglik_sample_based(scan, &pose, map, params, region, cfg, derive_seed(cell_seed, k as u64))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(log_sum_exp(&per_heading) - (per_heading.len() as f64).ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ProbabilityMap { xs, ys, loglik })
}
