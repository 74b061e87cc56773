//! Whole-scan likelihoods.
//!
//! Treating beams as independent ignores that a small pose error moves all
//! expected ranges together. The sample-based model instead averages the
//! scan likelihood over poses drawn from a local region around the
//! estimate, and widens the per-beam noise with the region's size so that a
//! finite number of samples still yields a smooth likelihood.

mod baseline;
mod grid;

pub use baseline::{gaussian_marginal, scan_loglik_gaussian_baseline, GaussianScanModel};
pub use grid::{probability_map, GridSpec, ProbabilityMap};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beam_model::{rbbm_continuous, rbbm_density, BeamParams, DEFAULT_MAX_EPS};
use crate::error::{invalid, Result};
use crate::geometry::{ray_cast, simulate_ideal_scan, Pose, ScanGeometry, SegmentMap};
use crate::numeric::{ln_normal_pdf, log_sum_exp, normal_pdf};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    /// Independent Gaussian perturbations with the given scales.
    Gaussian,
    /// Position uniform in a disk, heading uniform in an interval.
    UniformDisk,
}

/// Pose uncertainty around an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalRegion {
    pub trans_sigma: f64,
    pub rot_sigma: f64,
    pub euclid_weight: f64,
    pub angular_weight: f64,
    pub shape: RegionShape,
}

impl LocalRegion {
    pub fn new(trans_sigma: f64, rot_sigma: f64) -> Result<Self> {
        let region = Self {
            trans_sigma,
            rot_sigma,
            euclid_weight: 1.0,
            angular_weight: 1.0,
            shape: RegionShape::Gaussian,
        };
        region.validate()?;
        Ok(region)
    }

    /// A single point: no pose uncertainty.
    pub fn point() -> Self {
        Self {
            trans_sigma: 0.0,
            rot_sigma: 0.0,
            euclid_weight: 1.0,
            angular_weight: 1.0,
            shape: RegionShape::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trans_sigma >= 0.0 && self.rot_sigma >= 0.0) {
            return Err(invalid(
                "region",
                "translation and rotation scales must be non-negative",
            ));
        }
        if !(self.euclid_weight >= 0.0 && self.angular_weight >= 0.0) || self.euclid_weight + self.angular_weight == 0.0
        {
            return Err(invalid("region", "weights must be non-negative and not both zero"));
        }
        Ok(())
    }

    /// Weighted size of the region, used to widen the measurement noise.
    pub fn diameter(&self) -> f64 {
        self.euclid_weight * 2.0 * self.trans_sigma + self.angular_weight * 2.0 * self.rot_sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Only the hit component, for static environments.
    StaticHitOnly,
    /// The full four-cause mixture.
    DynamicFullMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanModelConfig {
    /// Number of poses sampled from the local region.
    pub samples: usize,
    /// Noise inflation constant.
    pub smoothing: f64,
    pub mode: ScanMode,
    pub eps: f64,
}

impl ScanModelConfig {
    pub fn new(samples: usize, smoothing: f64, mode: ScanMode) -> Result<Self> {
        let cfg = Self {
            samples,
            smoothing,
            mode,
            eps: DEFAULT_MAX_EPS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("samples", "at least one pose sample is required"));
        }
        if !(self.smoothing >= 0.0) {
            return Err(invalid("smoothing", "must be non-negative"));
        }
        Ok(())
    }
}

/// Measured ranges of one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub z: Vec<f64>,
    pub geometry: ScanGeometry,
}

impl Scan {
    pub fn new(z: Vec<f64>, geometry: ScanGeometry) -> Result<Self> {
        if z.len() != geometry.len() {
            return Err(invalid("scan", "needs one range per beam angle"));
        }
        if z.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("scan", "ranges must be finite and non-negative"));
        }
        Ok(Self { z, geometry })
    }

    fn clipped(&self, z_max: f64) -> Vec<f64> {
        self.z.iter().map(|z| z.clamp(0.0, z_max)).collect()
    }
}

/// `samples` poses drawn around `pose`.
pub fn sample_region_poses(pose: &Pose, region: &LocalRegion, samples: usize, seed: u64) -> Result<Vec<Pose>> {
    region.validate()?;
    if samples == 0 {
        return Err(invalid("samples", "at least one pose sample is required"));
    }
    let mut rng = substream(seed, 0);
    Ok((0..samples)
        .map(|_| {
            let (dx, dy, dh) = match region.shape {
                RegionShape::Gaussian => {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    let c: f64 = rng.sample(StandardNormal);
                    (a * region.trans_sigma, b * region.trans_sigma, c * region.rot_sigma)
                }
                RegionShape::UniformDisk => {
                    let r = region.trans_sigma * rng.random::<f64>().sqrt();
                    let phi = rng.random::<f64>() * std::f64::consts::TAU;
                    let h = (2.0 * rng.random::<f64>() - 1.0) * region.rot_sigma;
                    (r * phi.cos(), r * phi.sin(), h)
                }
            };
            Pose::new(pose.x + dx, pose.y + dy, pose.heading + dh)
        })
        .collect())
}

/// Measurement noise widened according to the region size.
pub fn inflated_sigma(sigma_m: f64, region: &LocalRegion, smoothing: f64) -> f64 {
    sigma_m * (1.0 + smoothing * region.diameter().sqrt())
}

/// Sum of per-beam log-likelihoods at a single pose.
pub fn scan_loglik_independent(
    scan: &Scan,
    pose: &Pose,
    map: &SegmentMap,
    params: &BeamParams,
    eps: f64,
) -> Result<f64> {
    params.validate()?;
    let expected = simulate_ideal_scan(map, pose, &scan.geometry);
    Ok(scan
        .z
        .iter()
        .zip(&expected)
        .map(|(&z, &s)| rbbm_density(z, s, params, eps).ln())
        .sum())
}

fn beam_log_likelihood(z: f64, z_star: f64, params: &BeamParams, cfg: &ScanModelConfig) -> f64 {
    match cfg.mode {
        ScanMode::StaticHitOnly => ln_normal_pdf(z, z_star, params.sigma_m),
        ScanMode::DynamicFullMixture => rbbm_density(z, z_star, params, cfg.eps).ln(),
    }
}

fn widened(params: &BeamParams, region: &LocalRegion, cfg: &ScanModelConfig) -> BeamParams {
    BeamParams {
        sigma_m: inflated_sigma(params.sigma_m, region, cfg.smoothing),
        ..*params
    }
}

/// Log of the scan likelihood averaged over poses sampled from the region.
pub fn scan_loglik_sample_based(
    scan: &Scan,
    pose: &Pose,
    map: &SegmentMap,
    params: &BeamParams,
    region: &LocalRegion,
    cfg: &ScanModelConfig,
    seed: u64,
) -> Result<f64> {
    params.validate()?;
    cfg.validate()?;
    let poses = sample_region_poses(pose, region, cfg.samples, seed)?;
    let params = widened(params, region, cfg);
    let z = scan.clipped(params.z_max);
    let per_pose: Vec<f64> = poses
        .iter()
        .map(|p| {
            let expected = simulate_ideal_scan(map, p, &scan.geometry);
            z.iter()
                .zip(&expected)
                .map(|(&z, &s)| beam_log_likelihood(z, s, &params, cfg))
                .sum()
        })
        .collect();
    Ok(log_sum_exp(&per_pose) - (cfg.samples as f64).ln())
}

/// Per-beam marginal of the sample-based model as a function of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMarginal {
    /// Expected range of the beam at every sampled pose.
    pub expected: Vec<f64>,
    /// Parameters with the widened noise.
    pub params: BeamParams,
    pub mode: ScanMode,
}

impl SampleMarginal {
    /// Continuous part of the marginal density.
    pub fn density(&self, z: f64) -> f64 {
        let sum: f64 = match self.mode {
            ScanMode::StaticHitOnly => self
                .expected
                .iter()
                .map(|&s| normal_pdf(z, s, self.params.sigma_m))
                .sum(),
            ScanMode::DynamicFullMixture => self.expected.iter().map(|&s| rbbm_continuous(z, s, &self.params)).sum(),
        };
        sum / self.expected.len() as f64
    }

    /// Point mass at the maximum range.
    pub fn atom_mass(&self) -> f64 {
        match self.mode {
            ScanMode::StaticHitOnly => 0.0,
            ScanMode::DynamicFullMixture => self.params.pi4,
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn sample_marginal(
    beam_index: usize,
    geometry: &ScanGeometry,
    pose: &Pose,
    map: &SegmentMap,
    params: &BeamParams,
    region: &LocalRegion,
    cfg: &ScanModelConfig,
    seed: u64,
) -> Result<SampleMarginal> {
    params.validate()?;
    cfg.validate()?;
    let angle = *geometry
        .angles()
        .get(beam_index)
        .ok_or_else(|| invalid("beam_index", format!("scan has only {} beams", geometry.len())))?;
    let poses = sample_region_poses(pose, region, cfg.samples, seed)?;
    Ok(SampleMarginal {
        expected: poses.iter().map(|p| ray_cast(map, p, angle)).collect(),
        params: widened(params, region, cfg),
        mode: cfg.mode,
    })
}

/// Marginal evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeamMarginal {
    pub z: Vec<f64>,
    pub density: Vec<f64>,
    pub atom_mass: f64,
    /// Trapezoid integral of the density plus the atom mass.
    pub total_mass: f64,
}

impl BeamMarginal {
    pub fn from_fn(grid: &[f64], density: impl Fn(f64) -> f64, atom_mass: f64) -> Result<Self> {
        if grid.is_empty() {
            return Err(invalid("grid", "needs at least one point"));
        }
        let density: Vec<f64> = grid.iter().map(|&z| density(z)).collect();
        let integral: f64 = grid
            .windows(2)
            .zip(density.windows(2))
            .map(|(z, d)| 0.5 * (z[1] - z[0]) * (d[0] + d[1]))
            .sum();
        Ok(Self {
            z: grid.to_vec(),
            density,
            atom_mass,
            total_mass: integral + atom_mass,
        })
    }

    /// Two-column CSV `z,density`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("z,density\n");
        for (z, d) in self.z.iter().zip(&self.density) {
            out.push_str(&format!("{z},{d}\n"));
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
pub fn beam_marginal(
    beam_index: usize,
    geometry: &ScanGeometry,
    pose: &Pose,
    map: &SegmentMap,
    params: &BeamParams,
    region: &LocalRegion,
    cfg: &ScanModelConfig,
    grid: &[f64],
    seed: u64,
) -> Result<BeamMarginal> {
    let m = sample_marginal(beam_index, geometry, pose, map, params, region, cfg, seed)?;
    BeamMarginal::from_fn(grid, |z| m.density(z), m.atom_mass())
}

/// Indices of local maxima of a sampled curve that reach at least
/// `min_relative` of the global maximum. Flat tops count once.
pub fn local_maxima(values: &[f64], min_relative: f64) -> Vec<usize> {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut peaks = Vec::new();
    let n = values.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        let left_lower = i == 0 || values[i - 1] < values[i];
        let right_lower = j + 1 == n || values[j + 1] < values[j];
        if left_lower && right_lower && values[i] >= min_relative * top && values[i] > 0.0 {
            peaks.push((i + j) / 2);
        }
        i = j + 1;
    }
    peaks
}
