//! Joint-Gaussian scan model fitted to simulated scans.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{inflated_sigma, sample_region_poses, LocalRegion, Scan, ScanModelConfig};
use crate::beam_model::BeamParams;
use crate::error::{invalid, Error, Result};
use crate::geometry::{simulate_ideal_scan, Pose, ScanGeometry, SegmentMap};

/// Diagonal regularization tried when the plain factorization fails.
pub const JITTER: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean and covariance of the noiseless scans over the region, with the
/// measurement variance added on the diagonal.
#[derive(Debug, Clone)]
pub struct GaussianScanModel {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// Whether the jitter was needed.
    pub regularized: bool,
}

impl GaussianScanModel {
    /// Fits to noiseless scans at `poses`.
    pub fn fit(map: &SegmentMap, geometry: &ScanGeometry, poses: &[Pose], sigma: f64) -> Result<Self> {
        if poses.len() < 2 {
            return Err(invalid("samples", "the Gaussian fit needs at least two poses"));
        }
        let b = geometry.len();
        let l = poses.len();
        let scans: Vec<Vec<f64>> = poses.iter().map(|p| simulate_ideal_scan(map, p, geometry)).collect();
        let mut mean = DVector::zeros(b);
        for s in &scans {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean /= l as f64;
        let mut covariance = DMatrix::zeros(b, b);
        for s in &scans {
            let d = DVector::from_iterator(b, s.iter().zip(mean.iter()).map(|(v, m)| v - m));
            covariance += &d * d.transpose();
        }
        covariance /= (l - 1) as f64;
        for i in 0..b {
            covariance[(i, i)] += sigma * sigma;
        }
        let (chol, regularized) = match Cholesky::new(covariance.clone()) {
            Some(c) => (c, false),
            None => {
                let mut jittered = covariance.clone();
                for i in 0..b {
                    jittered[(i, i)] += JITTER;
                }
                (Cholesky::new(jittered).ok_or(Error::Factorization)?, true)
            }
        };
        Ok(Self {
            mean,
            covariance,
            chol,
            regularized,
        })
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let b = self.mean.len();
        let r = DVector::from_iterator(b, z.iter().zip(self.mean.iter()).map(|(z, m)| z - m));
        let l = self.chol.l();
        let y = l.solve_lower_triangular(&r).expect("Cholesky factor is nonsingular");
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (b as f64 * LN_2PI + log_det + y.norm_squared())
    }

    /// Mean and standard deviation of beam `b`.
    pub fn marginal(&self, b: usize) -> (f64, f64) {
        (self.mean[b], self.covariance[(b, b)].sqrt())
    }
}

fn fitted(
    geometry: &ScanGeometry,
    pose: &Pose,
    map: &SegmentMap,
    params: &BeamParams,
    region: &LocalRegion,
    cfg: &ScanModelConfig,
    seed: u64,
) -> Result<GaussianScanModel> {
    params.validate()?;
    cfg.validate()?;
    let poses = sample_region_poses(pose, region, cfg.samples, seed)?;
    let sigma = inflated_sigma(params.sigma_m, region, cfg.smoothing);
    GaussianScanModel::fit(map, geometry, &poses, sigma)
}

/// Scan log-likelihood under the joint-Gaussian fit.
pub fn scan_loglik_gaussian_baseline(
    scan: &Scan,
    pose: &Pose,
    map: &SegmentMap,
    params: &BeamParams,
    region: &LocalRegion,
    cfg: &ScanModelConfig,
    seed: u64,
) -> Result<f64> {
    let model = fitted(&scan.geometry, pose, map, params, region, cfg, seed)?;
    Ok(model.log_density(&scan.clipped(params.z_max)))
}

/// Mean and standard deviation of one beam under the joint-Gaussian fit.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_marginal(
    beam_index: usize,
    geometry: &ScanGeometry,
    pose: &Pose,
    map: &SegmentMap,
    params: &BeamParams,
    region: &LocalRegion,
    cfg: &ScanModelConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    if beam_index >= geometry.len() {
        return Err(invalid("beam_index", format!("scan has only {} beams", geometry.len())));
    }
    Ok(fitted(geometry, pose, map, params, region, cfg, seed)?.marginal(beam_index))
}
