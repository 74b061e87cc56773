//! Parameter learning from `(z, z*)` data.
//!
//! Readings inside the max-range band are compared by probability mass: the
//! continuous components are multiplied by the band width before they
//! compete with the max-range atom. Without this, a density of order
//! `1/z_max` is weighed against a unit indicator, and the fit pushes all
//! max-range readings into the uniform component. `FitOptions::band_as_mass`
//! switches back to the raw indicator arithmetic.

mod dataset;
mod ml;
mod thrun_fit;
mod vb;

pub use dataset::Dataset;
pub use ml::{ml_em_fit, ml_log_likelihood, ml_responsibilities, MlFit};
pub use thrun_fit::{thrun_ml_fit, thrun_responsibilities, ThrunFit};
pub use vb::{
    vb_em_fit, vb_m_step, vb_point_estimates, vb_predictive, vb_responsibilities, HitFrame, VbConfig, VbFit, VbInit,
    VbPosterior, VbPriors,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam_model::DEFAULT_MAX_EPS;
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, log_sum_exp};

/// Smallest standard deviation an update may produce, in meters.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Settings shared by the maximum-likelihood fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Half-width of the max-range band.
    pub eps: f64,
    /// Weigh continuous components by the band width inside the band.
    pub band_as_mass: bool,
    /// Shorten a step that would lower the log-likelihood.
    pub safeguard: bool,
    /// Stop early once no parameter moves by more than this.
    pub tolerance: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_MAX_EPS,
            band_as_mass: true,
            safeguard: true,
            tolerance: None,
        }
    }
}

/// Per-row cause probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    rows: Vec<[f64; 4]>,
}

impl Responsibilities {
    pub fn new(rows: Vec<[f64; 4]>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|v| !(*v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(crate::error::invalid(
                    "responsibilities",
                    format!("row {i} must be non-negative and sum to 1"),
                ));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[[f64; 4]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Effective number of points per cause.
    pub fn totals(&self) -> [f64; 4] {
        std::array::from_fn(|s| compensated_sum(self.rows.iter().map(|r| r[s])))
    }
}

/// Normalizes log-weighted component terms row by row.
///
/// `log_terms(i)` returns `ln(weight_s * likelihood_s)` for row `i`. Rows are
/// evaluated in parallel; the log-likelihood is reduced sequentially.
pub(crate) fn e_step<F>(data: &Dataset, log_terms: F) -> Result<(Responsibilities, f64)>
where
    F: Fn(f64, f64) -> [f64; 4] + Sync,
{
    let out: Vec<Result<([f64; 4], f64)>> = data
        .z()
        .par_iter()
        .zip(data.z_star().par_iter())
        .enumerate()
        .map(|(row, (&z, &z_star))| {
            let terms = log_terms(z, z_star);
            let norm = log_sum_exp(&terms);
            if norm == f64::NEG_INFINITY || norm.is_nan() {
                return Err(Error::ZeroNormalizer { row, z, z_star });
            }
            let mut r = terms.map(|t| (t - norm).exp());
            // exact normalization so rows sum to one to rounding
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            Ok((r, norm))
        })
        .collect();
    let mut rows = Vec::with_capacity(out.len());
    let mut norms = Vec::with_capacity(out.len());
    for item in out {
        let (r, n) = item?;
        rows.push(r);
        norms.push(n);
    }
    Ok((Responsibilities { rows }, compensated_sum(norms)))
}

/// `ln(w) + ln(l)`, treating zero weights or likelihoods as `-inf`.
pub(crate) fn log_term(weight: f64, likelihood: f64) -> f64 {
    if weight <= 0.0 || likelihood <= 0.0 {
        f64::NEG_INFINITY
    } else {
        weight.ln() + likelihood.ln()
    }
}

/// Scale applied to continuous components for a reading with max-range
/// indicator `in_band`.
pub(crate) fn band_scale(in_band: bool, options: &FitOptions) -> f64 {
    if in_band && options.band_as_mass {
        options.eps
    } else {
        1.0
    }
}

/// Weighted standard deviation of residuals; `None` when the weights vanish.
pub(crate) fn weighted_sigma<'a>(data: &Dataset, weights: impl Iterator<Item = &'a f64>, total: f64) -> Option<f64> {
    if !(total > 0.0) {
        return None;
    }
    let ss = compensated_sum(weights.zip(data.rows()).map(|(w, (z, s))| w * (z - s) * (z - s)));
    Some((ss / total).sqrt().max(SIGMA_FLOOR))
}

/// Line search used when a full update lowers the likelihood: tries
/// `old + 2^-k (new - old)` for `k = 1..=max_halvings`.
pub(crate) fn step_halving<P, E>(
    old: &P,
    new: &P,
    old_ll: f64,
    interpolate: impl Fn(&P, &P, f64) -> P,
    evaluate: E,
    max_halvings: u32,
) -> Option<(P, Responsibilities, f64)>
where
    E: Fn(&P) -> Result<(Responsibilities, f64)>,
{
    let mut t = 1.0;
    for _ in 0..max_halvings {
        t *= 0.5;
        let candidate = interpolate(old, new, t);
        if let Ok((resp, ll)) = evaluate(&candidate) {
            if ll >= old_ll {
                return Some((candidate, resp, ll));
            }
        }
    }
    None
}
