//! Occlusion by unmodeled objects.
//!
//! The number of unmodeled objects is geometric with ratio `p`, and each
//! lies uniformly on `[0, z_max]`. An object occludes the beam when it lies
//! in front of the mapped object, which happens with probability
//! `u = z*/z_max`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionEnvironment {
    /// Ratio of the geometric prior on the number of unmodeled objects.
    pub p: f64,
    /// Probability that a single object lies in front of the mapped object.
    pub u: f64,
}

impl OcclusionEnvironment {
    pub fn new(p: f64, u: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("p", format!("must lie in [0, 1), got {p}")));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(invalid("u", format!("must lie in [0, 1], got {u}")));
        }
        Ok(Self { p, u })
    }

    /// Environment seen by a beam with expected range `z_star`.
    pub fn for_beam(p: f64, z_star: f64, z_max: f64) -> Result<Self> {
        if !(z_max > 0.0) {
            return Err(invalid("z_max", format!("must be positive, got {z_max}")));
        }
        Self::new(p, (z_star / z_max).clamp(0.0, 1.0))
    }
}

/// Probability that at least one unmodeled object occludes the beam.
pub fn p_prime_from_environment(env: &OcclusionEnvironment) -> f64 {
    env.u * env.p / (1.0 - (1.0 - env.u) * env.p)
}

/// Prior probability of `n` unmodeled objects.
pub fn geometric_count_pmf(n: u64, p: f64) -> f64 {
    if p == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (1.0 - p) * p.powf(n as f64)
}

/// Probability that exactly `k` objects occlude the beam.
pub fn occluded_count_pmf(k: u64, env: &OcclusionEnvironment) -> f64 {
    geometric_count_pmf(k, p_prime_from_environment(env))
}

/// Density over `[0, z_max]` of the position of the nearest occluding
/// object, jointly with the event that the beam is occluded. Its integral
/// over `[0, z*]` is the occlusion probability.
pub fn network_occlusion_scale(z: f64, p: f64, z_max: f64) -> f64 {
    if !(0.0..=z_max).contains(&z) {
        return 0.0;
    }
    let g = 1.0 - (1.0 - z / z_max) * p;
    p * (1.0 - p) / (z_max * g * g)
}

/// Partial sum of `sum_t (t+k)!/(t! k!) e^t` over `terms` terms, and its
/// closed-form limit `1/(1-e)^(k+1)`.
pub fn verify_sum_identity(k: u64, e: f64, terms: u64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::DivergentSeries(e));
    }
    if terms == 0 {
        return Err(invalid("terms", "at least one term is required"));
    }
    let kf = k as f64;
    let closed = (1.0 - e).powf(-(kf + 1.0));
    if e == 0.0 {
        return Ok((1.0, closed));
    }
    let ln_k_fact = ln_gamma(kf + 1.0);
    let ln_e = e.ln();
    let mut sum = 0.0;
    // Terms first grow then decay; summing smallest-last keeps rounding low.
    for t in 0..terms {
        let tf = t as f64;
        let ln_term = ln_gamma(tf + kf + 1.0) - ln_gamma(tf + 1.0) - ln_k_fact + tf * ln_e;
        sum += ln_term.exp();
    }
    Ok((sum, closed))
}
