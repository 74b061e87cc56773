//! Single-beam densities.
//!
//! A measurement `z` along a beam with expected range `z*` is explained by one
//! of four causes: a hit on the mapped object (Gaussian around `z*`), an
//! unmodeled object in front of it (occlusion density with quadratic decay
//! on `[0, z*]`), a random reading (uniform on `[0, z_max]`) or a max-range
//! reading. Occlusion and hit share the non-random mass `1 - pi3 - pi4`,
//! split by the occlusion probability `p_prime`.

mod occlusion;
mod thrun;

pub use occlusion::{
    geometric_count_pmf, network_occlusion_scale, occluded_count_pmf, p_prime_from_environment, verify_sum_identity,
    OcclusionEnvironment,
};
pub use thrun::{sample_thrun, thrun_components, thrun_density, ThrunCause, ThrunParams};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::normal_pdf;

/// Default half-width of the max-range band, in meters.
pub const DEFAULT_MAX_EPS: f64 = 0.01;

/// Minimal model parameters plus the sensor's maximum range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub sigma_m: f64,
    pub p_prime: f64,
    pub pi3: f64,
    pub pi4: f64,
    pub z_max: f64,
}

impl BeamParams {
    pub fn new(sigma_m: f64, p_prime: f64, pi3: f64, pi4: f64, z_max: f64) -> Result<Self> {
        let params = Self {
            sigma_m,
            p_prime,
            pi3,
            pi4,
            z_max,
        };
        params.validate()?;
        Ok(params)
    }

    /// Starting point used for maximum-likelihood learning.
    pub fn ml_init(z_max: f64) -> Self {
        Self {
            sigma_m: 0.5,
            p_prime: 0.4,
            pi3: 0.2,
            pi4: 0.1,
            z_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_m > 0.0 && self.sigma_m.is_finite()) {
            return Err(invalid("sigma_m", format!("must be positive, got {}", self.sigma_m)));
        }
        if !(self.z_max > 0.0 && self.z_max.is_finite()) {
            return Err(invalid("z_max", format!("must be positive, got {}", self.z_max)));
        }
        if !(0.0..=1.0).contains(&self.p_prime) {
            return Err(invalid("p_prime", format!("must lie in [0, 1], got {}", self.p_prime)));
        }
        if !(self.pi3 >= 0.0 && self.pi4 >= 0.0) {
            return Err(invalid("pi3/pi4", "must be non-negative"));
        }
        if self.pi3 + self.pi4 > 1.0 + 1e-12 {
            return Err(invalid(
                "pi3/pi4",
                format!("pi3 + pi4 must not exceed 1, got {}", self.pi3 + self.pi4),
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> MixtureWeights {
        let rest = (1.0 - self.pi3 - self.pi4).max(0.0);
        MixtureWeights {
            pi1: (1.0 - self.p_prime) * rest,
            pi2: self.p_prime * rest,
            pi3: self.pi3,
            pi4: self.pi4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
    pub pi4: f64,
}

impl MixtureWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.pi1, self.pi2, self.pi3, self.pi4]
    }

    pub fn from_array(w: [f64; 4]) -> Self {
        Self {
            pi1: w[0],
            pi2: w[1],
            pi3: w[2],
            pi4: w[3],
        }
    }

    pub fn sum(&self) -> f64 {
        self.pi1 + self.pi2 + self.pi3 + self.pi4
    }
}

pub fn p_hit(z: f64, z_star: f64, sigma_m: f64) -> f64 {
    normal_pdf(z, z_star, sigma_m)
}

/// Occlusion density on `[0, z_star]`; zero elsewhere and for `z_star <= 0`.
pub fn p_occl(z: f64, z_star: f64, p_prime: f64) -> f64 {
    if z_star <= 0.0 || !(0.0..=z_star).contains(&z) {
        return 0.0;
    }
    let g = 1.0 - (z_star - z) / z_star * p_prime;
    (1.0 - p_prime) / (z_star * g * g)
}

/// Cumulative distribution of [`p_occl`].
pub fn p_occl_cdf(z: f64, z_star: f64, p_prime: f64) -> f64 {
    if z_star <= 0.0 || z >= z_star {
        return if z >= z_star.max(0.0) { 1.0 } else { 0.0 };
    }
    if z <= 0.0 {
        return 0.0;
    }
    if p_prime == 0.0 {
        return z / z_star;
    }
    let g = 1.0 - (z_star - z) / z_star * p_prime;
    // F(z) = (1/p')(1 - (1-p')/g), which is 0 at z = 0 and 1 at z = z*.
    (1.0 - (1.0 - p_prime) / g) / p_prime
}

pub fn p_rand(z: f64, z_max: f64) -> f64 {
    if (0.0..=z_max).contains(&z) {
        1.0 / z_max
    } else {
        0.0
    }
}

/// Max-range indicator: 1 inside the band `|z - z_max| <= eps`.
pub fn p_max(z: f64, z_max: f64, eps: f64) -> f64 {
    if (z - z_max).abs() <= eps {
        1.0
    } else {
        0.0
    }
}

/// The four per-cause likelihoods `[hit, occluded, random, max]` at `z`
/// (already clipped to the sensor range by the caller).
pub fn component_likelihoods(z: f64, z_star: f64, params: &BeamParams, eps: f64) -> [f64; 4] {
    [
        p_hit(z, z_star, params.sigma_m),
        p_occl(z, z_star, params.p_prime),
        p_rand(z, params.z_max),
        p_max(z, params.z_max, eps),
    ]
}

/// Full mixture likelihood. Inside the max-range band the atom adds `pi4 * 1`.
pub fn rbbm_density(z: f64, z_star: f64, params: &BeamParams, eps: f64) -> f64 {
    let z = z.clamp(0.0, params.z_max);
    let w = params.weights().as_array();
    let c = component_likelihoods(z, z_star, params, eps);
    w.iter().zip(c.iter()).map(|(w, c)| w * c).sum()
}

/// Continuous part of the mixture (everything except the max-range atom).
pub fn rbbm_continuous(z: f64, z_star: f64, params: &BeamParams) -> f64 {
    if !(0.0..=params.z_max).contains(&z) {
        return 0.0;
    }
    let w = params.weights();
    w.pi1 * p_hit(z, z_star, params.sigma_m)
        + w.pi2 * p_occl(z, z_star, params.p_prime)
        + w.pi3 * p_rand(z, params.z_max)
}

/// Reference value of the mixture without the point-occluder approximation.
///
/// The occluded branch is the Gaussian measurement noise convolved with the
/// distribution of the nearest occluder position, integrated by a midpoint
/// sum with spacing close to `step`.
pub fn rbbm_exact_numeric(z: f64, z_star: f64, params: &BeamParams, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(invalid("step", format!("must be positive, got {step}")));
    }
    let z = z.clamp(0.0, params.z_max);
    let sigma = params.sigma_m;
    let pp = params.p_prime;
    let mut network = (1.0 - pp) * p_hit(z, z_star, sigma);
    if pp > 0.0 && z_star > 0.0 {
        let n = (z_star / step).ceil().max(1.0) as usize;
        let h = z_star / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            acc += p_hit(z, s, sigma) * p_occl(s, z_star, pp);
        }
        network += pp * acc * h;
    }
    let rest = (1.0 - params.pi3 - params.pi4).max(0.0);
    Ok(rest * network + params.pi3 * p_rand(z, params.z_max) + params.pi4 * p_max(z, params.z_max, DEFAULT_MAX_EPS))
}
