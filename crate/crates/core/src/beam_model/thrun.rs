//! Baseline mixture with an exponentially decaying short-reading component.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{p_hit, p_max, p_rand};
use crate::error::{invalid, Result};

/// Smallest admissible rate of the short-reading component.
pub const MIN_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrunParams {
    pub sigma_m: f64,
    pub z_hit: f64,
    pub z_short: f64,
    pub z_max_w: f64,
    pub z_rand: f64,
    pub lambda_short: f64,
    pub z_max: f64,
}

impl ThrunParams {
    pub fn new(
        sigma_m: f64,
        [z_hit, z_short, z_max_w, z_rand]: [f64; 4],
        lambda_short: f64,
        z_max: f64,
    ) -> Result<Self> {
        let params = Self {
            sigma_m,
            z_hit,
            z_short,
            z_max_w,
            z_rand,
            lambda_short,
            z_max,
        };
        params.validate()?;
        Ok(params)
    }

    /// Starting point used for learning.
    pub fn ml_init(z_max: f64) -> Self {
        Self {
            sigma_m: 0.5,
            z_hit: 0.4,
            z_short: 0.3,
            z_max_w: 0.1,
            z_rand: 0.2,
            lambda_short: 0.1,
            z_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_m > 0.0) {
            return Err(invalid("sigma_m", format!("must be positive, got {}", self.sigma_m)));
        }
        if !(self.z_max > 0.0) {
            return Err(invalid("z_max", format!("must be positive, got {}", self.z_max)));
        }
        if !(self.lambda_short > 0.0) {
            return Err(invalid(
                "lambda_short",
                format!("must be positive, got {}", self.lambda_short),
            ));
        }
        let w = self.weights();
        if w.iter().any(|w| !(0.0..=1.0).contains(w)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "weights",
                "z_hit, z_short, z_max_w, z_rand must lie in [0, 1] and sum to 1",
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.z_hit, self.z_short, self.z_max_w, self.z_rand]
    }
}

/// Truncated exponential on `[0, z_star]`.
fn p_short(z: f64, z_star: f64, lambda: f64) -> f64 {
    if z_star <= 0.0 || !(0.0..=z_star).contains(&z) {
        return 0.0;
    }
    let lambda = lambda.max(MIN_LAMBDA);
    // lambda / (1 - exp(-lambda z*)) written to stay accurate as lambda -> 0
    let norm = -lambda / (-lambda * z_star).exp_m1();
    norm * (-lambda * z).exp()
}

/// Per-cause likelihoods `[hit, short, max, rand]`.
pub fn thrun_components(z: f64, z_star: f64, params: &ThrunParams, eps: f64) -> [f64; 4] {
    [
        p_hit(z, z_star, params.sigma_m),
        p_short(z, z_star, params.lambda_short),
        p_max(z, params.z_max, eps),
        p_rand(z, params.z_max),
    ]
}

pub fn thrun_density(z: f64, z_star: f64, params: &ThrunParams, eps: f64) -> f64 {
    let z = z.clamp(0.0, params.z_max);
    let c = thrun_components(z, z_star, params, eps);
    params.weights().iter().zip(c.iter()).map(|(w, c)| w * c).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThrunCause {
    Hit,
    Short,
    Max,
    Random,
}

/// Draws one reading from the baseline's own generative story.
pub fn sample_thrun<R: Rng + ?Sized>(z_star: f64, params: &ThrunParams, rng: &mut R) -> (ThrunCause, f64) {
    let u: f64 = rng.random();
    let w = params.weights();
    let (cause, z) = if u < w[0] {
        let n: f64 = rng.sample(rand_distr::StandardNormal);
        (ThrunCause::Hit, z_star + params.sigma_m * n)
    } else if u < w[0] + w[1] {
        let lambda = params.lambda_short.max(MIN_LAMBDA);
        let v: f64 = rng.random();
        // inverse CDF of the truncated exponential
        let z = -(v * (-lambda * z_star).exp_m1()).ln_1p() / lambda;
        (ThrunCause::Short, z)
    } else if u < w[0] + w[1] + w[2] {
        (ThrunCause::Max, params.z_max)
    } else {
        (ThrunCause::Random, rng.random::<f64>() * params.z_max)
    };
    (cause, z.clamp(0.0, params.z_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate;
    use crate::rng::substream;

    #[test]
    fn collapses_to_gaussian() {
        let params = ThrunParams::new(0.2, [1.0, 0.0, 0.0, 0.0], 0.5, 10.0).unwrap();
        for z in [1.0, 4.9, 5.0, 5.4] {
            assert_eq!(thrun_density(z, 5.0, &params, 0.01), p_hit(z, 5.0, 0.2));
        }
    }

    #[test]
    fn short_component_normalizes() {
        let q = integrate(|z| p_short(z, 5.0, 0.1), 0.0, 5.0);
        assert!((q.value - 1.0).abs() < 1e-9);
        let q = integrate(|z| p_short(z, 5.0, 3.0), 0.0, 5.0);
        assert!((q.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn short_component_tends_to_uniform() {
        for z in [0.0, 1.0, 4.0, 5.0] {
            assert!((p_short(z, 5.0, 1e-9) - 0.2).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(ThrunParams::new(0.2, [0.5, 0.5, 0.5, 0.0], 0.5, 10.0).is_err());
        assert!(ThrunParams::new(0.2, [0.5, 0.5, 0.0, 0.0], 0.0, 10.0).is_err());
    }

    #[test]
    fn sampler_short_readings_follow_density() {
        let params = ThrunParams::new(0.2, [0.0, 1.0, 0.0, 0.0], 0.8, 10.0).unwrap();
        let mut rng = substream(5, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| sample_thrun(5.0, &params, &mut rng).1).sum::<f64>() / n as f64;
        let expected = integrate(|z| z * p_short(z, 5.0, 0.8), 0.0, 5.0).value;
        assert!((mean - expected).abs() < 0.01, "{mean} vs {expected}");
    }
}
