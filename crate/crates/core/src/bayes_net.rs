//! Forward simulation of the generative beam network.
//!
//! Each draw first decides whether the reading is a random or a max-range
//! reading. Otherwise the number of unmodeled objects is drawn from the
//! geometric prior, each object is placed uniformly along the full sensor
//! range, and the reading is Gaussian around the nearest object in front of
//! the mapped one (or around `z*` if there is none). Readings are clipped to
//! `[0, z_max]`.
//!
//! Draws are generated in fixed-size chunks; chunk `c` uses stream `c` of
//! the master seed, so output does not depend on the thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam_model::{p_prime_from_environment, rbbm_continuous, BeamParams, OcclusionEnvironment};
use crate::error::{invalid, Result};
use crate::estimators::Dataset;
use crate::metrics::{build_histogram, discretize_density, hellinger_distance, uniform_edges};
use crate::rng::substream;

/// Draws per random stream.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    /// Ratio of the geometric prior on the number of unmodeled objects.
    pub p: f64,
    pub sigma_m: f64,
    pub pi3: f64,
    pub pi4: f64,
    pub z_max: f64,
}

impl NetParams {
    pub fn new(p: f64, sigma_m: f64, pi3: f64, pi4: f64, z_max: f64) -> Result<Self> {
        let params = Self {
            p,
            sigma_m,
            pi3,
            pi4,
            z_max,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(invalid("p", format!("must lie in [0, 1), got {}", self.p)));
        }
        BeamParams {
            sigma_m: self.sigma_m,
            p_prime: 0.0,
            pi3: self.pi3,
            pi4: self.pi4,
            z_max: self.z_max,
        }
        .validate()
    }

    /// Closed-form model parameters for a beam with expected range `z_star`.
    pub fn beam_params(&self, z_star: f64) -> Result<BeamParams> {
        let env = OcclusionEnvironment::for_beam(self.p, z_star, self.z_max)?;
        BeamParams::new(
            self.sigma_m,
            p_prime_from_environment(&env),
            self.pi3,
            self.pi4,
            self.z_max,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    Hit,
    Occluded,
    Random,
    #[serde(rename = "maxrange")]
    MaxRange,
}

impl Cause {
    pub const ALL: [Cause; 4] = [Cause::Hit, Cause::Occluded, Cause::Random, Cause::MaxRange];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Hit => "hit",
            Cause::Occluded => "occluded",
            Cause::Random => "random",
            Cause::MaxRange => "maxrange",
        }
    }
}

impl std::str::FromStr for Cause {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Cause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown cause `{s}`"))
    }
}

/// One ancestral sample with its latent variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub cause: Cause,
    /// Number of unmodeled objects.
    pub n: u64,
    /// Number of them in front of the mapped object.
    pub k: u64,
    /// Position of the nearest occluding object.
    pub z_occl_star: Option<f64>,
    pub z: f64,
}

/// Geometric count by inversion: `P(N >= n) = p^n`.
fn sample_count<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    // 1 - U lies in (0, 1], so the log is finite.
    let u = 1.0 - rng.random::<f64>();
    (u.ln() / p.ln()).floor() as u64
}

fn check_beam(z_star: f64, params: &NetParams) -> Result<()> {
    params.validate()?;
    if !(z_star > 0.0 && z_star <= params.z_max) {
        return Err(invalid("z_star", format!("must lie in (0, z_max], got {z_star}")));
    }
    Ok(())
}

fn draw<R: Rng + ?Sized>(z_star: f64, params: &NetParams, rng: &mut R) -> SampleTrace {
    let z_max = params.z_max;
    let u: f64 = rng.random();
    if u < params.pi3 {
        return SampleTrace {
            cause: Cause::Random,
            n: 0,
            k: 0,
            z_occl_star: None,
            z: rng.random::<f64>() * z_max,
        };
    }
    if u < params.pi3 + params.pi4 {
        return SampleTrace {
            cause: Cause::MaxRange,
            n: 0,
            k: 0,
            z_occl_star: None,
            z: z_max,
        };
    }
    let n = sample_count(params.p, rng);
    let mut k = 0;
    let mut nearest = f64::INFINITY;
    for _ in 0..n {
        let x = rng.random::<f64>() * z_max;
        if x < z_star {
            k += 1;
            nearest = nearest.min(x);
        }
    }
    let noise: f64 = rng.sample(StandardNormal);
    let (cause, center, z_occl_star) = if k == 0 {
        (Cause::Hit, z_star, None)
    } else {
        (Cause::Occluded, nearest, Some(nearest))
    };
    SampleTrace {
        cause,
        n,
        k,
        z_occl_star,
        z: (center + params.sigma_m * noise).clamp(0.0, z_max),
    }
}

/// One draw from the network using the caller's generator.
pub fn sample_beam_with<R: Rng + ?Sized>(z_star: f64, params: &NetParams, rng: &mut R) -> Result<SampleTrace> {
    check_beam(z_star, params)?;
    Ok(draw(z_star, params, rng))
}

/// One draw keyed by `seed`.
pub fn sample_beam(z_star: f64, params: &NetParams, seed: u64) -> Result<SampleTrace> {
    sample_beam_with(z_star, params, &mut substream(seed, 0))
}

/// `draws` traces for one expected range, generated in parallel chunks.
pub fn sample_traces(z_star: f64, params: &NetParams, draws: usize, seed: u64) -> Result<Vec<SampleTrace>> {
    check_beam(z_star, params)?;
    Ok(chunked(draws, seed, |_, rng| draw(z_star, params, rng)))
}

fn chunked<T: Send, F>(total: usize, seed: u64, f: F) -> Vec<T>
where
    F: Fn(usize, &mut crate::rng::SimRng) -> T + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            (start..end).map(|i| f(i, &mut rng)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// `per_range` draws for each expected range, in input order.
pub fn sample_dataset(z_stars: &[f64], params: &NetParams, per_range: usize, seed: u64) -> Result<Dataset> {
    if per_range == 0 {
        return Err(invalid("per_range", "at least one draw per expected range is required"));
    }
    if z_stars.is_empty() {
        return Err(invalid("z_stars", "at least one expected range is required"));
    }
    for &z_star in z_stars {
        check_beam(z_star, params)?;
    }
    let traces = chunked(z_stars.len() * per_range, seed, |i, rng| {
        let z_star = z_stars[i / per_range];
        (z_star, draw(z_star, params, rng))
    });
    let mut z = Vec::with_capacity(traces.len());
    let mut star = Vec::with_capacity(traces.len());
    let mut cause = Vec::with_capacity(traces.len());
    for (s, t) in traces {
        z.push(t.z);
        star.push(s);
        cause.push(t.cause);
    }
    Dataset::with_causes(z, star, cause)
}

/// Hellinger distance between the histogram of `draws` simulated readings
/// and the closed-form mixture discretized on the same bins over
/// `[0, z_max]`.
pub fn validate_against_analytic(z_star: f64, params: &NetParams, draws: usize, bins: usize, seed: u64) -> Result<f64> {
    if draws < 100 {
        return Err(invalid(
            "draws",
            format!("at least 100 draws are required, got {draws}"),
        ));
    }
    if bins < 10 {
        return Err(invalid("bins", format!("at least 10 bins are required, got {bins}")));
    }
    let samples: Vec<f64> = sample_traces(z_star, params, draws, seed)?
        .into_iter()
        .map(|t| t.z)
        .collect();
    let beam = params.beam_params(z_star)?;
    let edges = uniform_edges(0.0, params.z_max, bins)?;
    let hist = build_histogram(&samples, &edges)?;
    let model = discretize_density(
        |z| rbbm_continuous(z, z_star, &beam),
        &edges,
        Some((params.z_max, beam.pi4)),
    )?;
    hellinger_distance(&hist, &model)
}
