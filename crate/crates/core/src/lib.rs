//! Bayesian beam models for range finders in dynamic environments.
//!
//! The crate covers single-beam densities that account for unmodeled
//! occluding objects, a generative sampler for validating them, maximum
//! likelihood and variational Bayes learning, and full-scan likelihoods that
//! smooth over pose uncertainty.

// NaN must fail validation, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes_net;
pub mod beam_model;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod metrics;
pub mod numeric;
pub mod rng;
pub mod scan_model;

pub use bayes_net::{Cause, NetParams, SampleTrace};
pub use beam_model::{rbbm_density, BeamParams, MixtureWeights, OcclusionEnvironment, ThrunParams};
pub use error::{Error, Result};
pub use estimators::{Dataset, FitOptions, Responsibilities, VbPosterior, VbPriors};
pub use geometry::{ray_cast, simulate_ideal_scan, Pose, ScanGeometry, Segment, SegmentMap};
pub use metrics::BinnedDistribution;
pub use scan_model::{LocalRegion, Scan, ScanMode, ScanModelConfig};
