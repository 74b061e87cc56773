//! Variational Bayes EM.
//!
//! Mixture weights get a Dirichlet posterior and the hit component's mean
//! and precision a Gaussian-Wishart posterior, which is scalar here because
//! readings are one-dimensional. The occlusion density has no posterior of
//! its own: it is evaluated at the occlusion probability implied by the
//! current expected weights.

use serde::{Deserialize, Serialize};

use super::{band_scale, e_step, log_term, Dataset, FitOptions, Responsibilities};
use crate::beam_model::{p_max, p_occl, p_rand, BeamParams, DEFAULT_MAX_EPS};
use crate::error::{invalid, Result};
use crate::numeric::{compensated_sum, digamma, normal_pdf, student_t_pdf};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Above this many degrees of freedom the predictive hit term is Gaussian.
pub const STUDENT_T_CUTOFF: f64 = 100.0;

/// What the learned hit mean refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitFrame {
    /// The raw reading; suited to data sharing a single expected range.
    Absolute,
    /// The offset `z - z*`; lets one fit pool several expected ranges.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    pub z_max: f64,
    pub eps: f64,
    pub band_as_mass: bool,
    pub frame: HitFrame,
    /// Stop early once no hyperparameter moves by more than this.
    pub tolerance: Option<f64>,
}

impl VbConfig {
    pub fn new(z_max: f64) -> Self {
        Self {
            z_max,
            eps: DEFAULT_MAX_EPS,
            band_as_mass: true,
            frame: HitFrame::Absolute,
            tolerance: None,
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            eps: self.eps,
            band_as_mass: self.band_as_mass,
            ..FitOptions::default()
        }
    }

    fn variable(&self, z: f64, z_star: f64) -> f64 {
        match self.frame {
            HitFrame::Absolute => z,
            HitFrame::Residual => z - z_star,
        }
    }

    fn hit_center(&self, mu_bar: f64, z_star: f64) -> f64 {
        match self.frame {
            HitFrame::Absolute => mu_bar,
            HitFrame::Residual => z_star + mu_bar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbPriors {
    pub alpha0: f64,
    pub beta0: f64,
    pub mu_bar0: f64,
    pub w0: f64,
    pub nu0: f64,
}

impl VbPriors {
    /// Broad prior centered on `mu_bar0`.
    pub fn weak(mu_bar0: f64) -> Self {
        Self {
            alpha0: 1.0,
            beta0: 1.0,
            mu_bar0,
            w0: 12.0,
            nu0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("w0", self.w0),
            ("nu0", self.nu0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !self.mu_bar0.is_finite() {
            return Err(invalid("mu_bar0", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbPosterior {
    pub alpha: [f64; 4],
    pub beta: f64,
    pub mu_bar: f64,
    /// Scale of the precision factor (precision has mean `nu * w`).
    pub w: f64,
    pub nu: f64,
}

impl VbPosterior {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(invalid("alpha", "every concentration must be positive"));
        }
        for (name, v) in [("beta", self.beta), ("w", self.w), ("nu", self.nu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Precision of the predictive hit term.
    pub fn predictive_precision(&self) -> f64 {
        self.nu * self.beta / (1.0 + self.beta) * self.w
    }

    fn max_change(&self, other: &Self) -> f64 {
        let mut m = [
            self.beta - other.beta,
            self.mu_bar - other.mu_bar,
            self.w - other.w,
            self.nu - other.nu,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
        for s in 0..4 {
            m = m.max((self.alpha[s] - other.alpha[s]).abs());
        }
        m
    }
}

/// Starting posterior plus the occlusion probability for the first E-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbInit {
    pub posterior: VbPosterior,
    pub p_prime: f64,
}

impl VbInit {
    /// Standard starting point with the hit mean at `mu_bar`.
    pub fn standard(mu_bar: f64) -> Self {
        Self {
            posterior: VbPosterior {
                alpha: [5.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0],
                beta: 5000.0,
                mu_bar,
                w: 12.0,
                nu: 100.0,
            },
            p_prime: 1.0 / 3.0,
        }
    }
}

/// Cause probabilities under the current variational posterior, with the
/// occlusion density evaluated at `p_prime`.
pub fn vb_responsibilities(
    data: &Dataset,
    post: &VbPosterior,
    p_prime: f64,
    cfg: &VbConfig,
) -> Result<Responsibilities> {
    post.validate()?;
    let ln_pi_sum = digamma(post.alpha_sum());
    let e_ln_pi = post.alpha.map(|a| digamma(a) - ln_pi_sum);
    let e_ln_lambda = digamma(0.5 * post.nu) + std::f64::consts::LN_2 + post.w.ln();
    let options = cfg.fit_options();
    let (resp, _) = e_step(data, |z, z_star| {
        let z = z.clamp(0.0, cfg.z_max);
        let x = cfg.variable(z, z_star);
        let in_band = p_max(z, cfg.z_max, cfg.eps) > 0.0;
        let ln_scale = band_scale(in_band, &options).ln();
        let d = x - post.mu_bar;
        let quad = 1.0 / post.beta + post.nu * d * d * post.w;
        [
            e_ln_pi[0] + 0.5 * e_ln_lambda - 0.5 * LN_2PI - 0.5 * quad + ln_scale,
            e_ln_pi[1] + log_term(1.0, p_occl(z, z_star, p_prime)) + ln_scale,
            e_ln_pi[2] + log_term(1.0, p_rand(z, cfg.z_max)) + ln_scale,
            e_ln_pi[3] + if in_band { 0.0 } else { f64::NEG_INFINITY },
        ]
    })?;
    Ok(resp)
}

/// Conjugate update of the posterior from responsibilities.
pub fn vb_m_step(data: &Dataset, resp: &Responsibilities, priors: &VbPriors, cfg: &VbConfig) -> Result<VbPosterior> {
    priors.validate()?;
    if resp.len() != data.len() {
        return Err(invalid("responsibilities", "need one row per measurement"));
    }
    let totals = resp.totals();
    let alpha = totals.map(|j| priors.alpha0 + j);
    let j1 = totals[0];
    if !(j1 > 0.0) {
        return Ok(VbPosterior {
            alpha,
            beta: priors.beta0,
            mu_bar: priors.mu_bar0,
            w: priors.w0,
            nu: priors.nu0,
        });
    }
    let xs: Vec<f64> = data.rows().map(|(z, s)| cfg.variable(z, s)).collect();
    let weights = resp.rows().iter().map(|r| r[0]);
    let mean = compensated_sum(weights.clone().zip(&xs).map(|(g, x)| g * x)) / j1;
    let spread = compensated_sum(weights.zip(&xs).map(|(g, x)| g * (x - mean) * (x - mean))) / j1;
    let beta = priors.beta0 + j1;
    let mu_bar = (priors.beta0 * priors.mu_bar0 + j1 * mean) / beta;
    let offset = mean - priors.mu_bar0;
    let w_inv = 1.0 / priors.w0 + j1 * spread + priors.beta0 * j1 / (priors.beta0 + j1) * offset * offset;
    Ok(VbPosterior {
        alpha,
        beta,
        mu_bar,
        w: 1.0 / w_inv,
        nu: priors.nu0 + j1,
    })
}

/// Point estimates implied by the posterior.
pub fn vb_point_estimates(post: &VbPosterior, z_max: f64) -> BeamParams {
    let total = post.alpha_sum();
    let pi = post.alpha.map(|a| a / total);
    let rest = (1.0 - pi[2] - pi[3]).max(1e-9);
    BeamParams {
        sigma_m: post.predictive_precision().powf(-0.5),
        p_prime: (pi[1] / rest).clamp(0.0, 1.0),
        pi3: pi[2],
        pi4: pi[3],
        z_max,
    }
}

/// Posterior predictive likelihood of a reading.
pub fn vb_predictive(z: f64, z_star: f64, post: &VbPosterior, cfg: &VbConfig) -> f64 {
    let z = z.clamp(0.0, cfg.z_max);
    let total = post.alpha_sum();
    let w = post.alpha.map(|a| a / total);
    let point = vb_point_estimates(post, cfg.z_max);
    let center = cfg.hit_center(post.mu_bar, z_star);
    let lambda = post.predictive_precision();
    let hit = if post.nu > STUDENT_T_CUTOFF {
        normal_pdf(z, center, lambda.powf(-0.5))
    } else {
        student_t_pdf(z, center, lambda, post.nu)
    };
    w[0] * hit
        + w[1] * p_occl(z, z_star, point.p_prime)
        + w[2] * p_rand(z, cfg.z_max)
        + w[3] * p_max(z, cfg.z_max, cfg.eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VbFit {
    pub posterior: VbPosterior,
    pub point: BeamParams,
    pub init: VbInit,
    pub priors: VbPriors,
    /// Posterior after each iteration.
    pub history: Vec<VbPosterior>,
    pub converged: bool,
}

impl VbFit {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Alternates responsibilities and conjugate updates for up to `iters`
/// iterations.
pub fn vb_em_fit(data: &Dataset, priors: &VbPriors, init: &VbInit, iters: usize, cfg: &VbConfig) -> Result<VbFit> {
    if iters == 0 {
        return Err(invalid("iters", "at least one iteration is required"));
    }
    priors.validate()?;
    init.posterior.validate()?;
    if !(0.0..=1.0).contains(&init.p_prime) {
        return Err(invalid("p_prime", format!("must lie in [0, 1], got {}", init.p_prime)));
    }
    let mut post = init.posterior;
    let mut p_prime = init.p_prime;
    let mut history = Vec::with_capacity(iters);
    let mut converged = false;
    for _ in 0..iters {
        let resp = vb_responsibilities(data, &post, p_prime, cfg)?;
        let next = vb_m_step(data, &resp, priors, cfg)?;
        let change = next.max_change(&post);
        post = next;
        p_prime = vb_point_estimates(&post, cfg.z_max).p_prime;
        history.push(post);
        if cfg.tolerance.is_some_and(|tol| change < tol) {
            converged = true;
            break;
        }
    }
    Ok(VbFit {
        posterior: post,
        point: vb_point_estimates(&post, cfg.z_max),
        init: *init,
        priors: *priors,
        history,
        converged,
    })
}
