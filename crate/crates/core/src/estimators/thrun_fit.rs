//! Maximum-likelihood EM for the exponential short-reading baseline.

use serde::Serialize;

use super::{band_scale, e_step, log_term, step_halving, weighted_sigma, Dataset, FitOptions, Responsibilities};
use crate::beam_model::{thrun_components, ThrunParams};
use crate::error::{invalid, Result};
use crate::numeric::{compensated_sum, ln_normal_pdf};

const MIN_LAMBDA: f64 = 1e-8;
const MAX_HALVINGS: u32 = 30;

fn evaluate(data: &Dataset, params: &ThrunParams, options: &FitOptions) -> Result<(Responsibilities, f64)> {
    let w = params.weights();
    e_step(data, |z, z_star| {
        let z = z.clamp(0.0, params.z_max);
        let c = thrun_components(z, z_star, params, options.eps);
        let in_band = c[2] > 0.0;
        let ln_scale = band_scale(in_band, options).ln();
        [
            if w[0] > 0.0 {
                w[0].ln() + ln_normal_pdf(z, z_star, params.sigma_m) + ln_scale
            } else {
                f64::NEG_INFINITY
            },
            log_term(w[1], c[1]) + ln_scale,
            log_term(w[2], c[2]),
            log_term(w[3], c[3]) + ln_scale,
        ]
    })
}

/// Posterior probabilities of `[hit, short, max, rand]` per row.
pub fn thrun_responsibilities(data: &Dataset, params: &ThrunParams, options: &FitOptions) -> Result<Responsibilities> {
    params.validate()?;
    Ok(evaluate(data, params, options)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThrunFit {
    pub params: ThrunParams,
    pub init: ThrunParams,
    pub initial_loglik: f64,
    pub loglik: Vec<f64>,
    pub sigma_skipped: Vec<bool>,
    pub converged: bool,
}

fn m_step(data: &Dataset, resp: &Responsibilities, old: &ThrunParams) -> (ThrunParams, bool) {
    let totals = resp.totals();
    let j = data.len() as f64;
    let sigma = weighted_sigma(data, resp.rows().iter().map(|r| &r[0]), totals[0]);
    let short_sum = compensated_sum(resp.rows().iter().zip(data.z()).map(|(r, z)| r[1] * z));
    let lambda = if totals[1] > 0.0 && short_sum > 0.0 {
        (totals[1] / short_sum).max(MIN_LAMBDA)
    } else {
        old.lambda_short
    };
    let params = ThrunParams {
        sigma_m: sigma.unwrap_or(old.sigma_m),
        z_hit: totals[0] / j,
        z_short: totals[1] / j,
        z_max_w: totals[2] / j,
        z_rand: totals[3] / j,
        lambda_short: lambda,
        z_max: old.z_max,
    };
    (params, sigma.is_none())
}

fn interpolate(a: &ThrunParams, b: &ThrunParams, t: f64) -> ThrunParams {
    let mix = |x: f64, y: f64| x + t * (y - x);
    ThrunParams {
        sigma_m: mix(a.sigma_m, b.sigma_m),
        z_hit: mix(a.z_hit, b.z_hit),
        z_short: mix(a.z_short, b.z_short),
        z_max_w: mix(a.z_max_w, b.z_max_w),
        z_rand: mix(a.z_rand, b.z_rand),
        lambda_short: mix(a.lambda_short, b.lambda_short),
        z_max: a.z_max,
    }
}

/// Runs up to `iters` EM iterations from `init`.
pub fn thrun_ml_fit(data: &Dataset, init: &ThrunParams, iters: usize, options: &FitOptions) -> Result<ThrunFit> {
    if iters == 0 {
        return Err(invalid("iters", "at least one iteration is required"));
    }
    init.validate()?;
    let mut current = *init;
    let (mut resp, initial_loglik) = evaluate(data, &current, options)?;
    let mut ll = initial_loglik;
    let mut fit = ThrunFit {
        params: current,
        init: *init,
        initial_loglik,
        loglik: Vec::with_capacity(iters),
        sigma_skipped: Vec::with_capacity(iters),
        converged: false,
    };
    for _ in 0..iters {
        let (candidate, skipped) = m_step(data, &resp, &current);
        fit.sigma_skipped.push(skipped);
        let next = match evaluate(data, &candidate, options) {
            Ok((r, l)) if !options.safeguard || l >= ll => Some((candidate, r, l)),
            Err(e) if !options.safeguard => return Err(e),
            _ => step_halving(
                &current,
                &candidate,
                ll,
                interpolate,
                |p| evaluate(data, p, options),
                MAX_HALVINGS,
            ),
        };
        let Some((params, r, l)) = next else {
            fit.loglik.push(ll);
            fit.converged = true;
            break;
        };
        let change = [
            params.sigma_m - current.sigma_m,
            params.z_hit - current.z_hit,
            params.z_short - current.z_short,
            params.z_max_w - current.z_max_w,
            params.z_rand - current.z_rand,
            params.lambda_short - current.lambda_short,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
        current = params;
        resp = r;
        ll = l;
        fit.loglik.push(ll);
        if options.tolerance.is_some_and(|tol| change < tol) {
            fit.converged = true;
            break;
        }
    }
    fit.params = current;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam_model::sample_thrun;
    use crate::rng::substream;

    #[test]
    fn zero_short_weight_is_absorbing() {
        let mut rng = substream(50, 0);
        let truth = ThrunParams::new(0.2, [0.6, 0.3, 0.05, 0.05], 1.0, 10.0).unwrap();
        let z: Vec<f64> = (0..2000).map(|_| sample_thrun(6.0, &truth, &mut rng).1).collect();
        let data = Dataset::new(z, vec![6.0; 2000]).unwrap();
        let init = ThrunParams::new(0.5, [0.6, 0.0, 0.2, 0.2], 0.1, 10.0).unwrap();
        let fit = thrun_ml_fit(&data, &init, 20, &FitOptions::default()).unwrap();
        assert_eq!(fit.params.z_short, 0.0);
    }

    #[test]
    fn recovers_own_generative_model() {
        let truth = ThrunParams::new(0.15, [0.6, 0.25, 0.05, 0.1], 1.2, 10.0).unwrap();
        let mut rng = substream(51, 0);
        let z: Vec<f64> = (0..10_000).map(|_| sample_thrun(6.0, &truth, &mut rng).1).collect();
        let data = Dataset::new(z, vec![6.0; 10_000]).unwrap();
        let fit = thrun_ml_fit(&data, &ThrunParams::ml_init(10.0), 200, &FitOptions::default()).unwrap();
        let p = fit.params;
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        assert!(rel(p.sigma_m, 0.15) < 0.1, "{p:?}");
        assert!(rel(p.z_hit, 0.6) < 0.1);
        assert!(rel(p.z_short, 0.25) < 0.1);
        assert!(rel(p.z_max_w, 0.05) < 0.1);
        assert!(rel(p.z_rand, 0.1) < 0.1);
        assert!(rel(p.lambda_short, 1.2) < 0.1);
        let mut prev = fit.initial_loglik;
        for &l in &fit.loglik {
            assert!(l >= prev);
            prev = l;
        }
    }
}
