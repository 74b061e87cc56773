//! Maximum-likelihood EM with the hit mean pinned to each row's `z*`.

use serde::Serialize;

use super::{band_scale, e_step, log_term, step_halving, weighted_sigma, Dataset, FitOptions, Responsibilities};
use crate::beam_model::{p_max, p_occl, p_rand, BeamParams};
use crate::error::{invalid, Result};
use crate::numeric::ln_normal_pdf;

const MAX_HALVINGS: u32 = 30;

fn log_terms(z: f64, z_star: f64, params: &BeamParams, w: &[f64; 4], options: &FitOptions) -> [f64; 4] {
    let z = z.clamp(0.0, params.z_max);
    let in_band = p_max(z, params.z_max, options.eps) > 0.0;
    let ln_scale = band_scale(in_band, options).ln();
    [
        if w[0] > 0.0 {
            w[0].ln() + ln_normal_pdf(z, z_star, params.sigma_m) + ln_scale
        } else {
            f64::NEG_INFINITY
        },
        log_term(w[1], p_occl(z, z_star, params.p_prime)) + ln_scale,
        log_term(w[2], p_rand(z, params.z_max)) + ln_scale,
        log_term(w[3], if in_band { 1.0 } else { 0.0 }),
    ]
}

fn evaluate(data: &Dataset, params: &BeamParams, options: &FitOptions) -> Result<(Responsibilities, f64)> {
    let w = params.weights().as_array();
    e_step(data, |z, s| log_terms(z, s, params, &w, options))
}

/// Posterior cause probabilities of every row under `params`.
pub fn ml_responsibilities(data: &Dataset, params: &BeamParams, options: &FitOptions) -> Result<Responsibilities> {
    params.validate()?;
    Ok(evaluate(data, params, options)?.0)
}

/// Observed-data log-likelihood of `params`.
pub fn ml_log_likelihood(data: &Dataset, params: &BeamParams, options: &FitOptions) -> Result<f64> {
    params.validate()?;
    Ok(evaluate(data, params, options)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlFit {
    pub params: BeamParams,
    pub init: BeamParams,
    pub initial_loglik: f64,
    /// Log-likelihood after each iteration.
    pub loglik: Vec<f64>,
    /// Iterations in which no point was attributed to the hit component, so
    /// the noise level kept its previous value.
    pub sigma_skipped: Vec<bool>,
    /// Iterations in which the full update was shortened by the safeguard.
    pub step_shortened: Vec<bool>,
    pub converged: bool,
}

impl MlFit {
    pub fn iterations(&self) -> usize {
        self.loglik.len()
    }
}

fn m_step(data: &Dataset, resp: &Responsibilities, old: &BeamParams) -> (BeamParams, bool) {
    let totals = resp.totals();
    let j = data.len() as f64;
    let pi = totals.map(|t| t / j);
    let non_random = totals[0] + totals[1];
    let p_prime = if non_random > 0.0 {
        (totals[1] / non_random).clamp(0.0, 1.0)
    } else {
        old.p_prime
    };
    let sigma = weighted_sigma(data, resp.rows().iter().map(|r| &r[0]), totals[0]);
    let params = BeamParams {
        sigma_m: sigma.unwrap_or(old.sigma_m),
        p_prime,
        pi3: pi[2],
        pi4: pi[3],
        z_max: old.z_max,
    };
    (params, sigma.is_none())
}

fn interpolate(a: &BeamParams, b: &BeamParams, t: f64) -> BeamParams {
    let mix = |x: f64, y: f64| x + t * (y - x);
    BeamParams {
        sigma_m: mix(a.sigma_m, b.sigma_m),
        p_prime: mix(a.p_prime, b.p_prime),
        pi3: mix(a.pi3, b.pi3),
        pi4: mix(a.pi4, b.pi4),
        z_max: a.z_max,
    }
}

fn max_change(a: &BeamParams, b: &BeamParams) -> f64 {
    [
        a.sigma_m - b.sigma_m,
        a.p_prime - b.p_prime,
        a.pi3 - b.pi3,
        a.pi4 - b.pi4,
    ]
    .iter()
    .fold(0.0, |m, d| m.max(d.abs()))
}

/// Runs up to `iters` EM iterations from `init`.
pub fn ml_em_fit(data: &Dataset, init: &BeamParams, iters: usize, options: &FitOptions) -> Result<MlFit> {
    if iters == 0 {
        return Err(invalid("iters", "at least one iteration is required"));
    }
    init.validate()?;
    let mut current = *init;
    let (mut resp, initial_loglik) = evaluate(data, &current, options)?;
    let mut fit = MlFit {
        params: current,
        init: *init,
        initial_loglik,
        loglik: Vec::with_capacity(iters),
        sigma_skipped: Vec::with_capacity(iters),
        step_shortened: Vec::with_capacity(iters),
        converged: false,
    };
    let mut ll = initial_loglik;
    for _ in 0..iters {
        let (candidate, skipped) = m_step(data, &resp, &current);
        let full = evaluate(data, &candidate, options);
        let mut shortened = false;
        let next = match full {
            Ok((r, l)) if !options.safeguard || l >= ll => Some((candidate, r, l)),
            Err(e) if !options.safeguard => return Err(e),
            _ => {
                shortened = true;
                step_halving(
                    &current,
                    &candidate,
                    ll,
                    interpolate,
                    |p| evaluate(data, p, options),
                    MAX_HALVINGS,
                )
            }
        };
        fit.sigma_skipped.push(skipped);
        fit.step_shortened.push(shortened);
        let Some((params, r, l)) = next else {
            // no ascent direction left along the update
            fit.loglik.push(ll);
            fit.converged = true;
            break;
        };
        let change = max_change(&current, &params);
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
    use crate::bayes_net::{sample_dataset, NetParams};
    use crate::beam_model::{p_hit, DEFAULT_MAX_EPS};

    fn opts() -> FitOptions {
        FitOptions::default()
    }

    #[test]
    fn degenerate_mixture_gives_hit_only() {
        let data = Dataset::new(vec![1.0, 4.0, 9.9], vec![5.0, 5.0, 5.0]).unwrap();
        let params = BeamParams::new(0.5, 0.0, 0.0, 0.0, 10.0).unwrap();
        for r in ml_responsibilities(&data, &params, &opts()).unwrap().rows() {
            assert_eq!(*r, [1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn hand_computed_bayes_ratios() {
        let params = BeamParams::new(0.3, 0.4, 0.1, 0.05, 10.0).unwrap();
        let data = Dataset::new(vec![4.8, 2.0], vec![5.0, 5.0]).unwrap();
        let w = params.weights().as_array();
        let resp = ml_responsibilities(&data, &params, &opts()).unwrap();
        for (row, z) in [4.8, 2.0].into_iter().enumerate() {
            let terms = [w[0] * p_hit(z, 5.0, 0.3), w[1] * p_occl(z, 5.0, 0.4), w[2] * 0.1, 0.0];
            let norm: f64 = terms.iter().sum();
            for (got, term) in resp.rows()[row].iter().zip(terms) {
                assert!((got - term / norm).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn max_band_reading_competes_by_mass() {
        let params = BeamParams::new(0.3, 0.4, 0.1, 0.05, 10.0).unwrap();
        let data = Dataset::new(vec![10.0], vec![5.0]).unwrap();
        let r = ml_responsibilities(&data, &params, &opts()).unwrap().rows()[0];
        assert!(r[3] > 0.0);
        assert_eq!(r[1], 0.0);
        // random mass in the band: pi3 * eps / z_max
        let expected = 0.05 / (0.05 + 0.1 * DEFAULT_MAX_EPS / 10.0);
        assert!((r[3] - expected).abs() < 1e-12);
        let raw = FitOptions {
            band_as_mass: false,
            ..opts()
        };
        let r = ml_responsibilities(&data, &params, &raw).unwrap().rows()[0];
        assert!((r[3] - 0.05 / (0.05 + 0.1 / 10.0)).abs() < 1e-12);
        let zero_band = FitOptions { eps: 0.0, ..opts() };
        assert_eq!(
            ml_responsibilities(&data, &params, &zero_band).unwrap().rows()[0][3],
            1.0
        );
    }

    #[test]
    fn zero_normalizer_names_row() {
        // only the max-range atom carries weight
        let params = BeamParams::new(0.01, 0.5, 0.0, 1.0, 10.0).unwrap();
        let data = Dataset::new(vec![10.0, 9.0], vec![5.0, 1.0]).unwrap();
        let err = ml_responsibilities(&data, &params, &opts()).unwrap_err();
        assert!(matches!(err, crate::Error::ZeroNormalizer { row: 1, .. }), "{err}");
    }

    #[test]
    fn recovers_pure_gaussian_network() {
        let net = NetParams::new(0.0, 0.15, 0.0, 0.0, 10.0).unwrap();
        let data = sample_dataset(&[5.0], &net, 10_000, 31).unwrap();
        let fit = ml_em_fit(&data, &BeamParams::ml_init(10.0), 30, &opts()).unwrap();
        let w = fit.params.weights();
        assert!(w.pi2 < 0.02 && w.pi3 < 0.02 && w.pi4 < 0.02, "{w:?}");
        assert!((fit.params.sigma_m / 0.15 - 1.0).abs() < 0.1);
    }

    #[test]
    fn recovers_occlusion_network_with_monotone_trace() {
        let net = NetParams::new(0.8, 0.15, 0.2, 0.02, 10.0).unwrap();
        let truth = net.beam_params(5.0).unwrap();
        let data = sample_dataset(&[5.0], &net, 10_000, 32).unwrap();
        let fit = ml_em_fit(&data, &BeamParams::ml_init(10.0), 30, &opts()).unwrap();
        assert!((fit.params.p_prime - truth.p_prime).abs() < 0.05);
        assert!((fit.params.pi3 - 0.2).abs() < 0.03);
        assert!((fit.params.pi4 - 0.02).abs() < 0.02);
        assert!((fit.params.sigma_m / 0.15 - 1.0).abs() < 0.1);
        let mut prev = fit.initial_loglik;
        for &l in &fit.loglik {
            assert!(l >= prev - 1e-8 * prev.abs());
            prev = l;
        }
    }

    #[test]
    fn single_point_fit() {
        let data = Dataset::new(vec![5.0], vec![5.0]).unwrap();
        let fit = ml_em_fit(&data, &BeamParams::ml_init(10.0), 50, &opts()).unwrap();
        assert!(fit.params.weights().pi1 > 0.9);
        assert!(fit.params.sigma_m < 1e-3);
    }

    #[test]
    fn skipped_sigma_update_is_flagged() {
        let data = Dataset::new(vec![10.0, 10.0], vec![5.0, 5.0]).unwrap();
        let init = BeamParams::new(0.01, 0.5, 0.0, 0.5, 10.0).unwrap();
        let fit = ml_em_fit(&data, &init, 3, &opts()).unwrap();
        assert!(fit.sigma_skipped[0]);
        assert_eq!(fit.params.sigma_m, 0.01);
    }

    #[test]
    fn permutation_invariance() {
        let net = NetParams::new(0.8, 0.15, 0.2, 0.02, 10.0).unwrap();
        let data = sample_dataset(&[5.0], &net, 2000, 33).unwrap();
        let order: Vec<usize> = (0..data.len()).rev().collect();
        let shuffled = data.select(&order).unwrap();
        let a = ml_em_fit(&data, &BeamParams::ml_init(10.0), 10, &opts())
            .unwrap()
            .params;
        let b = ml_em_fit(&shuffled, &BeamParams::ml_init(10.0), 10, &opts())
            .unwrap()
            .params;
        assert!(max_change(&a, &b) < 1e-9);
    }

    #[test]
    fn rejects_zero_iterations() {
        let data = Dataset::new(vec![5.0], vec![5.0]).unwrap();
        assert!(ml_em_fit(&data, &BeamParams::ml_init(10.0), 0, &opts()).is_err());
    }
}
