//! Numerical building blocks shared by the model, estimator and metric code.

mod quadrature;
mod special;

pub use quadrature::{integrate, integrate_with_tolerance, Integral};
pub use special::{digamma, ln_gamma, ln_normal_pdf, normal_pdf, student_t_pdf};

/// Stable `ln(sum(exp(values)))`. Returns `-inf` for empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Neumaier-compensated summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let v = log_sum_exp(&[0.0, f64::NEG_INFINITY]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn log_sum_exp_is_shift_invariant() {
        let base = [-3.2, -0.7, -12.0, -5.5];
        let reference = log_sum_exp(&base);
        for shift in [-800.0, -1.0, 0.0, 3.0, 650.0] {
            let shifted: Vec<f64> = base.iter().map(|v| v + shift).collect();
            assert!((log_sum_exp(&shifted) - shift - reference).abs() < 1e-10);
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1e16];
        values.extend(std::iter::repeat(1.0).take(1000));
        values.push(-1e16);
        assert_eq!(compensated_sum(values), 1000.0);
    }
}
