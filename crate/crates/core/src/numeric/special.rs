use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Digamma function for `x > 0`; NaN elsewhere.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    statrs::function::gamma::digamma(x)
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    ln_normal_pdf(x, mean, sd).exp()
}

pub fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let r = (x - mean) / sd;
    -0.5 * r * r - sd.ln() - LN_SQRT_2PI
}

/// Student-t density parameterized by location, precision `lambda` and
/// degrees of freedom `nu`.
pub fn student_t_pdf(x: f64, mean: f64, lambda: f64, nu: f64) -> f64 {
    let d = x - mean;
    let ln = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) + 0.5 * (lambda / (PI * nu)).ln()
        - 0.5 * (nu + 1.0) * (lambda * d * d / nu).ln_1p();
    ln.exp()
}
