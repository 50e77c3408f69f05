//! Standard-normal density, distribution function and their logarithms.

use std::f64::consts::FRAC_1_SQRT_2;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument the log-cdf switches to the Mills-ratio continued fraction.
const TAIL_SWITCH: f64 = -8.0;

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn log_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Mills ratio `Φ(-x) / φ(x)` for `x >= 8`, by backward evaluation of the
/// Laplace continued fraction.
fn mills_ratio(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=60).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// `log Φ(z)`, finite for every finite `z`.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        let x = -z;
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio(x).ln()
    } else if z < 0.0 {
        std_normal_cdf(z).ln()
    } else {
        (-std_normal_cdf(-z)).ln_1p()
    }
}

/// Inverse Mills ratio `φ(z) / Φ(z)`, the derivative of `log Φ(z)`.
pub fn inv_mills(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        1.0 / mills_ratio(-z)
    } else {
        std_normal_pdf(z) / std_normal_cdf(z)
    }
}

/// Closed-form expected improvement `E[(best - Y)+]` for `Y ~ N(mean, sd²)`.
pub fn expected_improvement(best: f64, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return (best - mean).max(0.0);
    }
    let z = (best - mean) / sd;
    (best - mean) * std_normal_cdf(z) + sd * std_normal_pdf(z)
}

/// Numerically stable `log(sum(exp(xs)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
