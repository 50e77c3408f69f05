use crate::error::{Error, Result};

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Gauss–Hermite rule for `∫ exp(-t²) p(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ exp(-t²) f(t) dt`
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// `E[f(X)]` for `X ~ N(mean, sd²)`.
    pub fn expect_normal(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let s = std::f64::consts::SQRT_2 * sd;
        self.integrate(|t| f(mean + s * t)) / SQRT_PI
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        gauss_hermite(32).expect("32 is a valid order")
    }
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule, `1 <= n <= 128`.
///
/// Roots of the orthonormal Hermite polynomials are found by Newton iteration
/// from asymptotic initial guesses, which keeps the small tail weights accurate.
pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
    if !(1..=128).contains(&n) {
        return Err(Error::invalid(format!(
            "gauss-hermite order must be in 1..=128, got {n}"
        )));
    }
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    const EPS: f64 = 3e-15;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    // Newton produced descending nodes.
    x.reverse();
    w.reverse();
    Ok(QuadratureRule {
        nodes: x,
        weights: w,
    })
}
