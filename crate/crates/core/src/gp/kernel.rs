use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential kernel with one lengthscale per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Output scale σf².
    pub variance: f64,
    pub lengthscales: Vec<f64>,
}

impl KernelParams {
    pub fn new(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let p = KernelParams {
            variance,
            lengthscales,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(variance, vec![lengthscale; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::invalid("kernel needs at least one lengthscale"));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(**l > 0.0 && l.is_finite()))
        {
            return Err(Error::invalid(format!(
                "lengthscales must be positive, got {l}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `variance * exp(-½ Σ ((xᵢ - x2ᵢ) / ℓᵢ)²)`
pub fn se_kernel(x: &[f64], x2: &[f64], p: &KernelParams) -> f64 {
    debug_assert_eq!(x.len(), p.dim());
    debug_assert_eq!(x2.len(), p.dim());
    let r2: f64 = x
        .iter()
        .zip(x2)
        .zip(&p.lengthscales)
        .map(|((a, b), l)| {
            let u = (a - b) / l;
            u * u
        })
        .sum();
    p.variance * (-0.5 * r2).exp()
}

fn scaled_rows(x: &DMatrix<f64>, p: &KernelParams) -> Vec<Vec<f64>> {
    x.row_iter()
        .map(|r| {
            r.iter()
                .zip(&p.lengthscales)
                .map(|(v, l)| v / l)
                .collect()
        })
        .collect()
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn cross_cov(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &KernelParams) -> DMatrix<f64> {
    assert_eq!(a.ncols(), p.dim(), "input dimension does not match kernel");
    assert_eq!(b.ncols(), p.dim(), "input dimension does not match kernel");
    let sa = scaled_rows(a, p);
    let sb = scaled_rows(b, p);
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let r2: f64 = sa[i]
            .iter()
            .zip(&sb[j])
            .map(|(u, v)| (u - v) * (u - v))
            .sum();
        p.variance * (-0.5 * r2).exp()
    })
}

/// Prior covariance of the latent values at the rows of `x`.
pub fn prior_cov(x: &DMatrix<f64>, p: &KernelParams) -> DMatrix<f64> {
    let n = x.nrows();
    let s = scaled_rows(x, p);
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = p.variance;
        for j in 0..i {
            let r2: f64 = s[i]
                .iter()
                .zip(&s[j])
                .map(|(u, v)| (u - v) * (u - v))
                .sum();
            let v = p.variance * (-0.5 * r2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}
