use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative ceiling for jitter escalation, as a fraction of the mean diagonal.
const MAX_JITTER_FRACTION: f64 = 1e-2;

/// Default starting jitter, as a fraction of the mean diagonal.
pub const DEFAULT_JITTER_FRACTION: f64 = 1e-8;

/// Lower Cholesky factor of `A + jitter * I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl CholFactor {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn into_l(self) -> DMatrix<f64> {
        self.l
    }

    /// Jitter that was actually added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `(A + jitter I) x = b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `L⁻¹`, by column-wise forward substitution.
    pub fn inverse_l(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j..].iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
            for k in j..n {
                let xk = x[k] / self.l[(k, k)];
                x[k] = xk;
                if xk != 0.0 {
                    let col = &self.l.as_slice()[k * n + k + 1..(k + 1) * n];
                    for (xi, lik) in x[k + 1..].iter_mut().zip(col) {
                        *xi -= xk * lik;
                    }
                }
            }
            inv.column_mut(j).as_mut_slice()[j..].copy_from_slice(&x[j..]);
        }
        inv
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let li = self.inverse_l();
        li.transpose() * &li
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

fn try_factor(a: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let mut m = a.clone();
    if jitter > 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(m).map(|c| c.l())
}

/// Cholesky factorization of a symmetric positive semi-definite matrix.
///
/// The first attempt uses `jitter0` on the diagonal. On failure the jitter is
/// multiplied by ten until it exceeds `1e-2 * mean(diag(A))`. A zero `jitter0`
/// starts the escalation at `1e-8 * mean(diag(A))`.
pub fn chol_psd(a: &DMatrix<f64>, jitter0: f64) -> Result<CholFactor> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(CholFactor {
            l: DMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    let mean_diag = (a.diagonal().sum() / n as f64).abs().max(f64::MIN_POSITIVE);
    let ceiling = MAX_JITTER_FRACTION * mean_diag;

    let mut jitter = jitter0.max(0.0);
    if let Some(l) = try_factor(a, jitter) {
        return Ok(CholFactor { l, jitter });
    }
    if jitter == 0.0 {
        jitter = DEFAULT_JITTER_FRACTION * mean_diag;
    } else {
        jitter *= 10.0;
    }
    while jitter <= ceiling {
        if let Some(l) = try_factor(a, jitter) {
            return Ok(CholFactor { l, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::NotPsd { jitter })
}

/// Cholesky with the default starting jitter of `1e-8 * mean(diag(A))`.
pub fn chol_default(a: &DMatrix<f64>) -> Result<CholFactor> {
    let n = a.nrows().max(1);
    let mean_diag = (a.diagonal().sum() / n as f64).abs();
    chol_psd(a, DEFAULT_JITTER_FRACTION * mean_diag)
}

/// Cholesky without any jitter; `None` when the matrix is not positive definite.
pub fn chol_strict(a: &DMatrix<f64>) -> Option<CholFactor> {
    try_factor(a, 0.0).map(|l| CholFactor { l, jitter: 0.0 })
}

/// Copies the lower triangle onto the upper one, averaging both.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
