use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Draws `count` rows from `N(mean, L Lᵀ)`.
pub fn mvn_sample<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol_cov: &DMatrix<f64>,
    count: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let dim = mean.len();
    assert_eq!(chol_cov.nrows(), dim, "cholesky factor dimension mismatch");
    let z = standard_normal_matrix(count, dim, rng);
    let mut out = z * chol_cov.transpose();
    for mut row in out.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(mean.iter()) {
            *v += m;
        }
    }
    out
}

/// A `rows x cols` matrix of independent standard normal draws, filled row by row.
pub fn standard_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    z
}
