//! Monte-Carlo q-EI against the posterior-mean incumbent, and the nested
//! pq-EI variant whose incumbent is the random minimum of past observations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::spec::AcquisitionSpec;
use crate::error::{Error, Result};
use crate::gp::{Posterior, Predictor};
use crate::numerics::{chol_strict, standard_normal_matrix};

/// Largest history the nested pq-EI estimator accepts.
pub const PQEI_HISTORY_LIMIT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn mean_and_se(xs: &[f64]) -> McEstimate {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    McEstimate {
        value: m,
        std_error: (var / n).sqrt(),
    }
}

/// Smallest posterior mean over the training inputs, or 0 without data.
pub fn mu_min(post: &Posterior) -> f64 {
    let m = post.train_mean();
    if m.is_empty() {
        0.0
    } else {
        m.min()
    }
}

/// A square root of `cov + σ²I`: Cholesky when it exists, otherwise the
/// symmetric eigen root with negative eigenvalues clipped (covers the
/// noise-free, zero-variance corner).
fn noisy_sqrt(cov: &DMatrix<f64>, noise_sd: f64) -> DMatrix<f64> {
    let n = cov.nrows();
    let c = cov + DMatrix::identity(n, n) * (noise_sd * noise_sd);
    if let Some(f) = chol_strict(&c) {
        return f.into_l();
    }
    let eig = c.symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root)
}

/// q-EI with a fixed set of standard normal draws, so that every candidate
/// batch in one optimization run is scored with the same random numbers.
#[derive(Debug, Clone)]
pub struct QeiEvaluator {
    predictor: Predictor,
    noise_sd: f64,
    incumbent: f64,
    z: DMatrix<f64>,
}

impl QeiEvaluator {
    pub fn new<R: Rng + ?Sized>(
        post: &Posterior,
        q: usize,
        mc_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(QeiEvaluator {
            predictor: post.predictor()?,
            noise_sd: post.noise_sd(),
            incumbent: mu_min(post),
            z: standard_normal_matrix(mc_samples, q, rng),
        })
    }

    pub fn with_incumbent(mut self, incumbent: f64) -> Self {
        self.incumbent = incumbent;
        self
    }

    pub fn incumbent(&self) -> f64 {
        self.incumbent
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    /// Per-draw improvements `max_i (incumbent − y_i)₊`.
    pub fn improvements(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let q = x.nrows();
        if q != self.q() {
            return Err(Error::LengthMismatch {
                expected: self.q(),
                found: q,
            });
        }
        let pred = self.predictor.predictive(x);
        let l = noisy_sqrt(pred.cov(), self.noise_sd);
        let means: Vec<DVector<f64>> = match &pred {
            crate::gp::Predictive::Gaussian { mean, .. } => vec![mean.clone()],
            crate::gp::Predictive::Mixture { means, .. } => {
                means.row_iter().map(|r| r.transpose()).collect()
            }
        };
        let mut out = Vec::with_capacity(self.z.nrows());
        let mut y = vec![0.0; q];
        for (s, zrow) in self.z.row_iter().enumerate() {
            let m = &means[s % means.len()];
            for i in 0..q {
                let mut acc = m[i];
                for k in 0..q {
                    acc += l[(i, k)] * zrow[k];
                }
                y[i] = acc;
            }
            let best = y.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            out.push((self.incumbent - best).max(0.0));
        }
        Ok(out)
    }

    pub fn estimate(&self, x: &DMatrix<f64>) -> Result<McEstimate> {
        Ok(mean_and_se(&self.improvements(x)?))
    }

    /// The estimate's value, with failures scored as zero.
    pub fn value(&self, x: &DMatrix<f64>) -> f64 {
        self.estimate(x).map(|e| e.value).unwrap_or(0.0)
    }
}

/// One-off q-EI estimate of a batch.
pub fn qei<R: Rng + ?Sized>(
    post: &Posterior,
    x: &DMatrix<f64>,
    spec: &AcquisitionSpec,
    rng: &mut R,
) -> Result<McEstimate> {
    QeiEvaluator::new(post, x.nrows(), spec.mc_samples, rng)?.estimate(x)
}

/// pq-EI by nested sampling of the history and the candidate batch.
#[derive(Debug, Clone)]
pub struct PqeiEvaluator {
    predictor: Predictor,
    history: DMatrix<f64>,
    noise_sd: f64,
    z: DMatrix<f64>,
}

impl PqeiEvaluator {
    pub fn new<R: Rng + ?Sized>(
        post: &Posterior,
        q: usize,
        mc_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = post.num_train();
        if n > PQEI_HISTORY_LIMIT {
            return Err(Error::HistoryTooLarge {
                size: n,
                limit: PQEI_HISTORY_LIMIT,
            });
        }
        Ok(PqeiEvaluator {
            predictor: post.predictor()?,
            history: post.train_inputs().clone(),
            noise_sd: post.noise_sd(),
            z: standard_normal_matrix(mc_samples, n + q, rng),
        })
    }

    pub fn improvements(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let n = self.history.nrows();
        let q = x.nrows();
        if n + q != self.z.ncols() {
            return Err(Error::LengthMismatch {
                expected: self.z.ncols() - n,
                found: q,
            });
        }
        let mut joint = DMatrix::zeros(n + q, x.ncols());
        joint.rows_mut(0, n).copy_from(&self.history);
        joint.rows_mut(n, q).copy_from(x);
        let pred = self.predictor.predictive(&joint);
        let l = noisy_sqrt(pred.cov(), self.noise_sd);
        let means: Vec<DVector<f64>> = match &pred {
            crate::gp::Predictive::Gaussian { mean, .. } => vec![mean.clone()],
            crate::gp::Predictive::Mixture { means, .. } => {
                means.row_iter().map(|r| r.transpose()).collect()
            }
        };
        let mut out = Vec::with_capacity(self.z.nrows());
        for (s, zrow) in self.z.row_iter().enumerate() {
            let y = &means[s % means.len()] + &l * zrow.transpose();
            let y_min = if n == 0 {
                0.0
            } else {
                y.rows(0, n).min()
            };
            let best = y.rows(n, q).min();
            out.push((y_min - best).max(0.0));
        }
        Ok(out)
    }

    pub fn estimate(&self, x: &DMatrix<f64>) -> Result<McEstimate> {
        Ok(mean_and_se(&self.improvements(x)?))
    }

    pub fn value(&self, x: &DMatrix<f64>) -> f64 {
        self.estimate(x).map(|e| e.value).unwrap_or(0.0)
    }
}

/// One-off pq-EI estimate of a batch.
pub fn pqei_mc<R: Rng + ?Sized>(
    post: &Posterior,
    x: &DMatrix<f64>,
    spec: &AcquisitionSpec,
    rng: &mut R,
) -> Result<McEstimate> {
    PqeiEvaluator::new(post, x.nrows(), spec.mc_samples, rng)?.estimate(x)
}
