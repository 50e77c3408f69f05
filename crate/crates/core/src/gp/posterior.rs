use nalgebra::{DMatrix, DVector};

use super::kernel::{cross_cov, prior_cov, KernelParams};
use crate::error::{Error, Result};
use crate::numerics::{chol_default, symmetrize, CholFactor};

/// Joint Gaussian approximation over the latent values at the training inputs.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub train_inputs: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub kernel: KernelParams,
    pub noise_sd: f64,
}

impl GaussianPosterior {
    /// The prior itself: zero mean and covariance `K`.
    pub fn prior(train_inputs: DMatrix<f64>, kernel: KernelParams, noise_sd: f64) -> Self {
        let n = train_inputs.nrows();
        let cov = if n == 0 {
            DMatrix::zeros(0, 0)
        } else {
            prior_cov(&train_inputs, &kernel)
        };
        GaussianPosterior {
            train_inputs,
            mean: DVector::zeros(n),
            cov,
            kernel,
            noise_sd,
        }
    }
}

/// Posterior represented by draws of the latent values at the training inputs.
#[derive(Debug, Clone)]
pub struct SamplePosterior {
    pub train_inputs: DMatrix<f64>,
    /// One row per draw.
    pub samples: DMatrix<f64>,
    pub kernel: KernelParams,
    pub noise_sd: f64,
}

#[derive(Debug, Clone)]
pub enum Posterior {
    Gaussian(GaussianPosterior),
    Samples(SamplePosterior),
}

impl From<GaussianPosterior> for Posterior {
    fn from(p: GaussianPosterior) -> Self {
        Posterior::Gaussian(p)
    }
}

impl From<SamplePosterior> for Posterior {
    fn from(p: SamplePosterior) -> Self {
        Posterior::Samples(p)
    }
}

impl Posterior {
    pub fn train_inputs(&self) -> &DMatrix<f64> {
        match self {
            Posterior::Gaussian(p) => &p.train_inputs,
            Posterior::Samples(p) => &p.train_inputs,
        }
    }

    pub fn kernel(&self) -> &KernelParams {
        match self {
            Posterior::Gaussian(p) => &p.kernel,
            Posterior::Samples(p) => &p.kernel,
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self {
            Posterior::Gaussian(p) => p.noise_sd,
            Posterior::Samples(p) => p.noise_sd,
        }
    }

    pub fn num_train(&self) -> usize {
        self.train_inputs().nrows()
    }

    /// Posterior mean of the latent values at the training inputs.
    pub fn train_mean(&self) -> DVector<f64> {
        match self {
            Posterior::Gaussian(p) => p.mean.clone(),
            Posterior::Samples(p) => {
                let s = p.samples.nrows().max(1) as f64;
                DVector::from_iterator(
                    p.samples.ncols(),
                    p.samples.column_iter().map(|c| c.sum() / s),
                )
            }
        }
    }

    pub fn train_sd(&self) -> DVector<f64> {
        match self {
            Posterior::Gaussian(p) => p.cov.diagonal().map(|v| v.max(0.0).sqrt()),
            Posterior::Samples(p) => {
                let s = p.samples.nrows() as f64;
                DVector::from_iterator(
                    p.samples.ncols(),
                    p.samples.column_iter().map(|c| {
                        let m = c.sum() / s;
                        (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (s - 1.0).max(1.0))
                            .sqrt()
                    }),
                )
            }
        }
    }

    pub fn predictor(&self) -> Result<Predictor> {
        Predictor::new(self)
    }
}

/// Latent predictive distribution at a set of test inputs.
#[derive(Debug, Clone)]
pub enum Predictive {
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
    /// Equal-weight mixture: one mean row per posterior draw, shared covariance.
    Mixture {
        means: DMatrix<f64>,
        cov: DMatrix<f64>,
    },
}

impl Predictive {
    pub fn dim(&self) -> usize {
        match self {
            Predictive::Gaussian { mean, .. } => mean.len(),
            Predictive::Mixture { cov, .. } => cov.nrows(),
        }
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        match self {
            Predictive::Gaussian { cov, .. } | Predictive::Mixture { cov, .. } => cov,
        }
    }

    /// Overall mean and covariance.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            Predictive::Gaussian { mean, cov } => (mean.clone(), cov.clone()),
            Predictive::Mixture { means, cov } => {
                let s = means.nrows() as f64;
                let m = DVector::from_iterator(
                    means.ncols(),
                    means.column_iter().map(|c| c.sum() / s),
                );
                let mut c = cov.clone();
                if means.nrows() > 1 {
                    for row in means.row_iter() {
                        let d = row.transpose() - &m;
                        c += &d * d.transpose() / s;
                    }
                }
                (m, c)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Conditioning {
    /// `K - Σ`, so that the predictive covariance is `K** - Aᵀ (K - Σ) A` with `A = K⁻¹ K*`.
    Gaussian {
        mean: DVector<f64>,
        k_minus_sigma: DMatrix<f64>,
    },
    Samples {
        samples: DMatrix<f64>,
    },
}

/// Cached factorization of the training covariance for repeated prediction.
#[derive(Debug, Clone)]
pub struct Predictor {
    train_inputs: DMatrix<f64>,
    kernel: KernelParams,
    chol: Option<CholFactor>,
    cond: Conditioning,
}

impl Predictor {
    pub fn new(post: &Posterior) -> Result<Self> {
        let x = post.train_inputs().clone();
        let kernel = post.kernel().clone();
        if x.nrows() > 0 && x.ncols() != kernel.dim() {
            return Err(Error::invalid(format!(
                "training inputs have {} columns, kernel has {} lengthscales",
                x.ncols(),
                kernel.dim()
            )));
        }
        let n = x.nrows();
        let (chol, k) = if n > 0 {
            let k = prior_cov(&x, &kernel);
            (Some(chol_default(&k)?), k)
        } else {
            (None, DMatrix::zeros(0, 0))
        };
        let cond = match post {
            Posterior::Gaussian(p) => {
                if p.mean.len() != n || p.cov.nrows() != n || p.cov.ncols() != n {
                    return Err(Error::invalid("posterior mean/cov do not match training inputs"));
                }
                Conditioning::Gaussian {
                    mean: p.mean.clone(),
                    k_minus_sigma: k - &p.cov,
                }
            }
            Posterior::Samples(p) => {
                if p.samples.ncols() != n || p.samples.nrows() == 0 {
                    return Err(Error::invalid("sample posterior has the wrong shape"));
                }
                Conditioning::Samples {
                    samples: p.samples.clone(),
                }
            }
        };
        Ok(Predictor {
            train_inputs: x,
            kernel,
            chol,
            cond,
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn train_inputs(&self) -> &DMatrix<f64> {
        &self.train_inputs
    }

    /// `K⁻¹ k(X, X*)`, the interpolation weights of the test points.
    fn weights(&self, xstar: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let chol = self.chol.as_ref()?;
        let kxs = cross_cov(&self.train_inputs, xstar, &self.kernel);
        let a = chol.solve(&kxs);
        Some((kxs, a))
    }

    /// Latent predictive distribution at the rows of `xstar` (noise-free).
    pub fn predictive(&self, xstar: &DMatrix<f64>) -> Predictive {
        let kss = prior_cov(xstar, &self.kernel);
        let m = xstar.nrows();
        let Some((kxs, a)) = self.weights(xstar) else {
            return match &self.cond {
                Conditioning::Samples { samples } => Predictive::Mixture {
                    means: DMatrix::zeros(samples.nrows(), m),
                    cov: kss,
                },
                Conditioning::Gaussian { .. } => Predictive::Gaussian {
                    mean: DVector::zeros(m),
                    cov: kss,
                },
            };
        };
        match &self.cond {
            Conditioning::Gaussian {
                mean,
                k_minus_sigma,
            } => {
                let mu = a.transpose() * mean;
                let mut cov = kss - a.transpose() * (k_minus_sigma * &a);
                clean_cov(&mut cov);
                Predictive::Gaussian { mean: mu, cov }
            }
            Conditioning::Samples { samples } => {
                let means = samples * &a;
                let mut cov = kss - kxs.transpose() * &a;
                clean_cov(&mut cov);
                Predictive::Mixture { means, cov }
            }
        }
    }

    /// 1 for Gaussian posteriors, else the number of stored draws.
    pub fn num_components(&self) -> usize {
        match &self.cond {
            Conditioning::Gaussian { .. } => 1,
            Conditioning::Samples { samples } => samples.nrows(),
        }
    }

    /// Predictive mean of mixture component `s` (taken modulo the number of
    /// components); the plain mean for Gaussian posteriors.
    pub fn component_mean(&self, xstar: &DMatrix<f64>, s: usize) -> DVector<f64> {
        let Some((_, a)) = self.weights(xstar) else {
            return DVector::zeros(xstar.nrows());
        };
        match &self.cond {
            Conditioning::Gaussian { mean, .. } => a.transpose() * mean,
            Conditioning::Samples { samples } => {
                let row = samples.row(s % samples.nrows());
                (row * &a).transpose()
            }
        }
    }

    /// Posterior (within-component) covariance between `f(a)` and `f(b)`.
    pub fn cross_covariance(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let kab = cross_cov(a, b, &self.kernel);
        let (Some((kxa, wa)), Some((_, wb))) = (self.weights(a), self.weights(b)) else {
            return kab;
        };
        match &self.cond {
            Conditioning::Gaussian { k_minus_sigma, .. } => kab - wa.transpose() * (k_minus_sigma * wb),
            Conditioning::Samples { .. } => kab - kxa.transpose() * wb,
        }
    }

    /// Weights `α` on the training inputs such that, for a component-`s`
    /// function draw pinned to known values at `anchors` with
    /// `w = C(anchors)⁻¹ (f(anchors) − m(anchors))`, the conditional mean is
    /// `Σ α_i k(x, X_i) + Σ w_j k(x, anchor_j)`.
    pub fn path_weights(&self, s: usize, anchors: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
        let Some(chol) = self.chol.as_ref() else {
            return DVector::zeros(0);
        };
        let kxa = cross_cov(&self.train_inputs, anchors, &self.kernel);
        let kw = &kxa * w;
        let target = match &self.cond {
            Conditioning::Gaussian {
                mean,
                k_minus_sigma,
            } => mean - k_minus_sigma * chol.solve_vec(&kw),
            Conditioning::Samples { samples } => {
                samples.row(s % samples.nrows()).transpose() - kw
            }
        };
        chol.solve_vec(&target)
    }

    /// Predictive mean and covariance (mixture moments for sample posteriors).
    pub fn predict(&self, xstar: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        self.predictive(xstar).moments()
    }
}

fn clean_cov(cov: &mut DMatrix<f64>) {
    symmetrize(cov);
    for i in 0..cov.nrows() {
        if cov[(i, i)] < 0.0 {
            cov[(i, i)] = 0.0;
        }
    }
}

/// Latent predictive mean and covariance at `xstar`.
pub fn predict(post: &Posterior, xstar: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    Ok(post.predictor()?.predict(xstar))
}
