//! Squared-exponential GP prior, posterior representations and prediction.

mod hyper;
mod kernel;
mod posterior;

pub use hyper::{fit_hyperparams_direct, log_marginal_likelihood, HyperFit, HyperFitOptions};
pub use kernel::{cross_cov, prior_cov, se_kernel, KernelParams};
pub use posterior::{
    predict, GaussianPosterior, Posterior, Predictive, Predictor, SamplePosterior,
};
