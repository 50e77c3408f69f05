//! Approximate posterior inference over the latent values of all queried points.

pub mod ep;
pub mod hmc;
pub mod vi;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{prior_cov, KernelParams, Posterior};
use crate::numerics::{child_rng, gauss_hermite, standard_normal_matrix, QuadratureRule};
use crate::preference::{loglik_chain, loglik_winner, Feedback, PairsEstimate, PreferenceRecord};

pub use ep::{ep_fit, tilted_moments, EpConfig, EpFit, EpSite, TiltedMoments};
pub use hmc::{hmc_sample, log_target, HmcConfig, HmcFit};
pub use vi::{elbo, elbo_grad, vi_fit, ViConfig, ViFit, ViParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InferenceKind {
    #[serde(rename = "EP")]
    Ep,
    #[serde(rename = "VI")]
    Vi,
    #[serde(rename = "HMC")]
    Hmc,
}

impl InferenceKind {
    pub fn label(&self) -> &'static str {
        match self {
            InferenceKind::Ep => "EP",
            InferenceKind::Vi => "VI",
            InferenceKind::Hmc => "HMC",
        }
    }
}

impl std::fmt::Display for InferenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for InferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EP" => Ok(InferenceKind::Ep),
            "VI" => Ok(InferenceKind::Vi),
            "HMC" => Ok(InferenceKind::Hmc),
            _ => Err(Error::invalid(format!("unknown inference backend {s:?}"))),
        }
    }
}

/// Settings for all three backends; only the selected one is read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub ep: EpConfig,
    pub vi: ViConfig,
    pub hmc: HmcConfig,
}

/// A fitted posterior plus a short diagnostic note for traces.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub posterior: Posterior,
    pub note: Option<String>,
}

/// Fits the chosen backend. `seed` replaces the per-backend seed fields.
pub fn fit_posterior(
    kind: InferenceKind,
    kernel: &KernelParams,
    records: &[PreferenceRecord],
    sigma: f64,
    cfg: &InferenceConfig,
    seed: u64,
) -> Result<FitOutcome> {
    match kind {
        InferenceKind::Ep => {
            let fit = ep_fit(
                kernel,
                records,
                sigma,
                &EpConfig {
                    seed,
                    ..cfg.ep.clone()
                },
            )?;
            let note = (!fit.converged).then(|| {
                format!(
                    "EP stopped after {} sweeps without converging",
                    fit.iterations
                )
            });
            Ok(FitOutcome {
                posterior: fit.posterior.into(),
                note,
            })
        }
        InferenceKind::Vi => {
            let fit = vi_fit(
                kernel,
                records,
                sigma,
                &ViConfig {
                    seed,
                    ..cfg.vi.clone()
                },
            )?;
            let note = fit
                .non_finite
                .then(|| "VI hit a non-finite ELBO; kept the last finite iterate".to_string());
            Ok(FitOutcome {
                posterior: fit.posterior.into(),
                note,
            })
        }
        InferenceKind::Hmc => {
            let fit = hmc_sample(
                kernel,
                records,
                sigma,
                &HmcConfig {
                    seed,
                    ..cfg.hmc.clone()
                },
            )?;
            let note = (fit.divergences > 0).then(|| format!("HMC: {} divergences", fit.divergences));
            Ok(FitOutcome {
                posterior: fit.posterior.into(),
                note,
            })
        }
    }
}

/// Stacked training inputs and their prior covariance.
pub fn training_prior(
    kernel: &KernelParams,
    records: &[PreferenceRecord],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = kernel.dim();
    if let Some(r) = records.iter().find(|r| r.x.ncols() != d) {
        return Err(Error::invalid(format!(
            "batch has {} columns but the kernel expects {d}",
            r.x.ncols()
        )));
    }
    let x = crate::preference::stack_inputs(records, d);
    let k = prior_cov(&x, kernel);
    Ok((x, k))
}

/// Number of nested draws behind the likelihood of general pairwise feedback.
pub const PAIRS_MC_SAMPLES: usize = 256;

#[derive(Debug, Clone)]
enum LikKind {
    Winner { j: usize, rule: QuadratureRule },
    Chain(Vec<usize>),
    /// Fixed standard-normal draws, one row per nested sample.
    PairsMc { pairs: Vec<(usize, usize)>, z: DMatrix<f64> },
    Flat,
}

/// Deterministic log likelihood of one batch's feedback as a function of its
/// latent values.
#[derive(Debug, Clone)]
pub struct BatchLikelihood {
    kind: LikKind,
    sigma: f64,
}

impl BatchLikelihood {
    pub fn new(feedback: &Feedback, q: usize, sigma: f64, seed: u64) -> Result<Self> {
        feedback.validate(q)?;
        let kind = match feedback {
            Feedback::Winner(j) => LikKind::Winner {
                j: *j,
                rule: gauss_hermite(32)?,
            },
            Feedback::Ranking(order) => LikKind::Chain(order.clone()),
            Feedback::Pairs(p) if p.is_empty() => LikKind::Flat,
            Feedback::Pairs(p) => LikKind::PairsMc {
                pairs: p.clone(),
                z: standard_normal_matrix(PAIRS_MC_SAMPLES, q, &mut child_rng(seed, 0x9a1)),
            },
        };
        Ok(BatchLikelihood { kind, sigma })
    }

    pub fn log_lik(&self, f: &[f64]) -> f64 {
        match &self.kind {
            LikKind::Winner { j, rule } => loglik_winner(f, *j, self.sigma, rule),
            LikKind::Chain(order) => loglik_chain(f, order, self.sigma),
            LikKind::PairsMc { pairs, z } => {
                let mut y = vec![0.0; f.len()];
                let mut hits = 0usize;
                for row in z.row_iter() {
                    for (k, yk) in y.iter_mut().enumerate() {
                        *yk = f[k] + self.sigma * row[k];
                    }
                    if pairs.iter().all(|&(a, b)| y[a] < y[b]) {
                        hits += 1;
                    }
                }
                PairsEstimate {
                    hits,
                    samples: z.nrows(),
                }
                .log_probability()
            }
            LikKind::Flat => 0.0,
        }
    }
}

/// Offsets of each record's block inside the stacked latent vector.
pub(crate) fn block_offsets(records: &[PreferenceRecord]) -> Vec<usize> {
    let mut off = Vec::with_capacity(records.len());
    let mut acc = 0;
    for r in records {
        off.push(acc);
        acc += r.q();
    }
    off
}
