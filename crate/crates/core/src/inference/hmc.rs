//! Hamiltonian Monte Carlo over the whitened latent vector `η`, `f = L η`,
//! with step sizes tuned by dual averaging during warmup.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{block_offsets, training_prior};
use crate::error::{Error, Result};
use crate::gp::{KernelParams, SamplePosterior};
use crate::numerics::{chol_default, derive_seed, gauss_hermite, seeded_rng, QuadratureRule};
use crate::preference::{loglik_winner_grad, Feedback, PreferenceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub chains: usize,
    pub samples_per_chain: usize,
    pub warmup: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    /// Uniform relative jitter applied to the step size after warmup.
    pub step_jitter: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            chains: 6,
            samples_per_chain: 1500,
            warmup: 1000,
            leapfrog_steps: 32,
            target_accept: 0.8,
            step_jitter: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HmcFit {
    pub posterior: SamplePosterior,
    /// Split R-hat for every latent coordinate.
    pub rhat: Vec<f64>,
    /// Post-warmup transitions whose energy error exceeded 1000.
    pub divergences: usize,
    /// Mean post-warmup acceptance probability over all chains.
    pub accept_rate: f64,
    pub step_sizes: Vec<f64>,
}

struct Target<'a> {
    l: &'a DMatrix<f64>,
    blocks: Vec<(usize, usize, usize)>,
    sigma: f64,
    rule: QuadratureRule,
}

impl Target<'_> {
    fn eval(&self, eta: &DVector<f64>) -> (f64, DVector<f64>) {
        let f = self.l * eta;
        let mut value = -0.5 * eta.norm_squared();
        let mut gf = DVector::zeros(f.len());
        for &(off, q, j) in &self.blocks {
            let fb: Vec<f64> = f.rows(off, q).iter().copied().collect();
            let (v, g) = loglik_winner_grad(&fb, j, self.sigma, &self.rule);
            value += v;
            for (k, gk) in g.into_iter().enumerate() {
                gf[off + k] += gk;
            }
        }
        let grad = self.l.tr_mul(&gf) - eta;
        (value, grad)
    }
}

fn winner_blocks(records: &[PreferenceRecord]) -> Result<Vec<(usize, usize, usize)>> {
    let offsets = block_offsets(records);
    records
        .iter()
        .zip(offsets)
        .map(|(r, off)| match r.feedback {
            Feedback::Winner(j) => Ok((off, r.q(), j)),
            _ => Err(Error::invalid("HMC supports winner feedback only")),
        })
        .collect()
}

/// Log posterior density of the whitened latents (up to a constant) and its gradient.
pub fn log_target(
    eta: &DVector<f64>,
    l: &DMatrix<f64>,
    records: &[PreferenceRecord],
    sigma: f64,
) -> Result<(f64, DVector<f64>)> {
    let t = Target {
        l,
        blocks: winner_blocks(records)?,
        sigma,
        rule: gauss_hermite(32)?,
    };
    Ok(t.eval(eta))
}

struct ChainOutput {
    draws: Vec<DVector<f64>>,
    accept_sum: f64,
    divergences: usize,
    step: f64,
}

fn leapfrog(
    t: &Target,
    eta: &DVector<f64>,
    grad: &DVector<f64>,
    p: &DVector<f64>,
    eps: f64,
    steps: usize,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, f64) {
    let mut x = eta.clone();
    let mut g = grad.clone();
    let mut mom = p + &g * (0.5 * eps);
    let mut v = 0.0;
    for s in 0..steps {
        x += &mom * eps;
        let (nv, ng) = t.eval(&x);
        v = nv;
        g = ng;
        if s + 1 < steps {
            mom += &g * eps;
        }
        if !v.is_finite() {
            break;
        }
    }
    mom += &g * (0.5 * eps);
    (x, g, mom, v)
}

fn run_chain(t: &Target, dim: usize, cfg: &HmcConfig, seed: u64) -> ChainOutput {
    let mut rng = seeded_rng(seed);
    let mut eta = DVector::from_fn(dim, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let (mut logp, mut grad) = t.eval(&eta);

    let momentum = |rng: &mut crate::numerics::SimRng| {
        DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
    };

    // initial step size: single leapfrog step with acceptance near ½
    let mut eps = 0.1f64;
    {
        let p = momentum(&mut rng);
        let accept = |eps: f64| {
            let (_, _, pn, v) = leapfrog(t, &eta, &grad, &p, eps, 1);
            let h = -logp + 0.5 * p.norm_squared();
            let hn = -v + 0.5 * pn.norm_squared();
            if hn.is_finite() { (h - hn).min(0.0).exp() } else { 0.0 }
        };
        let dir = if accept(eps) > 0.5 { 1.0 } else { -1.0 };
        for _ in 0..50 {
            let a = accept(eps);
            if (dir > 0.0 && a <= 0.5) || (dir < 0.0 && a > 0.5) {
                break;
            }
            eps *= 2f64.powf(dir);
        }
    }

    // dual averaging
    let mu = (10.0 * eps).ln();
    let (gamma, t0, kappa) = (0.05, 10.0, 0.75);
    let mut h_bar = 0.0;
    let mut log_eps_bar = 0.0;
    let mut out = ChainOutput {
        draws: Vec::with_capacity(cfg.samples_per_chain),
        accept_sum: 0.0,
        divergences: 0,
        step: eps,
    };

    for it in 0..cfg.warmup + cfg.samples_per_chain {
        let warm = it < cfg.warmup;
        let step = if warm {
            eps
        } else {
            out.step * (1.0 + cfg.step_jitter * (2.0 * rng.random::<f64>() - 1.0))
        };
        let p = momentum(&mut rng);
        let (xn, gn, pn, vn) = leapfrog(t, &eta, &grad, &p, step, cfg.leapfrog_steps);
        let h0 = -logp + 0.5 * p.norm_squared();
        let h1 = -vn + 0.5 * pn.norm_squared();
        let dh = if h1.is_finite() { h1 - h0 } else { f64::INFINITY };
        let a = (-dh).min(0.0).exp();
        if rng.random::<f64>() < a {
            eta = xn;
            grad = gn;
            logp = vn;
        }
        if warm {
            let m = (it + 1) as f64;
            h_bar = (1.0 - 1.0 / (m + t0)) * h_bar + (cfg.target_accept - a) / (m + t0);
            let log_eps = mu - m.sqrt() / gamma * h_bar;
            let w = m.powf(-kappa);
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
            eps = log_eps.exp();
            if it + 1 == cfg.warmup {
                out.step = log_eps_bar.exp();
            }
        } else {
            out.accept_sum += a;
            if dh > 1000.0 {
                out.divergences += 1;
            }
            out.draws.push(t.l * &eta);
        }
    }
    if cfg.warmup == 0 {
        out.step = eps;
    }
    out
}

/// Split R-hat of one scalar quantity across chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        if h < 2 {
            return f64::NAN;
        }
        halves.push(&c[..h]);
        halves.push(&c[c.len() - h..]);
    }
    let n = halves[0].len() as f64;
    let m = halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Draws from the latent posterior of winner-feedback batches.
pub fn hmc_sample(
    kernel: &KernelParams,
    records: &[PreferenceRecord],
    sigma: f64,
    cfg: &HmcConfig,
) -> Result<HmcFit> {
    if cfg.chains == 0 || cfg.samples_per_chain == 0 || cfg.leapfrog_steps == 0 {
        return Err(Error::invalid("HMC needs at least one chain, draw and leapfrog step"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("noise sd must be positive"));
    }
    let blocks = winner_blocks(records)?;
    let (x, k) = training_prior(kernel, records)?;
    let n = k.nrows();
    let l = if n > 0 {
        chol_default(&k)?.into_l()
    } else {
        DMatrix::zeros(0, 0)
    };
    let target = Target {
        l: &l,
        blocks,
        sigma,
        rule: gauss_hermite(32)?,
    };
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&target, n, cfg, derive_seed(cfg.seed, c as u64)))
        .collect();

    let total = cfg.chains * cfg.samples_per_chain;
    let mut samples = DMatrix::zeros(total, n);
    let mut row = 0;
    for o in &outputs {
        for d in &o.draws {
            samples.row_mut(row).copy_from(&d.transpose());
            row += 1;
        }
    }
    let rhat = (0..n)
        .map(|i| {
            let per_chain: Vec<Vec<f64>> = outputs
                .iter()
                .map(|o| o.draws.iter().map(|d| d[i]).collect())
                .collect();
            split_rhat(&per_chain)
        })
        .collect();
    Ok(HmcFit {
        posterior: SamplePosterior {
            train_inputs: x,
            samples,
            kernel: kernel.clone(),
            noise_sd: sigma,
        },
        rhat,
        divergences: outputs.iter().map(|o| o.divergences).sum(),
        accept_rate: outputs.iter().map(|o| o.accept_sum).sum::<f64>() / total as f64,
        step_sizes: outputs.iter().map(|o| o.step).collect(),
    })
}
