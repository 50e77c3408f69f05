//! Gaussian variational inference for batch-winner feedback, using the
//! one-vs-each factorisation of the winner likelihood.
//!
//! `q(f) = N(Kα, (K⁻¹ + diag β)⁻¹)`. Each winner/loser pair contributes
//! `E_q[log Φ((f_i − f_j) / (√2 σ))]`, computed by Gauss–Hermite quadrature
//! over the 1-D marginal of `f_i − f_j`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::training_prior;
use crate::error::{Error, Result};
use crate::gp::{GaussianPosterior, KernelParams};
use crate::numerics::{
    chol_strict, gauss_hermite, inv_mills, log_std_normal_cdf, seeded_rng, symmetrize,
    QuadratureRule, SQRT_PI,
};
use crate::preference::{Feedback, PreferenceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViOptimizer {
    Adam,
    /// Exact-gradient ascent with backtracking; every accepted step raises the ELBO.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViConfig {
    pub iters: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Records per stochastic step; `None` uses all of them.
    pub minibatch: Option<usize>,
    pub optimizer: ViOptimizer,
    pub quadrature_nodes: usize,
    pub seed: u64,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            iters: 50,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            minibatch: None,
            optimizer: ViOptimizer::Adam,
            quadrature_nodes: 48,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViParams {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ViFit {
    pub posterior: GaussianPosterior,
    pub params: ViParams,
    /// ELBO after each iteration (full data).
    pub trace: Vec<f64>,
    pub non_finite: bool,
}

/// Winner/loser index pairs `(winner, loser)` in stacked coordinates.
fn stacked_pairs(records: &[PreferenceRecord], subset: Option<&[usize]>) -> Result<Vec<(usize, usize)>> {
    let offsets = super::block_offsets(records);
    let mut out = Vec::new();
    let all: Vec<usize> = (0..records.len()).collect();
    for &b in subset.unwrap_or(&all) {
        let r = &records[b];
        let Feedback::Winner(j) = r.feedback else {
            return Err(Error::invalid("variational inference supports winner feedback only"));
        };
        for i in 0..r.q() {
            if i != j {
                out.push((offsets[b] + j, offsets[b] + i));
            }
        }
    }
    Ok(out)
}

struct Decomposition {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    l_inv_frob2: f64,
    ln_det_l: f64,
}

fn decompose(k: &DMatrix<f64>, p: &ViParams) -> Result<Decomposition> {
    let n = k.nrows();
    let s = p.beta.map(|b| b.sqrt());
    // A = I + S K S
    let mut a = DMatrix::from_fn(n, n, |i, j| s[i] * k[(i, j)] * s[j]);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let chol = chol_strict(&a).ok_or(Error::NotPsd { jitter: 0.0 })?;
    // V = L⁻¹ S K, Σ = K − Vᵀ V
    let sk = DMatrix::from_fn(n, n, |i, j| s[i] * k[(i, j)]);
    let v = chol.solve_lower(&sk);
    let mut cov = k - v.transpose() * &v;
    symmetrize(&mut cov);
    let l_inv = chol.inverse_l();
    Ok(Decomposition {
        mean: k * &p.alpha,
        cov,
        l_inv_frob2: l_inv.norm_squared(),
        ln_det_l: chol.l().diagonal().iter().map(|v| v.ln()).sum(),
    })
}

/// `E[log Φ(d / (√2σ))]` for `d ~ N(m, s²)` and its derivatives in `m` and `s²`.
fn expected_log_probit(m: f64, s2: f64, sigma: f64, rule: &QuadratureRule) -> (f64, f64, f64) {
    let c = std::f64::consts::SQRT_2 * sigma;
    let s = s2.max(0.0).sqrt();
    let (mut v, mut dm, mut ds2) = (0.0, 0.0, 0.0);
    for (&t, &w) in rule.nodes().iter().zip(rule.weights()) {
        let u = (m + std::f64::consts::SQRT_2 * s * t) / c;
        let w = w / SQRT_PI;
        let lam = inv_mills(u);
        v += w * log_std_normal_cdf(u);
        dm += w * lam / c;
        // ∂/∂s² E[g(d)] = ½ E[g''(d)]
        ds2 += 0.5 * w * (-lam * (u + lam)) / (c * c);
    }
    (v, dm, ds2)
}

fn likelihood_term(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    pairs: &[(usize, usize)],
    sigma: f64,
    rule: &QuadratureRule,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let mut total = 0.0;
    let mut gm = DVector::zeros(n);
    let mut gs = DMatrix::zeros(n, n);
    for &(j, i) in pairs {
        let m = mean[i] - mean[j];
        let s2 = cov[(i, i)] + cov[(j, j)] - 2.0 * cov[(i, j)];
        let (v, dm, e) = expected_log_probit(m, s2, sigma, rule);
        total += v;
        gm[i] += dm;
        gm[j] -= dm;
        gs[(i, i)] += e;
        gs[(j, j)] += e;
        gs[(i, j)] -= e;
        gs[(j, i)] -= e;
    }
    (total, gm, gs)
}

fn elbo_parts(
    k: &DMatrix<f64>,
    p: &ViParams,
    pairs: &[(usize, usize)],
    sigma: f64,
    rule: &QuadratureRule,
    scale: f64,
    want_grad: bool,
) -> Result<(f64, Option<(DVector<f64>, DVector<f64>)>)> {
    let n = k.nrows();
    let dec = decompose(k, p)?;
    let (lik, gm, gs) = likelihood_term(&dec.mean, &dec.cov, pairs, sigma, rule);
    let ka = &dec.mean;
    let kl = 0.5 * (dec.l_inv_frob2 + p.alpha.dot(ka) - n as f64 + 2.0 * dec.ln_det_l);
    let value = scale * lik - kl;
    if !want_grad {
        return Ok((value, None));
    }
    let g_alpha = k * (gm * scale - &p.alpha);
    // ∂ELBO/∂Σ = scale·G + ½ diag(β); ∂Σ/∂β_k = −Σ e_k e_kᵀ Σ
    let mut m = gs * scale;
    for i in 0..n {
        m[(i, i)] += 0.5 * p.beta[i];
    }
    let sms = &dec.cov * m * &dec.cov;
    let g_log_beta = DVector::from_fn(n, |i, _| -sms[(i, i)] * p.beta[i]);
    Ok((value, Some((g_alpha, g_log_beta))))
}

/// Evidence lower bound for the given variational parameters.
pub fn elbo(
    k: &DMatrix<f64>,
    params: &ViParams,
    records: &[PreferenceRecord],
    sigma: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    let pairs = stacked_pairs(records, None)?;
    Ok(elbo_parts(k, params, &pairs, sigma, rule, 1.0, false)?.0)
}

/// ELBO with its gradient in `(α, ln β)`.
pub fn elbo_grad(
    k: &DMatrix<f64>,
    params: &ViParams,
    records: &[PreferenceRecord],
    sigma: f64,
    rule: &QuadratureRule,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let pairs = stacked_pairs(records, None)?;
    let (v, g) = elbo_parts(k, params, &pairs, sigma, rule, 1.0, true)?;
    let (ga, gb) = g.expect("gradient requested");
    Ok((v, ga, gb))
}

/// Initial precisions from the curvature of each pair term at zero mean
/// difference: `E[-(log Φ)''] ≈ 0.637 / (2σ²)` per pair an element joins.
fn initial_beta(n: usize, pairs: &[(usize, usize)], sigma: f64) -> DVector<f64> {
    let mut counts = vec![0usize; n];
    for &(j, i) in pairs {
        counts[i] += 1;
        counts[j] += 1;
    }
    let curv = 2.0 / std::f64::consts::PI / (2.0 * sigma * sigma);
    DVector::from_fn(n, |i, _| (0.5 * curv * counts[i] as f64).max(1e-6))
}

/// Fits `q(f)` by maximising the ELBO.
pub fn vi_fit(
    kernel: &KernelParams,
    records: &[PreferenceRecord],
    sigma: f64,
    cfg: &ViConfig,
) -> Result<ViFit> {
    if cfg.iters == 0 {
        return Err(Error::invalid("VI needs iters >= 1"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("noise sd must be positive"));
    }
    let pairs = stacked_pairs(records, None)?;
    let (x, k) = training_prior(kernel, records)?;
    let n = k.nrows();
    let rule = gauss_hermite(cfg.quadrature_nodes)?;
    let mut params = ViParams {
        alpha: DVector::zeros(n),
        beta: initial_beta(n, &pairs, sigma),
    };
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut trace = Vec::with_capacity(cfg.iters);
    let mut non_finite = false;

    let mut current = elbo_parts(&k, &params, &pairs, sigma, &rule, 1.0, true)?;
    if !current.0.is_finite() {
        return Err(Error::NonFinite("initial ELBO".into()));
    }
    let (mut m_a, mut v_a) = (DVector::zeros(n), DVector::zeros(n));
    let (mut m_b, mut v_b) = (DVector::zeros(n), DVector::zeros(n));
    let mut step = cfg.learning_rate;

    for it in 0..cfg.iters {
        let (ga, gb) = match (cfg.minibatch, &cfg.optimizer) {
            (Some(size), ViOptimizer::Adam) if size < records.len() && size > 0 => {
                order.shuffle(&mut rng);
                let sub = stacked_pairs(records, Some(&order[..size]))?;
                let scale = records.len() as f64 / size as f64;
                let (_, g) = elbo_parts(&k, &params, &sub, sigma, &rule, scale, true)?;
                g.expect("gradient requested")
            }
            _ => current.1.clone().expect("gradient requested"),
        };
        let next = match cfg.optimizer {
            ViOptimizer::Adam => {
                let t = (it + 1) as i32;
                let upd = |g: &DVector<f64>, m: &mut DVector<f64>, v: &mut DVector<f64>| {
                    *m = &*m * cfg.beta1 + g * (1.0 - cfg.beta1);
                    *v = &*v * cfg.beta2 + g.map(|x| x * x) * (1.0 - cfg.beta2);
                    let mh = &*m / (1.0 - cfg.beta1.powi(t));
                    let vh = &*v / (1.0 - cfg.beta2.powi(t));
                    mh.zip_map(&vh, |a, b| cfg.learning_rate * a / (b.sqrt() + 1e-8))
                };
                let da = upd(&ga, &mut m_a, &mut v_a);
                let db = upd(&gb, &mut m_b, &mut v_b);
                let cand = ViParams {
                    alpha: &params.alpha + da,
                    beta: params.beta.zip_map(&db, |b, d| b * d.exp()),
                };
                match elbo_parts(&k, &cand, &pairs, sigma, &rule, 1.0, true) {
                    Ok(e) if e.0.is_finite() => Some((cand, e)),
                    _ => None,
                }
            }
            ViOptimizer::Backtracking => {
                let mut accepted = None;
                for _ in 0..50 {
                    let cand = ViParams {
                        alpha: &params.alpha + &ga * step,
                        beta: params.beta.zip_map(&gb, |b, g| b * (step * g).exp()),
                    };
                    if let Ok(e) = elbo_parts(&k, &cand, &pairs, sigma, &rule, 1.0, true) {
                        if e.0.is_finite() && e.0 >= current.0 {
                            accepted = Some((cand, e));
                            step *= 1.5;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                // no improving step: stay put
                Some(accepted.unwrap_or_else(|| (params.clone(), current.clone())))
            }
        };
        let Some((p, e)) = next else {
            non_finite = true;
            break;
        };
        params = p;
        current = e;
        trace.push(current.0);
    }

    let dec = decompose(&k, &params)?;
    Ok(ViFit {
        posterior: GaussianPosterior {
            train_inputs: x,
            mean: dec.mean,
            cov: dec.cov,
            kernel: kernel.clone(),
            noise_sd: sigma,
        },
        params,
        trace,
        non_finite,
    })
}
