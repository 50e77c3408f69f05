//! Expectation propagation with one full multivariate-normal site per batch.
//!
//! Tilted moments are estimated by self-normalised importance sampling from the
//! cavity. Each site keeps one fixed set of standardised normal draws for the
//! whole fit, so the sweep is a deterministic map and can actually settle.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{block_offsets, training_prior, BatchLikelihood};
use crate::error::{Error, Result};
use crate::gp::{GaussianPosterior, KernelParams};
use crate::numerics::{chol_strict, derive_seed, seeded_rng, standard_normal_matrix, symmetrize};
use crate::preference::{Feedback, PreferenceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpConfig {
    pub max_iters: usize,
    pub damping: f64,
    pub moment_samples: usize,
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for EpConfig {
    fn default() -> Self {
        EpConfig {
            max_iters: 100,
            damping: 0.5,
            moment_samples: 2000,
            convergence_tol: 1e-3,
            seed: 0,
        }
    }
}

/// Natural parameters of one batch's Gaussian site.
#[derive(Debug, Clone, PartialEq)]
pub struct EpSite {
    pub batch_index: usize,
    pub natural_precision: DMatrix<f64>,
    pub natural_shift: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct EpFit {
    pub posterior: GaussianPosterior,
    pub sites: Vec<EpSite>,
    pub iterations: usize,
    pub converged: bool,
    /// Site updates skipped because the cavity was not positive definite or
    /// the importance weights degenerated.
    pub skipped_updates: usize,
}

#[derive(Debug, Clone)]
pub struct TiltedMoments {
    pub log_z: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub ess: f64,
}

/// Antithetic normal draws whitened so their sample mean is exactly zero and
/// their (1/n) sample covariance exactly the identity.
pub fn standardized_draws<R: Rng + ?Sized>(
    count: usize,
    dim: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let half = count.div_ceil(2).max(dim + 1);
    let z0 = standard_normal_matrix(half, dim, rng);
    let mut z = DMatrix::zeros(2 * half, dim);
    z.view_mut((0, 0), (half, dim)).copy_from(&z0);
    z.view_mut((half, 0), (half, dim)).copy_from(&(-z0));
    let n = z.nrows() as f64;
    let s = z.transpose() * &z / n;
    let l = chol_strict(&s).ok_or(Error::NotPsd { jitter: 0.0 })?;
    // z ← z L⁻ᵀ
    let zt = l.solve_lower(&z.transpose());
    Ok(zt.transpose())
}

/// Symmetric square root and inverse of an SPD matrix, or `None` if it is not
/// positive definite.
fn spd_sqrt_inv(p: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(p.clone());
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let v = &eig.eigenvectors;
    // p⁻¹ and p^{-1/2}
    let inv = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e)) * v.transpose();
    let isqrt =
        v * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.sqrt())) * v.transpose();
    Some((inv, isqrt))
}

/// Importance-sampling moments of `N(f | m, C) · exp(log_lik(f))`, with the
/// cavity drawn as `m + C^{1/2} z` for the given standardised draws `z`.
pub fn tilted_moments_from_draws(
    cavity_mean: &DVector<f64>,
    cavity_sqrt: &DMatrix<f64>,
    log_lik: &dyn Fn(&[f64]) -> f64,
    z: &DMatrix<f64>,
) -> Result<TiltedMoments> {
    let q = cavity_mean.len();
    let n = z.nrows();
    let f = {
        let mut f = z * cavity_sqrt.transpose();
        for mut row in f.row_iter_mut() {
            row += cavity_mean.transpose();
        }
        f
    };
    let mut logw = Vec::with_capacity(n);
    let mut buf = vec![0.0; q];
    for row in f.row_iter() {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        logw.push(log_lik(&buf));
    }
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return Err(Error::DegenerateWeights { ess: 0.0 });
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let ess = sw * sw / sw2;
    let mut mean = DVector::zeros(q);
    for (row, wi) in f.row_iter().zip(&w) {
        mean += row.transpose() * (*wi / sw);
    }
    let mut cov = DMatrix::zeros(q, q);
    for (row, wi) in f.row_iter().zip(&w) {
        let d = row.transpose() - &mean;
        cov.ger(*wi / sw, &d, &d, 1.0);
    }
    symmetrize(&mut cov);
    Ok(TiltedMoments {
        log_z: mx + (sw / n as f64).ln(),
        mean,
        cov,
        ess,
    })
}

/// Tilted moments of a Gaussian cavity times the exact likelihood of one
/// batch's feedback, estimated from `nsamples` cavity draws.
pub fn tilted_moments<R: Rng + ?Sized>(
    cavity_mean: &DVector<f64>,
    cavity_cov: &DMatrix<f64>,
    feedback: &Feedback,
    sigma: f64,
    nsamples: usize,
    rng: &mut R,
) -> Result<TiltedMoments> {
    let q = cavity_mean.len();
    let lik = BatchLikelihood::new(feedback, q, sigma, rng.random())?;
    let prec = cavity_cov
        .clone()
        .try_inverse()
        .ok_or(Error::NotPsd { jitter: 0.0 })?;
    let (_, isqrt_prec) = spd_sqrt_inv(&prec).ok_or(Error::NotPsd { jitter: 0.0 })?;
    let z = standardized_draws(nsamples, q, rng)?;
    let m = tilted_moments_from_draws(cavity_mean, &isqrt_prec, &|f| lik.log_lik(f), &z)?;
    if m.ess < MIN_ESS {
        return Err(Error::DegenerateWeights { ess: m.ess });
    }
    Ok(m)
}

const MIN_ESS: f64 = 10.0;

struct SiteState {
    offset: usize,
    q: usize,
    lik: BatchLikelihood,
    z: DMatrix<f64>,
    z_large: Option<DMatrix<f64>>,
    seed: u64,
    lambda: DMatrix<f64>,
    nu: DVector<f64>,
}

/// `Σ = (K⁻¹ + Λ)⁻¹` and `μ = Σ ν` for block-diagonal site parameters,
/// through `B = I + S K S` with `S = Λ^{1/2}`, which stays well conditioned
/// even when `K` is nearly singular.
fn global_posterior(k: &DMatrix<f64>, sites: &[SiteState]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let mut s_half = DMatrix::zeros(n, n);
    let mut nu = DVector::zeros(n);
    for s in sites {
        s_half
            .view_mut((s.offset, s.offset), (s.q, s.q))
            .copy_from(&psd_sqrt(&s.lambda));
        nu.rows_mut(s.offset, s.q).copy_from(&s.nu);
    }
    let sk = &s_half * k;
    let mut b = DMatrix::identity(n, n) + &sk * &s_half;
    symmetrize(&mut b);
    let l = chol_strict(&b).ok_or_else(|| Error::NonFinite("EP system matrix".into()))?;
    let v = l.solve_lower(&sk);
    let mut sigma = k - v.transpose() * v;
    symmetrize(&mut sigma);
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("EP global covariance".into()));
    }
    let mu = &sigma * nu;
    Ok((mu, sigma))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(0.0).sqrt())) * v.transpose()
}

/// Whether a covariance is PSD up to rounding relative to its diagonal.
fn is_valid_cov(c: &DMatrix<f64>) -> bool {
    if c.nrows() == 0 {
        return true;
    }
    let scale = c.diagonal().amax().max(f64::MIN_POSITIVE);
    SymmetricEigen::new(c.clone()).eigenvalues.min() >= -1e-9 * scale
}

/// Projects a symmetric matrix onto the positive semi-definite cone.
fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(0.0))) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Fits the EP approximation to the posterior over every batch's latent values.
pub fn ep_fit(
    kernel: &KernelParams,
    records: &[PreferenceRecord],
    sigma: f64,
    cfg: &EpConfig,
) -> Result<EpFit> {
    if cfg.max_iters == 0 {
        return Err(Error::invalid("EP needs max_iters >= 1"));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::invalid("EP damping must lie in (0, 1]"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("noise sd must be positive"));
    }
    let (x, k) = training_prior(kernel, records)?;
    let offsets = block_offsets(records);
    let mut sites = Vec::with_capacity(records.len());
    for (b, r) in records.iter().enumerate() {
        let seed = derive_seed(cfg.seed, b as u64);
        let q = r.q();
        sites.push(SiteState {
            offset: offsets[b],
            q,
            lik: BatchLikelihood::new(&r.feedback, q, sigma, derive_seed(seed, 1))?,
            z: standardized_draws(cfg.moment_samples, q, &mut seeded_rng(seed))?,
            z_large: None,
            seed,
            lambda: DMatrix::zeros(q, q),
            nu: DVector::zeros(q),
        });
    }

    let (mut mu, mut cov) = (DVector::zeros(x.nrows()), k.clone());
    let mut iterations = 0;
    let mut converged = sites.is_empty();
    let mut skipped = 0;
    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let (mu_prev, sd_prev) = (mu.clone(), cov.diagonal().map(|v| v.max(0.0).sqrt()));
        for b in 0..sites.len() {
            let (off, q) = (sites[b].offset, sites[b].q);
            let sig_b = cov.view((off, off), (q, q)).into_owned();
            let mu_b = mu.rows(off, q).into_owned();
            let Some(p) = sig_b.clone().try_inverse() else {
                skipped += 1;
                continue;
            };
            let mut p_c = p.clone() - &sites[b].lambda;
            symmetrize(&mut p_c);
            let h_c = &p * &mu_b - &sites[b].nu;
            let Some((c_c, c_sqrt)) = spd_sqrt_inv(&p_c) else {
                skipped += 1;
                continue;
            };
            let m_c = &c_c * &h_c;

            let site = &mut sites[b];
            let lik = &site.lik;
            let ll = |f: &[f64]| lik.log_lik(f);
            let mut tm = tilted_moments_from_draws(&m_c, &c_sqrt, &ll, &site.z);
            if matches!(&tm, Ok(m) if m.ess < MIN_ESS) || tm.is_err() {
                if site.z_large.is_none() {
                    site.z_large = Some(standardized_draws(
                        4 * cfg.moment_samples,
                        q,
                        &mut seeded_rng(derive_seed(site.seed, 2)),
                    )?);
                }
                tm = tilted_moments_from_draws(&m_c, &c_sqrt, &ll, site.z_large.as_ref().unwrap());
            }
            let tm = match tm {
                Ok(m) if m.ess >= MIN_ESS => m,
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            let Some(ct_inv) = tm.cov.clone().try_inverse() else {
                skipped += 1;
                continue;
            };
            let mut lam_new = ct_inv.clone() - &p_c;
            symmetrize(&mut lam_new);
            let lam_new = clip_psd(&lam_new);
            let nu_new = &ct_inv * &tm.mean - &h_c;
            if lam_new.iter().chain(nu_new.iter()).any(|v| !v.is_finite()) {
                skipped += 1;
                continue;
            }
            let lam_upd = &site.lambda * (1.0 - cfg.damping) + lam_new * cfg.damping;
            let nu_upd = &site.nu * (1.0 - cfg.damping) + nu_new * cfg.damping;
            let (old_l, old_n) = (
                std::mem::replace(&mut site.lambda, lam_upd),
                std::mem::replace(&mut site.nu, nu_upd),
            );
            match global_posterior(&k, &sites) {
                Ok((m, c)) if is_valid_cov(&c) => {
                    mu = m;
                    cov = c;
                }
                _ => {
                    sites[b].lambda = old_l;
                    sites[b].nu = old_n;
                    skipped += 1;
                }
            }
        }
        // converged once a full sweep moves no posterior marginal by more than tol
        let sd = cov.diagonal().map(|v| v.max(0.0).sqrt());
        let change = (&mu - &mu_prev).amax().max((&sd - &sd_prev).amax());
        converged = change < cfg.convergence_tol;
    }

    Ok(EpFit {
        posterior: GaussianPosterior {
            train_inputs: x,
            mean: mu,
            cov,
            kernel: kernel.clone(),
            noise_sd: sigma,
        },
        sites: sites
            .into_iter()
            .enumerate()
            .map(|(b, s)| EpSite {
                batch_index: b,
                natural_precision: s.lambda,
                natural_shift: s.nu,
            })
            .collect(),
        iterations,
        converged,
        skipped_updates: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{std_normal_cdf, seeded_rng};
    use crate::preference::PreferenceRecord;

    fn kernel() -> KernelParams {
        KernelParams::new(1.0, vec![0.2]).unwrap()
    }

    #[test]
    fn standardized_draws_have_exact_moments() {
        let z = standardized_draws(500, 3, &mut seeded_rng(1)).unwrap();
        let n = z.nrows() as f64;
        let s = z.transpose() * &z / n;
        assert!((s - DMatrix::identity(3, 3)).amax() < 1e-12);
        for c in z.column_iter() {
            assert!(c.sum().abs() < 1e-10);
        }
    }

    #[test]
    fn no_batches_returns_prior() {
        let fit = ep_fit(&kernel(), &[], 0.1, &EpConfig::default()).unwrap();
        assert_eq!(fit.posterior.mean.len(), 0);
        assert!(fit.converged);
    }

    #[test]
    fn flat_likelihood_returns_cavity() {
        let m = DVector::from_vec(vec![0.3, -0.1]);
        let c = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]);
        let t = tilted_moments(&m, &c, &Feedback::Pairs(vec![]), 0.1, 1000, &mut seeded_rng(3))
            .unwrap();
        assert!(t.log_z.abs() < 1e-12);
        assert!((t.mean - m).amax() < 1e-10);
        assert!((t.cov - c).amax() < 1e-10);
    }

    #[test]
    fn pairwise_normalizer_matches_probit_integral() {
        // ∫ N(f; m, V) Φ((f₂ − f₁)/(√2σ)) df = Φ((m₂ − m₁)/√(2σ² + v₁₁ + v₂₂ − 2v₁₂))
        let m = DVector::from_vec(vec![0.1, 0.4]);
        let v = DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]);
        let sigma: f64 = 0.2;
        let exact = std_normal_cdf(
            (m[1] - m[0]) / (2.0 * sigma * sigma + 0.3 + 0.2 - 0.1f64).sqrt(),
        );
        let mut rng = seeded_rng(9);
        let t = tilted_moments(&m, &v, &Feedback::Winner(0), sigma, 20_000, &mut rng).unwrap();
        // weights lie in [0, 1], so their sd is at most ½
        let se = 0.5 / (20_000f64).sqrt();
        assert!((t.log_z.exp() - exact).abs() < 3.0 * se, "{} vs {exact}", t.log_z.exp());
    }

    #[test]
    fn decisive_feedback_leaves_cavity_unchanged() {
        let m = DVector::from_vec(vec![-3.0, 3.0]);
        let c = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]);
        let t = tilted_moments(&m, &c, &Feedback::Winner(0), 0.1, 4000, &mut seeded_rng(2))
            .unwrap();
        assert!(t.log_z.abs() < 1e-6);
        assert!((t.mean - m).amax() < 1e-6);
        assert!((t.cov - c).amax() < 1e-6);
    }

    #[test]
    fn winner_gets_the_lower_mean() {
        let r = PreferenceRecord::new(
            DMatrix::from_row_slice(2, 1, &[0.2, 0.8]),
            Feedback::Winner(0),
        )
        .unwrap();
        let fit = ep_fit(&kernel(), &[r], 0.1, &EpConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.posterior.mean[0] < fit.posterior.mean[1]);
    }

    #[test]
    fn nearly_repeated_inputs_still_update_every_site() {
        // later batches revisit earlier locations, so K is close to singular
        let mut records = Vec::new();
        for b in 0..6 {
            let base = 0.3 + 1e-4 * b as f64;
            records.push(
                PreferenceRecord::new(
                    DMatrix::from_row_slice(3, 1, &[base, base + 0.05, 0.9 - 1e-4 * b as f64]),
                    Feedback::Winner(b % 3),
                )
                .unwrap(),
            );
        }
        let fit = ep_fit(&KernelParams::new(0.3, vec![0.15]).unwrap(), &records, 0.05, &EpConfig::default())
            .unwrap();
        assert_eq!(fit.skipped_updates, 0);
        assert!(fit.converged);
        assert!(fit.sites.iter().all(|s| s.natural_precision.amax() > 0.0));
    }

    #[test]
    fn posterior_variance_does_not_exceed_prior() {
        let mut rng = seeded_rng(12);
        let mut records = Vec::new();
        for _ in 0..4 {
            let x = DMatrix::from_fn(3, 1, |_, _| rng.random::<f64>());
            records.push(PreferenceRecord::new(x, Feedback::Winner(rng.random_range(0..3))).unwrap());
        }
        let k = kernel();
        let fit = ep_fit(&k, &records, 0.1, &EpConfig::default()).unwrap();
        for i in 0..12 {
            assert!(fit.posterior.cov[(i, i)] <= k.variance + 1e-6);
        }
    }

    #[test]
    fn ranking_feedback_orders_means() {
        let r = PreferenceRecord::new(
            DMatrix::from_row_slice(3, 1, &[0.1, 0.5, 0.9]),
            Feedback::Ranking(vec![2, 0, 1]),
        )
        .unwrap();
        let fit = ep_fit(&kernel(), &[r], 0.1, &EpConfig::default()).unwrap();
        let m = &fit.posterior.mean;
        assert!(m[2] < m[0] && m[0] < m[1], "{m}");
    }

    #[test]
    fn site_parameters_permute_with_the_batch() {
        let m = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let c = DMatrix::from_row_slice(3, 3, &[0.4, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.5]);
        let perm = [2usize, 0, 1];
        let mp = DVector::from_fn(3, |i, _| m[perm[i]]);
        let cp = DMatrix::from_fn(3, 3, |i, j| c[(perm[i], perm[j])]);
        let z = standardized_draws(2000, 3, &mut seeded_rng(4)).unwrap();
        let zp = DMatrix::from_fn(z.nrows(), 3, |s, i| z[(s, perm[i])]);
        let sigma = 0.2;
        let rule = crate::numerics::gauss_hermite(32).unwrap();
        // the winner is element 1 in the original order
        let winner_p = perm.iter().position(|&p| p == 1).unwrap();
        let (_, sq) = spd_sqrt_inv(&c.clone().try_inverse().unwrap()).unwrap();
        let (_, sqp) = spd_sqrt_inv(&cp.clone().try_inverse().unwrap()).unwrap();
        let a = tilted_moments_from_draws(
            &m,
            &sq,
            &|f| crate::preference::loglik_winner(f, 1, sigma, &rule),
            &z,
        )
        .unwrap();
        let b = tilted_moments_from_draws(
            &mp,
            &sqp,
            &|f| crate::preference::loglik_winner(f, winner_p, sigma, &rule),
            &zp,
        )
        .unwrap();
        for i in 0..3 {
            assert!((a.mean[perm[i]] - b.mean[i]).abs() < 1e-10);
            for j in 0..3 {
                assert!((a.cov[(perm[i], perm[j])] - b.cov[(i, j)]).abs() < 1e-10);
            }
        }
    }
}
