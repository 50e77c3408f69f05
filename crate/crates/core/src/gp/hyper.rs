//! Type-II maximum likelihood for the kernel of a plain GP regression.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

use super::kernel::{prior_cov, KernelParams};
use crate::error::{Error, Result};
use crate::numerics::{chol_psd, seeded_rng, BoxMinimizer};

#[derive(Debug, Clone)]
pub struct HyperFitOptions {
    pub restarts: usize,
    /// Above this many points the search runs on a fixed random subset.
    pub max_points: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for HyperFitOptions {
    fn default() -> Self {
        HyperFitOptions {
            restarts: 4,
            max_points: 500,
            max_iters: 80,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperFit {
    pub kernel: KernelParams,
    pub noise_sd: f64,
    pub log_marginal_likelihood: f64,
    /// Number of points the search actually used.
    pub points_used: usize,
}

/// Log marginal likelihood of `y` (already centred) and its gradient with
/// respect to `theta = [ln σf², ln ℓ₁ … ln ℓ_d, ln σn]`.
pub fn log_marginal_likelihood(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let d = x.ncols();
    let n = x.nrows();
    assert_eq!(theta.len(), d + 2);
    let kp = KernelParams {
        variance: theta[0].exp(),
        lengthscales: theta[1..=d].iter().map(|v| v.exp()).collect(),
    };
    let s2 = (2.0 * theta[d + 1]).exp();
    let kf = prior_cov(x, &kp);
    let mut ky = kf.clone();
    for i in 0..n {
        ky[(i, i)] += s2;
    }
    let chol = chol_psd(&ky, 0.0)?;
    let alpha = chol.solve_vec(y);
    let value = -0.5 * y.dot(&alpha)
        - 0.5 * chol.ln_det()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = ααᵀ - K⁻¹; dL/dθ = ½ tr(W dK/dθ)
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);

    let mut grad = vec![0.0; d + 2];
    for j in 0..n {
        for i in 0..n {
            let wk = w[(i, j)] * kf[(i, j)];
            grad[0] += wk;
            if i != j {
                for k in 0..d {
                    let u = (x[(i, k)] - x[(j, k)]) / kp.lengthscales[k];
                    grad[1 + k] += wk * u * u;
                }
            }
        }
        grad[d + 1] += w[(j, j)] * 2.0 * s2;
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((value, grad))
}

fn mean_and_sd(y: &DVector<f64>) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.mean();
    let v = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Fits SE kernel hyper-parameters and a noise level to `(x, y)` by multi-start
/// L-BFGS over log-parameters.
pub fn fit_hyperparams_direct(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &HyperFitOptions,
) -> Result<HyperFit> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 points, got {n}")));
    }
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if d == 0 {
        return Err(Error::invalid("inputs have no columns"));
    }
    let mut rng = seeded_rng(opts.seed);
    let (xs, ys) = if n > opts.max_points {
        let mut idx = sample(&mut rng, n, opts.max_points).into_vec();
        idx.sort_unstable();
        (x.select_rows(&idx), DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i])))
    } else {
        (x.clone(), y.clone())
    };
    let (mean, sd) = mean_and_sd(&ys);
    let yc = ys.map(|v| v - mean);

    let var_floor = 1e-6f64;
    let var_hi = (10.0 * sd * sd).max(var_floor * 10.0);
    let noise_lo = (1e-3 * sd).max(1e-6);
    let noise_hi = (sd + 1e-3).max(noise_lo * 10.0);
    let mut lower = vec![var_floor.ln()];
    let mut upper = vec![var_hi.ln()];
    let mut spans = Vec::with_capacity(d);
    for k in 0..d {
        let col = xs.column(k);
        let span = (col.max() - col.min()).max(1e-6);
        spans.push(span);
        lower.push((1e-3 * span).ln());
        upper.push((10.0 * span).ln());
    }
    lower.push(noise_lo.ln());
    upper.push(noise_hi.ln());

    let objective = |t: &[f64]| match log_marginal_likelihood(&xs, &yc, t) {
        Ok((v, g)) if v.is_finite() => (-v, g.into_iter().map(|g| -g).collect()),
        _ => (f64::INFINITY, vec![0.0; t.len()]),
    };

    let minimizer = BoxMinimizer {
        max_iters: opts.max_iters,
        grad_tol: 1e-5,
        f_tol: 1e-9,
        max_step: 2.0,
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in 0..opts.restarts.max(1) {
        let x0: Vec<f64> = if r == 0 {
            let mut t = vec![(sd * sd).max(var_floor * 2.0).ln()];
            t.extend(spans.iter().map(|s| (0.2 * s).ln()));
            t.push((0.1 * sd).max(noise_lo * 2.0).ln());
            t
        } else {
            (0..d + 2)
                .map(|i| rng.random_range(lower[i]..upper[i]))
                .collect()
        };
        let res = minimizer.minimize(objective, &x0, &lower, &upper, None);
        if res.value.is_finite() && best.as_ref().is_none_or(|(v, _)| res.value < *v) {
            best = Some((res.value, res.x));
        }
    }
    let (v, t) = best.ok_or_else(|| {
        Error::DidNotConverge("every hyper-parameter restart failed".to_string())
    })?;
    Ok(HyperFit {
        kernel: KernelParams::new(t[0].exp(), t[1..=d].iter().map(|v| v.exp()).collect())?,
        noise_sd: t[d + 1].exp(),
        log_marginal_likelihood: -v,
        points_used: xs.nrows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{chol_default, mvn_sample};

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded_rng(4);
        for _ in 0..5 {
            let n = 15;
            let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let theta: Vec<f64> = vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..0.0),
                rng.random_range(-2.0..0.0),
                rng.random_range(-3.0..-1.0),
            ];
            let (_, g) = log_marginal_likelihood(&x, &y, &theta).unwrap();
            for k in 0..theta.len() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[k] += 1e-5;
                tm[k] -= 1e-5;
                let fd = (log_marginal_likelihood(&x, &y, &tp).unwrap().0
                    - log_marginal_likelihood(&x, &y, &tm).unwrap().0)
                    / 2e-5;
                assert!(
                    (fd - g[k]).abs() <= 1e-4 * fd.abs().max(1.0),
                    "param {k}: fd {fd} analytic {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn constant_targets_push_variance_to_floor() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 / 19.0);
        let y = DVector::from_element(20, 3.0);
        let fit = fit_hyperparams_direct(&x, &y, &HyperFitOptions::default()).unwrap();
        assert!(fit.kernel.variance < 1e-5, "{}", fit.kernel.variance);
    }

    #[test]
    fn too_few_points_rejected() {
        let x = DMatrix::zeros(5, 1);
        let y = DVector::zeros(5);
        assert!(fit_hyperparams_direct(&x, &y, &HyperFitOptions::default()).is_err());
    }

    #[test]
    fn recovers_lengthscale_of_simulated_gp() {
        let truth = KernelParams::new(1.0, vec![0.2]).unwrap();
        for seed in 0..5u64 {
            let mut rng = seeded_rng(100 + seed);
            let n = 500;
            let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
            let k = prior_cov(&x, &truth);
            let l = chol_default(&k).unwrap();
            let f = mvn_sample(&DVector::zeros(n), l.l(), 1, &mut rng);
            let y = DVector::from_fn(n, |i, _| {
                f[(0, i)] + 0.05 * rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let fit = fit_hyperparams_direct(
                &x,
                &y,
                &HyperFitOptions {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            let l = fit.kernel.lengthscales[0];
            assert!((l - 0.2).abs() <= 0.3 * 0.2, "seed {seed}: lengthscale {l}");
        }
    }
}
