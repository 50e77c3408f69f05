//! Multi-start maximization of a batch acquisition over the search box.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::domain::SearchDomain;
use super::spec::AcquisitionSpec;
use crate::error::Result;
use crate::numerics::{child_rng, numeric_gradient, BoxMinimizer};

#[derive(Debug, Clone)]
pub struct OptimizedBatch {
    pub x: DMatrix<f64>,
    pub value: f64,
}

/// Smallest Euclidean distance between two rows, infinite for fewer than two.
pub fn min_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..x.nrows() {
        for j in i + 1..x.nrows() {
            best = best.min((x.row(i) - x.row(j)).norm());
        }
    }
    best
}

fn dist(x: &[f64], d: usize, i: usize, j: usize) -> f64 {
    (0..d)
        .map(|k| (x[i * d + k] - x[j * d + k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Pushes rows of a row-major `q × d` batch apart until every pair is at
/// least `min_dist` apart, staying inside the box.
fn repair_flat(x: &mut [f64], d: usize, lower: &[f64], upper: &[f64], min_dist: f64) {
    if min_dist <= 0.0 {
        return;
    }
    let q = x.len() / d;
    // aim a hair above the threshold so rounding cannot undo the repair
    let target = min_dist * (1.0 + 1e-6);
    let clamp = |x: &mut [f64], i: usize| {
        for k in 0..d {
            x[i * d + k] = x[i * d + k].clamp(lower[k], upper[k]);
        }
    };
    for _ in 0..100 {
        let mut moved = false;
        for i in 0..q {
            for j in i + 1..q {
                let r = dist(x, d, i, j);
                if r >= min_dist {
                    continue;
                }
                moved = true;
                let mut dir: Vec<f64> = if r > 1e-12 {
                    (0..d).map(|k| (x[j * d + k] - x[i * d + k]) / r).collect()
                } else {
                    let mut e = vec![0.0; d];
                    e[(i + j) % d] = 1.0;
                    e
                };
                // walls block the push: flip the blocked component inward
                for (k, v) in dir.iter_mut().enumerate() {
                    if (*v > 0.0 && x[j * d + k] >= upper[k]) || (*v < 0.0 && x[j * d + k] <= lower[k]) {
                        *v = -*v;
                    }
                }
                let shift = 0.5 * (target - r);
                for k in 0..d {
                    x[i * d + k] -= shift * dir[k];
                    x[j * d + k] += shift * dir[k];
                }
                clamp(x, i);
                clamp(x, j);
            }
        }
        if !moved {
            return;
        }
    }
    // still crowded: relocate offenders along the axes
    for j in 0..q {
        let ok = |x: &[f64]| (0..q).all(|i| i == j || dist(x, d, i, j) >= min_dist);
        if ok(x) {
            continue;
        }
        let orig: Vec<f64> = x[j * d..(j + 1) * d].to_vec();
        'search: for step in 1..=(2.0 / min_dist).ceil() as usize * 2 {
            let radius = target * step as f64;
            for k in 0..d {
                for sign in [1.0, -1.0] {
                    x[j * d..(j + 1) * d].copy_from_slice(&orig);
                    x[j * d + k] = (orig[k] + sign * radius).clamp(lower[k], upper[k]);
                    if ok(x) {
                        break 'search;
                    }
                }
            }
        }
    }
}

/// Enforces the minimum within-batch distance in place.
pub fn repair_batch(x: &mut DMatrix<f64>, domain: &SearchDomain, min_dist: f64) {
    let d = x.ncols();
    let mut flat: Vec<f64> = x.transpose().iter().copied().collect();
    repair_flat(&mut flat, d, domain.lower(), domain.upper(), min_dist);
    *x = DMatrix::from_row_slice(x.nrows(), d, &flat);
}

/// Maximizes `value_fn` over batches of `q` points in `domain`.
///
/// Each restart starts from a uniform random batch with its own RNG stream
/// derived from `seed`, climbs with projected L-BFGS on finite-difference
/// gradients, and is repaired to respect `spec.min_within_batch_dist`.
pub fn optimize_acquisition<F>(
    value_fn: F,
    domain: &SearchDomain,
    q: usize,
    spec: &AcquisitionSpec,
    seed: u64,
) -> Result<OptimizedBatch>
where
    F: Fn(&DMatrix<f64>) -> f64 + Sync,
{
    spec.validate()?;
    let d = domain.dim();
    let lower: Vec<f64> = (0..q).flat_map(|_| domain.lower().iter().copied()).collect();
    let upper: Vec<f64> = (0..q).flat_map(|_| domain.upper().iter().copied()).collect();
    let min_dist = spec.min_within_batch_dist;
    let score = |flat: &[f64]| {
        let v = value_fn(&DMatrix::from_row_slice(q, d, flat));
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let project = |x: &mut [f64]| repair_flat(x, d, domain.lower(), domain.upper(), min_dist);
    let minimizer = BoxMinimizer {
        max_iters: spec.local_iters,
        max_step: 0.25 * domain.max_width(),
        grad_tol: 1e-7,
        f_tol: 1e-9,
        ..Default::default()
    };
    let step = spec.numeric_grad_step;

    let runs: Vec<(f64, Vec<f64>)> = (0..spec.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(seed, r as u64);
            let x0 = domain.sample_uniform(q, &mut rng);
            let mut start: Vec<f64> = x0.transpose().iter().copied().collect();
            project(&mut start);
            let res = minimizer.minimize(
                |x| (score(x), numeric_gradient(score, x, step, &lower, &upper)),
                &start,
                &lower,
                &upper,
                Some(&project),
            );
            let mut x = res.x;
            project(&mut x);
            (score(&x), x)
        })
        .collect();

    let (best_score, best_x) = runs
        .into_iter()
        .fold((f64::INFINITY, None), |acc, (s, x)| {
            if acc.1.is_none() || s < acc.0 {
                (s, Some(x))
            } else {
                acc
            }
        });
    let flat = best_x.expect("at least one restart");
    Ok(OptimizedBatch {
        x: DMatrix::from_row_slice(q, d, &flat),
        value: -best_score,
    })
}
