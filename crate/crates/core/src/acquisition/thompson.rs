//! Batch Thompson sampling: each batch point minimizes its own posterior draw.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::domain::SearchDomain;
use super::optimize::repair_batch;
use super::spec::AcquisitionSpec;
use crate::error::{Error, Result};
use crate::gp::{cross_cov, Posterior, Predictor};
use crate::numerics::{chol_default, numeric_gradient, standard_normal_matrix, BoxMinimizer};

fn pick_component<R: Rng + ?Sized>(pred: &Predictor, rng: &mut R) -> usize {
    match pred.num_components() {
        0 | 1 => 0,
        n => rng.random_range(0..n),
    }
}

/// One joint draw of the latent function at the rows of `x`, plus its mean.
fn draw_at<R: Rng + ?Sized>(
    pred: &Predictor,
    x: &DMatrix<f64>,
    s: usize,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let mean = pred.component_mean(x, s);
    let cov = pred.cross_covariance(x, x);
    let l = chol_default(&cov)?.into_l();
    let z = standard_normal_matrix(1, x.nrows(), rng).transpose();
    Ok((&mean + &l * z, mean, cov))
}

/// Minimizer of one posterior function draw over `domain`.
///
/// The draw is realized jointly on random candidates plus the training
/// inputs; its grid argmin is then polished on the conditional mean of the
/// draw given its values at the nearest `spec.ts_neighbours` candidates.
fn minimize_one_draw<R: Rng + ?Sized>(
    pred: &Predictor,
    domain: &SearchDomain,
    spec: &AcquisitionSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = domain.dim();
    let s = pick_component(pred, rng);
    let rand_pts = domain.sample_uniform(spec.ts_candidate_grid, rng);
    let train = pred.train_inputs();
    let mut grid = DMatrix::zeros(rand_pts.nrows() + train.nrows(), d);
    grid.rows_mut(0, rand_pts.nrows()).copy_from(&rand_pts);
    grid.rows_mut(rand_pts.nrows(), train.nrows()).copy_from(train);

    let (f, mean, cov) = draw_at(pred, &grid, s, rng)?;
    let g = f.argmin().0;
    let x0: Vec<f64> = grid.row(g).iter().copied().collect();

    let mut order: Vec<(f64, usize)> = (0..grid.nrows())
        .map(|i| ((grid.row(i) - grid.row(g)).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nn: Vec<usize> = order.iter().take(spec.ts_neighbours).map(|p| p.1).collect();
    let anchors = grid.select_rows(&nn);
    let c_nn = DMatrix::from_fn(nn.len(), nn.len(), |a, b| cov[(nn[a], nn[b])]);
    let resid = DVector::from_fn(nn.len(), |a, _| f[nn[a]] - mean[nn[a]]);
    let w = chol_default(&c_nn)?.solve_vec(&resid);
    let alpha = pred.path_weights(s, &anchors, &w);

    let path = |x: &[f64]| {
        let xm = DMatrix::from_row_slice(1, d, x);
        let mut v = (cross_cov(&xm, &anchors, pred.kernel()) * &w)[0];
        if !alpha.is_empty() {
            v += (cross_cov(&xm, train, pred.kernel()) * &alpha)[0];
        }
        v
    };
    let lo = domain.lower();
    let hi = domain.upper();
    let step = spec.numeric_grad_step;
    let res = BoxMinimizer {
        max_iters: spec.local_iters,
        max_step: 0.1 * domain.max_width(),
        ..Default::default()
    }
    .minimize(
        |x| (path(x), numeric_gradient(path, x, step, lo, hi)),
        &x0,
        lo,
        hi,
        None,
    );
    Ok(if res.value.is_finite() && res.value <= path(&x0) {
        res.x
    } else {
        x0
    })
}

/// Thompson batch of `q` points, repaired to the minimum within-batch distance.
pub fn ts_batch<R: Rng + ?Sized>(
    post: &Posterior,
    domain: &SearchDomain,
    q: usize,
    spec: &AcquisitionSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if q == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let pred = post.predictor()?;
    let d = domain.dim();
    let mut x = DMatrix::zeros(q, d);
    for i in 0..q {
        let xi = minimize_one_draw(&pred, domain, spec, rng)?;
        for (k, v) in xi.into_iter().enumerate() {
            x[(i, k)] = v;
        }
    }
    repair_batch(&mut x, domain, spec.min_within_batch_dist);
    Ok(x)
}

/// Thompson selection on a finite candidate set: how often each candidate is
/// the minimizer of a joint posterior draw.
pub fn thompson_select_discrete<R: Rng + ?Sized>(
    post: &Posterior,
    candidates: &DMatrix<f64>,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let pred = post.predictor()?;
    let cov = pred.cross_covariance(candidates, candidates);
    let l = chol_default(&cov)?.into_l();
    let means: Vec<DVector<f64>> = (0..pred.num_components().max(1))
        .map(|s| pred.component_mean(candidates, s))
        .collect();
    let mut counts = vec![0usize; candidates.nrows()];
    for _ in 0..draws {
        let s = pick_component(&pred, rng);
        let z = standard_normal_matrix(1, candidates.nrows(), rng).transpose();
        let f = &means[s] + &l * z;
        counts[f.argmin().0] += 1;
    }
    Ok(counts)
}
