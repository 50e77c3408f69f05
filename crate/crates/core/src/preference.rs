//! Batch preference feedback and its likelihoods under the shared-noise model
//! `y = f + ε`, `ε ~ N(0, σ²I)`, where lower `y` is preferred.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inv_mills, log_std_normal_cdf, QuadratureRule, SQRT_PI};

/// Preference feedback on one batch. Indices are 0-based in memory and
/// 1-based on the wire.
///
/// A pair `(a, b)` states that `x_a` is preferred to `x_b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FeedbackWire", into = "FeedbackWire")]
pub enum Feedback {
    Winner(usize),
    /// Batch indices ordered from best to worst.
    Ranking(Vec<usize>),
    Pairs(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum FeedbackWire {
    Winner(usize),
    Ranking(Vec<usize>),
    Pairs(Vec<[usize; 2]>),
}

fn from_one_based(i: usize) -> Result<usize> {
    i.checked_sub(1)
        .ok_or_else(|| Error::invalid("feedback indices start at 1"))
}

impl TryFrom<FeedbackWire> for Feedback {
    type Error = Error;

    fn try_from(w: FeedbackWire) -> Result<Self> {
        Ok(match w {
            FeedbackWire::Winner(j) => Feedback::Winner(from_one_based(j)?),
            FeedbackWire::Ranking(r) => Feedback::Ranking(
                r.into_iter().map(from_one_based).collect::<Result<_>>()?,
            ),
            FeedbackWire::Pairs(p) => Feedback::Pairs(
                p.into_iter()
                    .map(|[a, b]| Ok((from_one_based(a)?, from_one_based(b)?)))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

impl From<Feedback> for FeedbackWire {
    fn from(f: Feedback) -> Self {
        match f {
            Feedback::Winner(j) => FeedbackWire::Winner(j + 1),
            Feedback::Ranking(r) => FeedbackWire::Ranking(r.into_iter().map(|i| i + 1).collect()),
            Feedback::Pairs(p) => {
                FeedbackWire::Pairs(p.into_iter().map(|(a, b)| [a + 1, b + 1]).collect())
            }
        }
    }
}

impl Feedback {
    /// Checks the feedback against a batch of `q` points.
    pub fn validate(&self, q: usize) -> Result<()> {
        if q < 2 {
            return Err(Error::invalid("a batch needs at least two points"));
        }
        match self {
            Feedback::Winner(j) => {
                if *j >= q {
                    return Err(Error::invalid(format!(
                        "winner {} outside batch of {q}",
                        j + 1
                    )));
                }
            }
            Feedback::Ranking(r) => {
                let mut seen = vec![false; q];
                if r.len() != q {
                    return Err(Error::invalid(format!(
                        "ranking has {} entries, batch has {q}",
                        r.len()
                    )));
                }
                for &i in r {
                    if i >= q || seen[i] {
                        return Err(Error::invalid("ranking is not a permutation of the batch"));
                    }
                    seen[i] = true;
                }
            }
            Feedback::Pairs(p) => {
                for &(a, b) in p {
                    if a >= q || b >= q {
                        return Err(Error::invalid("pair index outside the batch"));
                    }
                    if a == b {
                        return Err(Error::invalid("a pair compares a point with itself"));
                    }
                }
                if has_cycle(p, q) {
                    return Err(Error::invalid("pairwise preferences contain a cycle"));
                }
            }
        }
        Ok(())
    }

    /// Equivalent list of pairwise preferences.
    pub fn to_pairs(&self, q: usize) -> Vec<(usize, usize)> {
        match self {
            Feedback::Winner(j) => winner_to_pairs(*j, q),
            Feedback::Ranking(r) => ranking_to_pairs(r),
            Feedback::Pairs(p) => p.clone(),
        }
    }

    pub fn is_winner(&self) -> bool {
        matches!(self, Feedback::Winner(_))
    }
}

fn has_cycle(pairs: &[(usize, usize)], q: usize) -> bool {
    // Kahn's algorithm
    let mut indeg = vec![0usize; q];
    let mut adj = vec![Vec::new(); q];
    for &(a, b) in pairs {
        adj[a].push(b);
        indeg[b] += 1;
    }
    let mut stack: Vec<usize> = (0..q).filter(|&i| indeg[i] == 0).collect();
    let mut visited = 0;
    while let Some(v) = stack.pop() {
        visited += 1;
        for &w in &adj[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                stack.push(w);
            }
        }
    }
    visited < q
}

/// Pairs stating that element `j` beats every other element of a batch of `q`.
pub fn winner_to_pairs(j: usize, q: usize) -> Vec<(usize, usize)> {
    (0..q).filter(|&i| i != j).map(|i| (j, i)).collect()
}

/// Adjacent pairs of a best-to-worst ordering.
pub fn ranking_to_pairs(order: &[usize]) -> Vec<(usize, usize)> {
    order.windows(2).map(|w| (w[0], w[1])).collect()
}

/// One batch of locations with the feedback it received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordWire", into = "RecordWire")]
pub struct PreferenceRecord {
    /// `q × d`, one row per batch element.
    pub x: DMatrix<f64>,
    pub feedback: Feedback,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordWire {
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    feedback: Feedback,
}

impl TryFrom<RecordWire> for PreferenceRecord {
    type Error = Error;

    fn try_from(w: RecordWire) -> Result<Self> {
        PreferenceRecord::new(rows_to_matrix(&w.x)?, w.feedback)
    }
}

impl From<PreferenceRecord> for RecordWire {
    fn from(r: PreferenceRecord) -> Self {
        RecordWire {
            x: matrix_to_rows(&r.x),
            feedback: r.feedback,
        }
    }
}

impl PreferenceRecord {
    pub fn new(x: DMatrix<f64>, feedback: Feedback) -> Result<Self> {
        feedback.validate(x.nrows())?;
        Ok(PreferenceRecord { x, feedback })
    }

    pub fn q(&self) -> usize {
        self.x.nrows()
    }
}

/// Builds a matrix from equal-length rows.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Stacks the batch locations of all records in order.
pub fn stack_inputs(records: &[PreferenceRecord], dim: usize) -> DMatrix<f64> {
    let n: usize = records.iter().map(|r| r.q()).sum();
    let mut x = DMatrix::zeros(n, dim);
    let mut row = 0;
    for r in records {
        for i in 0..r.q() {
            x.row_mut(row).copy_from(&r.x.row(i));
            row += 1;
        }
    }
    x
}

fn winner_node_terms(f: &[f64], j: usize, sigma: f64, rule: &QuadratureRule) -> Vec<f64> {
    let s2 = std::f64::consts::SQRT_2;
    rule.nodes()
        .iter()
        .zip(rule.weights())
        .map(|(&t, &w)| {
            let mut acc = (w / SQRT_PI).ln();
            for (i, &fi) in f.iter().enumerate() {
                if i != j {
                    acc += log_std_normal_cdf((fi - f[j]) / sigma - s2 * t);
                }
            }
            acc
        })
        .collect()
}

/// Log probability that element `j` has the smallest noisy value,
/// `log ∫ N(y | f_j, σ²) ∏_{i≠j} Φ((f_i − y)/σ) dy`, by Gauss–Hermite quadrature.
pub fn loglik_winner(f: &[f64], j: usize, sigma: f64, rule: &QuadratureRule) -> f64 {
    crate::numerics::log_sum_exp(&winner_node_terms(f, j, sigma, rule))
}

/// [`loglik_winner`] together with its gradient with respect to `f`.
pub fn loglik_winner_grad(
    f: &[f64],
    j: usize,
    sigma: f64,
    rule: &QuadratureRule,
) -> (f64, Vec<f64>) {
    let terms = winner_node_terms(f, j, sigma, rule);
    let value = crate::numerics::log_sum_exp(&terms);
    let s2 = std::f64::consts::SQRT_2;
    let mut grad = vec![0.0; f.len()];
    for (&t, term) in rule.nodes().iter().zip(&terms) {
        let p = (term - value).exp();
        if p == 0.0 {
            continue;
        }
        for (i, &fi) in f.iter().enumerate() {
            if i != j {
                grad[i] += p * inv_mills((fi - f[j]) / sigma - s2 * t) / sigma;
            }
        }
    }
    grad[j] = -grad
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, g)| g)
        .sum::<f64>();
    (value, grad)
}

/// Raw Monte-Carlo hit count for a set of pairwise preferences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairsEstimate {
    pub hits: usize,
    pub samples: usize,
}

impl PairsEstimate {
    pub fn probability(&self) -> f64 {
        self.hits as f64 / self.samples as f64
    }

    pub fn std_error(&self) -> f64 {
        let p = self.probability();
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }

    /// `log((hits + 1) / (samples + 1))`
    pub fn log_probability(&self) -> f64 {
        ((self.hits + 1) as f64 / (self.samples + 1) as f64).ln()
    }
}

/// Counts noisy draws `y ~ N(f, σ²I)` that satisfy every pair.
pub fn pairs_mc<R: Rng + ?Sized>(
    f: &[f64],
    pairs: &[(usize, usize)],
    sigma: f64,
    nsamples: usize,
    rng: &mut R,
) -> PairsEstimate {
    if pairs.is_empty() {
        return PairsEstimate {
            hits: nsamples,
            samples: nsamples,
        };
    }
    let mut y = vec![0.0; f.len()];
    let mut hits = 0;
    for _ in 0..nsamples {
        for (yi, fi) in y.iter_mut().zip(f) {
            let z: f64 = rng.sample(StandardNormal);
            *yi = fi + sigma * z;
        }
        if pairs.iter().all(|&(a, b)| y[a] < y[b]) {
            hits += 1;
        }
    }
    PairsEstimate {
        hits,
        samples: nsamples,
    }
}

/// Monte-Carlo estimate of the log probability of a set of pairwise
/// preferences, with a one-count guard so the result stays finite.
pub fn loglik_pairs_mc<R: Rng + ?Sized>(
    f: &[f64],
    pairs: &[(usize, usize)],
    sigma: f64,
    nsamples: usize,
    rng: &mut R,
) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs_mc(f, pairs, sigma, nsamples, rng).log_probability()
}

/// One-vs-each lower bound `Σ_{i≠j} log Φ((μ_i − μ_j) / √(v_i + v_j))` on the
/// log probability that `j` wins.
pub fn ove_bound(mu: &[f64], var: &[f64], j: usize) -> f64 {
    (0..mu.len())
        .filter(|&i| i != j)
        .map(|i| log_std_normal_cdf((mu[i] - mu[j]) / (var[i] + var[j]).sqrt()))
        .sum()
}

/// Log probability that the noisy values follow `order` exactly
/// (`y_{order[0]} < y_{order[1]} < …`), by backward recursion on a 1-D grid.
pub fn loglik_chain(f: &[f64], order: &[usize], sigma: f64) -> f64 {
    if order.len() < 2 {
        return 0.0;
    }
    let lo = order.iter().map(|&i| f[i]).fold(f64::INFINITY, f64::min) - 8.5 * sigma;
    let hi = order.iter().map(|&i| f[i]).fold(f64::NEG_INFINITY, f64::max) + 8.5 * sigma;
    let m = (((hi - lo) / (0.04 * sigma)).ceil() as usize).clamp(400, 6000);
    let h = (hi - lo) / (m - 1) as f64;
    let grid: Vec<f64> = (0..m).map(|k| lo + h * k as f64).collect();
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    // N(y_k | mean, σ²) on the grid by a multiplicative recurrence outward
    // from the grid point nearest the mean, two exponentials per call
    let fill_density = |mean: f64, out: &mut [f64]| {
        let k0 = (((mean - lo) / h).round().max(0.0) as usize).min(m - 1);
        let s2 = sigma * sigma;
        let z0 = (grid[k0] - mean) / sigma;
        out[k0] = norm * (-0.5 * z0 * z0).exp();
        let step = (-h * h / s2).exp();
        let mut ratio = (-(2.0 * (grid[k0] - mean) * h + h * h) / (2.0 * s2)).exp();
        for k in k0 + 1..m {
            out[k] = out[k - 1] * ratio;
            ratio *= step;
        }
        let mut ratio = (-(-2.0 * (grid[k0] - mean) * h + h * h) / (2.0 * s2)).exp();
        for k in (0..k0).rev() {
            out[k] = out[k + 1] * ratio;
            ratio *= step;
        }
    };

    // g(y) = P(remaining chain | previous value = y), kept rescaled by exp(log_scale)
    let mut g = vec![1.0; m];
    let mut log_scale = 0.0;
    let mut integrand = vec![0.0; m];
    for &idx in order[1..].iter().rev() {
        fill_density(f[idx], &mut integrand);
        for k in 0..m {
            integrand[k] *= g[k];
        }
        // cumulative trapezoid from the right: g_new(y_k) = ∫_{y_k}^{∞}
        let mut acc = 0.0;
        g[m - 1] = 0.0;
        for k in (0..m - 1).rev() {
            acc += 0.5 * h * (integrand[k] + integrand[k + 1]);
            g[k] = acc;
        }
        let mx = g.iter().cloned().fold(0.0, f64::max);
        if mx <= 0.0 {
            return f64::NEG_INFINITY;
        }
        g.iter_mut().for_each(|v| *v /= mx);
        log_scale += mx.ln();
    }
    fill_density(f[order[0]], &mut integrand);
    let mut total = 0.0;
    for k in 0..m {
        let v = integrand[k] * g[k];
        total += if k == 0 || k == m - 1 { 0.5 * v } else { v };
    }
    (total * h).ln() + log_scale
}
