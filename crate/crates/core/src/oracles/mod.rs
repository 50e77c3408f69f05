//! Simulated objectives and the noisy feedback they hand back to the loop.
//!
//! Every objective lives on the unit box with outputs scaled to roughly
//! `[0, 1]`; scaling constants for the synthetic functions are frozen in
//! `data/benchmarks.json` (regenerate with the `freeze_benchmarks` example).

pub mod benchmarks;
pub mod tabular;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acquisition::SearchDomain;
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparams_direct, HyperFitOptions, KernelParams};
use crate::preference::Feedback;

pub use benchmarks::{Benchmark, ALL_BENCHMARKS};
pub use tabular::TabularOracle;

/// Default standard deviation of simulated feedback noise.
pub const DEFAULT_FEEDBACK_NOISE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FeedbackMode {
    #[default]
    Winner,
    Ranking,
}

/// Frozen per-benchmark constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenBenchmark {
    pub raw_min: f64,
    pub raw_max: f64,
    /// Refined minimizer in unit-box coordinates.
    pub argmin: Vec<f64>,
    /// SE kernel fitted to noise-free scaled values.
    pub kernel: KernelParams,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenTable {
    pub benchmarks: BTreeMap<String, FrozenBenchmark>,
}

const FROZEN_JSON: &str = include_str!("../../data/benchmarks.json");

fn frozen_table() -> &'static FrozenTable {
    static TABLE: OnceLock<FrozenTable> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(FROZEN_JSON).expect("data/benchmarks.json is malformed"))
}

impl Benchmark {
    pub fn frozen(&self) -> Result<&'static FrozenBenchmark> {
        frozen_table().benchmarks.get(self.name()).ok_or_else(|| {
            Error::invalid(format!(
                "no frozen scaling for {}; run the freeze_benchmarks example",
                self.name()
            ))
        })
    }
}

/// Tabular data wrapped as a unit-box objective with values scaled to `[0, 1]`.
#[derive(Debug)]
pub struct TabularObjective {
    name: String,
    oracle: TabularOracle,
    lower: Vec<f64>,
    upper: Vec<f64>,
    vmin: f64,
    vspan: f64,
    kernel: OnceLock<std::result::Result<KernelParams, String>>,
}

impl TabularObjective {
    pub fn new(name: impl Into<String>, oracle: TabularOracle) -> Self {
        let (lower, upper) = oracle.feature_bounds();
        let v = oracle.rank_values();
        let vmin = v.min();
        let vspan = (v.max() - vmin).max(f64::MIN_POSITIVE);
        TabularObjective {
            name: name.into(),
            oracle,
            lower,
            upper,
            vmin,
            vspan,
            kernel: OnceLock::new(),
        }
    }

    pub fn oracle(&self) -> &TabularOracle {
        &self.oracle
    }

    fn to_features(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }

    fn unit_rows(&self) -> DMatrix<f64> {
        let rows = self.oracle.rows();
        DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, j| {
            (rows[(i, j)] - self.lower[j]) / (self.upper[j] - self.lower[j])
        })
    }

    fn scaled_values(&self) -> DVector<f64> {
        self.oracle.rank_values().map(|v| (v - self.vmin) / self.vspan)
    }

    fn fitted_kernel(&self) -> Result<KernelParams> {
        self.kernel
            .get_or_init(|| {
                fit_hyperparams_direct(&self.unit_rows(), &self.scaled_values(), &HyperFitOptions::default())
                    .map(|f| f.kernel)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(Error::InvalidInput)
    }
}

/// A deterministic objective on the unit box.
#[derive(Debug, Clone)]
pub enum Objective {
    Benchmark(Benchmark),
    Tabular(Arc<TabularObjective>),
}

impl Objective {
    pub fn name(&self) -> String {
        match self {
            Objective::Benchmark(b) => b.name().to_string(),
            Objective::Tabular(t) => t.name.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Benchmark(b) => b.dim(),
            Objective::Tabular(t) => t.oracle.dim(),
        }
    }

    pub fn domain(&self) -> SearchDomain {
        SearchDomain::unit(self.dim())
    }

    /// Scaled objective value at a unit-box point.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !self.domain().contains(x) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        Ok(match self {
            Objective::Benchmark(b) => {
                let fr = b.frozen()?;
                (b.eval_raw(&b.to_native(x)) - fr.raw_min) / (fr.raw_max - fr.raw_min)
            }
            Objective::Tabular(t) => (t.oracle.eval(&t.to_features(x)) - t.vmin) / t.vspan,
        })
    }

    pub fn eval_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.eval(&row)
            })
            .collect()
    }

    /// Best known location and its scaled value.
    pub fn known_min(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            Objective::Benchmark(b) => {
                let fr = b.frozen().ok()?;
                let v = self.eval(&fr.argmin).ok()?;
                Some((fr.argmin.clone(), v))
            }
            Objective::Tabular(t) => {
                let v = t.scaled_values();
                let i = v.argmin().0;
                Some((t.unit_rows().row(i).iter().copied().collect(), v[i]))
            }
        }
    }

    /// GP kernel to model this objective with: frozen for the synthetic
    /// functions, fitted to the table once otherwise.
    pub fn default_kernel(&self) -> Result<KernelParams> {
        match self {
            Objective::Benchmark(b) => Ok(b.frozen()?.kernel.clone()),
            Objective::Tabular(t) => t.fitted_kernel(),
        }
    }
}

/// Where an objective comes from, as written in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Benchmark(Benchmark),
    Tabular { path: PathBuf },
}

impl OracleSpec {
    /// Builds the objective; relative table paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Objective> {
        match self {
            OracleSpec::Benchmark(b) => {
                b.frozen()?;
                Ok(Objective::Benchmark(*b))
            }
            OracleSpec::Tabular { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let oracle = TabularOracle::from_csv_path(&full)?;
                let name = full
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "table".into());
                Ok(Objective::Tabular(Arc::new(TabularObjective::new(name, oracle))))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            OracleSpec::Benchmark(b) => b.name().to_string(),
            OracleSpec::Tabular { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "table".into()),
        }
    }
}

/// Feedback a noiseless observer would give for these values.
pub fn feedback_from_values(y: &[f64], mode: FeedbackMode) -> Feedback {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    match mode {
        FeedbackMode::Winner => Feedback::Winner(order[0]),
        FeedbackMode::Ranking => Feedback::Ranking(order),
    }
}

/// Corrupts `values` with `N(0, sigma_fb²)` noise and reports the winner or
/// the full ranking. The noise draws do not depend on `values`.
pub fn noisy_feedback<R: Rng + ?Sized>(
    values: &[f64],
    sigma_fb: f64,
    mode: FeedbackMode,
    rng: &mut R,
) -> Feedback {
    let y: Vec<f64> = values
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v + sigma_fb * e
        })
        .collect();
    feedback_from_values(&y, mode)
}

/// Evaluates a batch and returns noisy feedback on it.
pub fn batch_feedback<R: Rng + ?Sized>(
    obj: &Objective,
    x: &DMatrix<f64>,
    sigma_fb: f64,
    mode: FeedbackMode,
    rng: &mut R,
) -> Result<Feedback> {
    if x.nrows() < 2 {
        return Err(Error::invalid("feedback needs a batch of at least two points"));
    }
    if !(sigma_fb >= 0.0 && sigma_fb.is_finite()) {
        return Err(Error::invalid("feedback noise must be a finite non-negative number"));
    }
    let values = obj.eval_rows(x)?;
    Ok(noisy_feedback(&values, sigma_fb, mode, rng))
}
