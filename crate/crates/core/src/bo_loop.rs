//! The sequential preferential batch loop, its random-search baseline and the
//! metrics used to compare runs.

use std::io::{BufRead, Write};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    optimize_acquisition, repair_batch, ts_batch, AcquisitionKind, AcquisitionSpec, PqeiEvaluator, QeiEvaluator,
    SearchDomain,
};
use crate::error::{Error, Result};
use crate::gp::{KernelParams, Posterior};
use crate::inference::{fit_posterior, FitOutcome, InferenceConfig, InferenceKind};
use crate::numerics::{child_rng, derive_seed};
use crate::oracles::{
    batch_feedback, FeedbackMode, Objective, OracleSpec, DEFAULT_FEEDBACK_NOISE,
};
use crate::preference::{matrix_to_rows, Feedback, PreferenceRecord};

// seed-tree streams
const STREAM_PROPOSE: u64 = 1;
const STREAM_FEEDBACK: u64 = 2;
const STREAM_RETRY: u64 = 0x5e7;

fn default_init_batches() -> usize {
    1
}

fn default_feedback_noise() -> f64 {
    DEFAULT_FEEDBACK_NOISE
}

/// One experiment: a model, an acquisition rule, an objective and a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbboRunConfig {
    pub batch_size: usize,
    pub inference: InferenceKind,
    #[serde(default)]
    pub inference_config: InferenceConfig,
    #[serde(default)]
    pub acquisition: AcquisitionSpec,
    pub max_batches: usize,
    #[serde(default = "default_init_batches")]
    pub init_batches: usize,
    pub seed: u64,
    pub objective: OracleSpec,
    #[serde(default)]
    pub feedback_mode: FeedbackMode,
    /// Standard deviation of the simulated observer's noise.
    #[serde(default = "default_feedback_noise")]
    pub feedback_noise: f64,
    /// Noise level assumed by the model; defaults to `feedback_noise`.
    #[serde(default)]
    pub model_noise: Option<f64>,
    /// Kernel override; defaults to the objective's own.
    #[serde(default)]
    pub kernel: Option<KernelParams>,
}

impl PbboRunConfig {
    pub fn new(objective: OracleSpec, inference: InferenceKind, acquisition: AcquisitionKind) -> Self {
        PbboRunConfig {
            batch_size: 4,
            inference,
            inference_config: InferenceConfig::default(),
            acquisition: AcquisitionSpec::with_kind(acquisition),
            max_batches: 12,
            init_batches: 1,
            seed: 0,
            objective,
            feedback_mode: FeedbackMode::Winner,
            feedback_noise: DEFAULT_FEEDBACK_NOISE,
            model_noise: None,
            kernel: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.batch_size) {
            return Err(Error::invalid("batch_size must be between 2 and 6"));
        }
        if self.max_batches == 0 {
            return Err(Error::invalid("max_batches must be at least 1"));
        }
        if self.init_batches > self.max_batches {
            return Err(Error::invalid("init_batches cannot exceed max_batches"));
        }
        if self.feedback_mode == FeedbackMode::Ranking && self.inference != InferenceKind::Ep {
            return Err(Error::invalid(format!(
                "ranking feedback needs EP; {} handles winner feedback only",
                self.inference
            )));
        }
        if !(self.feedback_noise >= 0.0 && self.feedback_noise.is_finite()) {
            return Err(Error::invalid("feedback_noise must be finite and non-negative"));
        }
        if let Some(s) = self.model_noise {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("model_noise must be positive"));
            }
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        self.acquisition.validate()
    }

    pub fn model_sigma(&self) -> f64 {
        self.model_noise.unwrap_or(self.feedback_noise.max(1e-3))
    }

    /// Short method label such as `EP+QEI` or `EP+TS@ranking`.
    pub fn method_label(&self) -> String {
        let base = format!("{}+{}", self.inference, self.acquisition.kind);
        match self.feedback_mode {
            FeedbackMode::Winner => base,
            FeedbackMode::Ranking => format!("{base}@ranking"),
        }
    }

    /// Everything `propose_next` needs, with the kernel resolved.
    pub fn model(&self, objective: &Objective) -> Result<ModelSettings> {
        let kernel = match &self.kernel {
            Some(k) => k.clone(),
            None => objective.default_kernel()?,
        };
        if kernel.dim() != objective.dim() {
            return Err(Error::invalid(format!(
                "kernel has {} lengthscales but the objective is {}-dimensional",
                kernel.dim(),
                objective.dim()
            )));
        }
        Ok(ModelSettings {
            q: self.batch_size,
            inference: self.inference,
            inference_config: self.inference_config.clone(),
            acquisition: self.acquisition.clone(),
            kernel,
            sigma: self.model_sigma(),
            init_batches: self.init_batches,
            domain: objective.domain(),
        })
    }
}

/// Model and acquisition settings shared by batch runs and live sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub q: usize,
    pub inference: InferenceKind,
    #[serde(default)]
    pub inference_config: InferenceConfig,
    pub acquisition: AcquisitionSpec,
    pub kernel: KernelParams,
    pub sigma: f64,
    pub init_batches: usize,
    pub domain: SearchDomain,
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub x: DMatrix<f64>,
    /// Fit diagnostics and recovered errors.
    pub note: Option<String>,
}

fn join_notes(a: Option<String>, b: Option<String>) -> Option<String> {
    match (a, b) {
        (Some(a), Some(b)) => Some(format!("{a}; {b}")),
        (a, b) => a.or(b),
    }
}

/// Seed of the proposal stream for a run or session seeded with `seed`.
pub fn propose_seed(seed: u64) -> u64 {
    derive_seed(seed, STREAM_PROPOSE)
}

/// The posterior fit that `propose_next` uses at `iteration`.
pub fn fit_for_iteration(
    model: &ModelSettings,
    records: &[PreferenceRecord],
    iteration: usize,
    seed: u64,
) -> Result<FitOutcome> {
    fit_posterior(
        model.inference,
        &model.kernel,
        records,
        model.sigma,
        &model.inference_config,
        derive_seed(derive_seed(seed, iteration as u64), 1),
    )
}

/// Uniform batch, pushed apart to the within-batch minimum distance.
pub(crate) fn spaced_uniform(model: &ModelSettings, it_seed: u64) -> DMatrix<f64> {
    let mut x = model.domain.sample_uniform(model.q, &mut child_rng(it_seed, 0));
    repair_batch(&mut x, &model.domain, model.acquisition.min_within_batch_dist);
    x
}

fn propose_once(
    model: &ModelSettings,
    records: &[PreferenceRecord],
    iteration: usize,
    seed: u64,
    on_fit: &dyn Fn(&Posterior),
) -> Result<Proposal> {
    let q = model.q;
    let it_seed = derive_seed(seed, iteration as u64);
    if iteration < model.init_batches || records.is_empty() {
        return Ok(Proposal { x: spaced_uniform(model, it_seed), note: None });
    }
    let fit = fit_for_iteration(model, records, iteration, seed)?;
    let post = &fit.posterior;
    on_fit(post);
    let spec = &model.acquisition;
    let x = match spec.kind {
        AcquisitionKind::Qei => {
            let ev = QeiEvaluator::new(post, q, spec.mc_samples, &mut child_rng(it_seed, 2))?;
            optimize_acquisition(|x| ev.value(x), &model.domain, q, spec, derive_seed(it_seed, 3))?.x
        }
        AcquisitionKind::PqeiMc => {
            let ev = PqeiEvaluator::new(post, q, spec.mc_samples, &mut child_rng(it_seed, 2))?;
            optimize_acquisition(|x| ev.value(x), &model.domain, q, spec, derive_seed(it_seed, 3))?.x
        }
        AcquisitionKind::Ts => ts_batch(post, &model.domain, q, spec, &mut child_rng(it_seed, 4))?,
    };
    Ok(Proposal { x, note: fit.note })
}

/// Next batch given all feedback so far. The first `init_batches` batches are
/// uniform; afterwards the posterior is refitted and the acquisition
/// maximized. A failed attempt is retried once with a fresh seed and the
/// error is kept in the note.
pub fn propose_next(
    model: &ModelSettings,
    records: &[PreferenceRecord],
    iteration: usize,
    seed: u64,
) -> Result<Proposal> {
    propose_next_observed(model, records, iteration, seed, &|_| {})
}

/// `propose_next`, calling `on_fit` with each posterior once it is fitted and
/// before the acquisition step starts.
pub fn propose_next_observed(
    model: &ModelSettings,
    records: &[PreferenceRecord],
    iteration: usize,
    seed: u64,
    on_fit: &dyn Fn(&Posterior),
) -> Result<Proposal> {
    match propose_once(model, records, iteration, seed, on_fit) {
        Ok(p) => Ok(p),
        Err(first) => {
            let retry = propose_once(model, records, iteration, derive_seed(seed, STREAM_RETRY), on_fit)?;
            Ok(Proposal {
                x: retry.x,
                note: join_notes(Some(format!("retried after: {first}")), retry.note),
            })
        }
    }
}

/// One iteration of a run as written to the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub iter: usize,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub feedback: Feedback,
    pub best_so_far: f64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn best_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }

    pub fn final_best(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_so_far)
    }

    pub fn batches(&self) -> Vec<DMatrix<f64>> {
        self.records
            .iter()
            .map(|r| crate::preference::rows_to_matrix(&r.x).expect("trace rows are rectangular"))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(Trace { records })
    }
}

struct Recorder<'a> {
    objective: &'a Objective,
    best: f64,
    trace: Trace,
}

impl Recorder<'_> {
    fn push(&mut self, x: &DMatrix<f64>, feedback: Feedback, started: Instant, note: Option<String>) -> Result<()> {
        for v in self.objective.eval_rows(x)? {
            self.best = self.best.min(v);
        }
        self.trace.records.push(TraceRecord {
            iter: self.trace.records.len(),
            x: matrix_to_rows(x),
            feedback,
            best_so_far: self.best,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            note,
        });
        Ok(())
    }
}

/// Runs the loop for `cfg.max_batches` batches against `objective`.
pub fn run_pbbo(cfg: &PbboRunConfig, objective: &Objective) -> Result<Trace> {
    cfg.validate()?;
    let model = cfg.model(objective)?;
    let pseed = propose_seed(cfg.seed);
    let mut fb_rng = child_rng(cfg.seed, STREAM_FEEDBACK);
    let mut records: Vec<PreferenceRecord> = Vec::new();
    let mut rec = Recorder {
        objective,
        best: f64::INFINITY,
        trace: Trace::default(),
    };
    for b in 0..cfg.max_batches {
        let started = Instant::now();
        let p = propose_next(&model, &records, b, pseed)?;
        let fb = batch_feedback(objective, &p.x, cfg.feedback_noise, cfg.feedback_mode, &mut fb_rng)?;
        records.push(PreferenceRecord::new(p.x.clone(), fb.clone())?);
        rec.push(&p.x, fb, started, p.note)?;
    }
    Ok(rec.trace)
}

/// Baseline: every batch uniform on the domain, same metric pipeline.
pub fn random_search(cfg: &PbboRunConfig, objective: &Objective) -> Result<Trace> {
    if cfg.batch_size < 2 || cfg.max_batches == 0 {
        return Err(Error::invalid("random search needs batch_size ≥ 2 and max_batches ≥ 1"));
    }
    let domain = objective.domain();
    let pseed = propose_seed(cfg.seed);
    let mut fb_rng = child_rng(cfg.seed, STREAM_FEEDBACK);
    let mut rec = Recorder {
        objective,
        best: f64::INFINITY,
        trace: Trace::default(),
    };
    for b in 0..cfg.max_batches {
        let started = Instant::now();
        let x = domain.sample_uniform(
            cfg.batch_size,
            &mut child_rng(derive_seed(pseed, b as u64), 0),
        );
        let fb = batch_feedback(objective, &x, cfg.feedback_noise, cfg.feedback_mode, &mut fb_rng)?;
        rec.push(&x, fb, started, None)?;
    }
    Ok(rec.trace)
}

/// Average ranks (1 = best, ties share the mean rank) of `values`.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Per-iteration ranks of methods averaged over objectives.
///
/// `curves[o][m]` is method `m`'s mean best-so-far curve on objective `o`;
/// the result is indexed `[m][t]`.
pub fn rank_aggregate(curves: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = curves.first() else {
        return Ok(Vec::new());
    };
    let methods = first.len();
    let len = first.first().map_or(0, Vec::len);
    for obj in curves {
        if obj.len() != methods {
            return Err(Error::LengthMismatch {
                expected: methods,
                found: obj.len(),
            });
        }
        if let Some(c) = obj.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                found: c.len(),
            });
        }
    }
    let mut out = vec![vec![0.0; len]; methods];
    for obj in curves {
        for t in 0..len {
            let col: Vec<f64> = obj.iter().map(|c| c[t]).collect();
            for (m, r) in average_ranks(&col).into_iter().enumerate() {
                out[m][t] += r / curves.len() as f64;
            }
        }
    }
    Ok(out)
}
