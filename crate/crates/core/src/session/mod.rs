//! Interactive sessions in which a person supplies the feedback for each
//! proposed batch, with an append-only event log per session.

pub mod http;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionKind, AcquisitionSpec, SearchDomain};
use crate::bo_loop::{fit_for_iteration, propose_next_observed, propose_seed, spaced_uniform, ModelSettings, Proposal};
use crate::error::{Error, Result};
use crate::gp::{GaussianPosterior, KernelParams, Posterior};
use crate::inference::{InferenceConfig, InferenceKind};
use crate::numerics::derive_seed;
use crate::oracles::DEFAULT_FEEDBACK_NOISE;
use crate::preference::{matrix_to_rows, rows_to_matrix, Feedback, PreferenceRecord};

/// Default lengthscale as a fraction of each domain width.
pub const DEFAULT_LENGTHSCALE_FRACTION: f64 = 0.2;

fn default_noise() -> f64 {
    DEFAULT_FEEDBACK_NOISE
}

fn default_init_batches() -> usize {
    1
}

/// Body of `POST /sessions`. Unset fields are filled in at creation and the
/// filled-in config is what the event log records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub domain: SearchDomain,
    pub q: usize,
    /// Total number of batches; open-ended when absent.
    #[serde(default)]
    pub budget: Option<usize>,
    /// EP when absent.
    #[serde(default)]
    pub inference: Option<InferenceKind>,
    #[serde(default)]
    pub inference_config: InferenceConfig,
    /// q-EI for d ≤ 2 and Thompson sampling above when absent.
    #[serde(default)]
    pub acquisition: Option<AcquisitionSpec>,
    #[serde(default)]
    pub kernel: Option<KernelParams>,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
    #[serde(default = "default_init_batches")]
    pub init_batches: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Free-form data for the client, e.g. axis labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl SessionConfig {
    pub fn new(domain: SearchDomain, q: usize) -> Self {
        SessionConfig {
            domain,
            q,
            budget: None,
            inference: None,
            inference_config: InferenceConfig::default(),
            acquisition: None,
            kernel: None,
            noise_sd: DEFAULT_FEEDBACK_NOISE,
            init_batches: 1,
            seed: None,
            metadata: None,
        }
    }

    /// Validates and fills every defaulted field.
    pub fn resolved(mut self) -> Result<Self> {
        let d = self.domain.dim();
        if self.q < 2 {
            return Err(Error::invalid("q must be at least 2"));
        }
        if self.budget == Some(0) {
            return Err(Error::invalid("budget must be at least 1"));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be positive"));
        }
        self.inference.get_or_insert(InferenceKind::Ep);
        let acq = self.acquisition.get_or_insert_with(|| {
            AcquisitionSpec::with_kind(if d <= 2 {
                AcquisitionKind::Qei
            } else {
                AcquisitionKind::Ts
            })
        });
        acq.validate()?;
        let kernel = match self.kernel.take() {
            Some(k) => k,
            None => {
                let ls = (0..d)
                    .map(|k| DEFAULT_LENGTHSCALE_FRACTION * (self.domain.upper()[k] - self.domain.lower()[k]))
                    .collect();
                KernelParams::new(1.0, ls)?
            }
        };
        kernel.validate()?;
        if kernel.dim() != d {
            return Err(Error::invalid(format!(
                "kernel has {} lengthscales but the domain is {d}-dimensional",
                kernel.dim()
            )));
        }
        self.kernel = Some(kernel);
        self.seed.get_or_insert_with(rand::random);
        Ok(self)
    }

    /// Model settings of a resolved config.
    pub fn model(&self) -> ModelSettings {
        ModelSettings {
            q: self.q,
            inference: self.inference.unwrap_or(InferenceKind::Ep),
            inference_config: self.inference_config.clone(),
            acquisition: self.acquisition.clone().unwrap_or_default(),
            kernel: self.kernel.clone().expect("resolved config"),
            sigma: self.noise_sd,
            init_batches: self.init_batches,
            domain: self.domain.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingFeedback,
    Fitting,
    Proposing,
    Done,
}

/// One line of a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionEvent {
    Created {
        id: String,
        config: SessionConfig,
    },
    Proposed {
        iter: usize,
        #[serde(rename = "X")]
        x: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Feedback {
        iter: usize,
        feedback: Feedback,
    },
    /// The posterior for the next proposal is ready.
    Fitted {
        iter: usize,
    },
    Done {
        iter: usize,
    },
}

/// What `GET /sessions/{id}` returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub revision: u64,
    pub state: SessionState,
    pub config: SessionConfig,
    /// Number of batches that have received feedback.
    pub iteration: usize,
    /// The batch awaiting feedback, if any.
    pub batch: Option<Vec<Vec<f64>>>,
    pub history: Vec<PreferenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Latent mean and standard deviation on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub revision: u64,
    /// Number of feedback records the fit is conditioned on.
    pub fitted_on: usize,
    pub grid: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug)]
struct Session {
    id: String,
    config: SessionConfig,
    model: ModelSettings,
    seed: u64,
    state: SessionState,
    revision: u64,
    batch: Option<DMatrix<f64>>,
    history: Vec<PreferenceRecord>,
    note: Option<String>,
    fit: Option<(usize, Arc<Posterior>)>,
    log: Option<PathBuf>,
}

impl Session {
    fn new(id: String, config: SessionConfig, log: Option<PathBuf>) -> Self {
        let model = config.model();
        let seed = propose_seed(config.seed.expect("resolved config"));
        Session {
            id,
            config,
            model,
            seed,
            state: SessionState::Proposing,
            revision: 0,
            batch: None,
            history: Vec::new(),
            note: None,
            fit: None,
            log,
        }
    }

    fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            id: self.id.clone(),
            revision: self.revision,
            state: self.state,
            config: self.config.clone(),
            iteration: self.history.len(),
            batch: self.batch.as_ref().map(matrix_to_rows),
            history: self.history.clone(),
            note: self.note.clone(),
        }
    }

    fn append(&self, ev: &SessionEvent) -> Result<()> {
        if let Some(path) = &self.log {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_vec(ev)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        Ok(())
    }

    fn budget_spent(&self) -> bool {
        self.config.budget.is_some_and(|b| self.history.len() >= b)
    }

    fn job(&self) -> ProposeJob {
        ProposeJob {
            model: self.model.clone(),
            history: self.history.clone(),
            iteration: self.history.len(),
            seed: self.seed,
        }
    }
}

/// A pending proposal, computed off the request path.
#[derive(Debug, Clone)]
pub struct ProposeJob {
    model: ModelSettings,
    history: Vec<PreferenceRecord>,
    pub iteration: usize,
    seed: u64,
}

impl ProposeJob {
    /// Runs the fit and acquisition. Falls back to a uniform batch if both
    /// attempts fail, so a session never gets stuck.
    fn run(&self, on_fit: &dyn Fn(&Posterior)) -> Proposal {
        match propose_next_observed(&self.model, &self.history, self.iteration, self.seed, on_fit) {
            Ok(p) => p,
            Err(e) => {
                let rng_seed = derive_seed(self.seed, self.iteration as u64);
                Proposal {
                    x: spaced_uniform(&self.model, rng_seed),
                    note: Some(format!("proposal failed ({e}); drew a uniform batch")),
                }
            }
        }
    }
}

/// Outcome of accepting feedback.
#[derive(Debug)]
pub enum Accepted {
    Done(SessionSnapshot),
    Propose(ProposeJob),
}

/// All sessions, optionally persisted under a data directory.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    data_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    InvalidConfig(String),
    #[error("no session {0:?}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    InvalidFeedback(String),
    #[error("{0}")]
    InvalidGrid(String),
    #[error("{0}")]
    GridUnavailable(String),
    #[error(transparent)]
    Internal(#[from] Error),
}

type SResult<T> = std::result::Result<T, SessionError>;

impl SessionStore {
    /// In-memory store without persistence.
    pub fn in_memory() -> Self {
        SessionStore::default()
    }

    /// Store backed by `dir`; every `*.jsonl` log already there is replayed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut map = HashMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for p in paths {
            let events = read_events(&p)?;
            let s = rebuild(&events, Some(p.clone()))
                .map_err(|e| Error::invalid(format!("{}: {e}", p.display())))?;
            map.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(SessionStore {
            sessions: RwLock::new(map),
            data_dir: Some(dir),
        })
    }

    fn get(&self, id: &str) -> SResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        v.sort();
        v
    }

    /// Sessions left mid-proposal by a restart, with the jobs to finish them.
    pub fn pending_jobs(&self) -> Vec<(String, ProposeJob)> {
        let map = self.sessions.read().expect("session map poisoned");
        let mut out: Vec<(String, ProposeJob)> = map
            .values()
            .filter_map(|s| {
                let s = s.lock().expect("session poisoned");
                matches!(s.state, SessionState::Fitting | SessionState::Proposing)
                    .then(|| (s.id.clone(), s.job()))
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Registers a session; the first batch still has to be proposed via the
    /// returned job and `finish_proposal`.
    pub fn create(&self, config: SessionConfig) -> SResult<(String, ProposeJob)> {
        let config = config
            .resolved()
            .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let log = self.data_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
        let s = Session::new(id.clone(), config.clone(), log);
        s.append(&SessionEvent::Created {
            id: id.clone(),
            config,
        })?;
        let job = s.job();
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(s)));
        Ok((id, job))
    }

    pub fn snapshot(&self, id: &str) -> SResult<SessionSnapshot> {
        Ok(self.get(id)?.lock().expect("session poisoned").snapshot())
    }

    /// Records feedback on the outstanding batch if `revision` is current.
    pub fn submit_feedback(&self, id: &str, revision: u64, feedback: Feedback) -> SResult<Accepted> {
        let cell = self.get(id)?;
        let mut s = cell.lock().expect("session poisoned");
        if s.revision != revision {
            return Err(SessionError::Conflict(format!(
                "revision {revision} is stale; the session is at revision {}",
                s.revision
            )));
        }
        if s.state != SessionState::AwaitingFeedback {
            return Err(SessionError::Conflict(format!("session is {:?}, not awaiting feedback", s.state)));
        }
        let batch = s.batch.clone().expect("awaiting sessions hold a batch");
        feedback
            .validate(s.model.q)
            .map_err(|e| SessionError::InvalidFeedback(e.to_string()))?;
        if !feedback.is_winner() && s.model.inference != InferenceKind::Ep {
            return Err(SessionError::InvalidFeedback(format!(
                "{} handles winner feedback only",
                s.model.inference
            )));
        }
        let iter = s.history.len();
        s.append(&SessionEvent::Feedback {
            iter,
            feedback: feedback.clone(),
        })?;
        s.history.push(PreferenceRecord::new(batch, feedback)?);
        s.batch = None;
        s.note = None;
        s.revision += 1;
        if s.budget_spent() {
            s.append(&SessionEvent::Done { iter: s.history.len() })?;
            s.state = SessionState::Done;
            s.revision += 1;
            return Ok(Accepted::Done(s.snapshot()));
        }
        s.state = SessionState::Fitting;
        Ok(Accepted::Propose(s.job()))
    }

    /// Runs a proposal job, moving the session through `fitting` and
    /// `proposing`. Blocking; call it off the async executor.
    pub fn run_job(&self, id: &str, job: &ProposeJob) -> SResult<SessionSnapshot> {
        let cell = self.get(id)?;
        let on_fit = |post: &Posterior| {
            let mut s = cell.lock().expect("session poisoned");
            if s.history.len() == job.iteration && s.batch.is_none() {
                // a failed log write only loses the state hint, the fit is kept
                let _ = s.append(&SessionEvent::Fitted { iter: job.iteration });
                s.fit = Some((job.iteration, Arc::new(post.clone())));
                s.state = SessionState::Proposing;
                s.revision += 1;
            }
        };
        let p = job.run(&on_fit);
        self.finish_proposal(id, job.iteration, p)
    }

    fn finish_proposal(&self, id: &str, iteration: usize, p: Proposal) -> SResult<SessionSnapshot> {
        let cell = self.get(id)?;
        let mut s = cell.lock().expect("session poisoned");
        if s.history.len() != iteration || s.batch.is_some() {
            return Err(SessionError::Conflict("proposal no longer matches the session".into()));
        }
        s.append(&SessionEvent::Proposed {
            iter: iteration,
            x: matrix_to_rows(&p.x),
            note: p.note.clone(),
        })?;
        s.batch = Some(p.x);
        s.note = p.note;
        s.state = SessionState::AwaitingFeedback;
        s.revision += 1;
        Ok(s.snapshot())
    }

    /// Latent posterior on `grid` (rows are points). Without a grid, a
    /// regular one over the domain: 101 points in 1-D, 21 × 21 in 2-D.
    pub fn posterior_view(&self, id: &str, grid: Option<DMatrix<f64>>) -> SResult<PosteriorView> {
        let cell = self.get(id)?;
        let (revision, state, model, history, seed, cached) = {
            let s = cell.lock().expect("session poisoned");
            (
                s.revision,
                s.state,
                s.model.clone(),
                s.history.clone(),
                s.seed,
                s.fit.clone(),
            )
        };
        let d = model.domain.dim();
        if d > 2 {
            return Err(SessionError::GridUnavailable(format!(
                "posterior grids are only served for d ≤ 2, this session has d = {d}"
            )));
        }
        let grid = match grid {
            Some(g) => {
                if g.ncols() != d || g.nrows() == 0 {
                    return Err(SessionError::InvalidGrid(format!("grid points must have {d} coordinates")));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(SessionError::InvalidGrid("grid has non-finite coordinates".into()));
                }
                g
            }
            None => default_grid(&model.domain),
        };
        let busy = matches!(state, SessionState::Fitting | SessionState::Proposing);
        let post: Arc<Posterior> = match cached {
            Some((n, p)) if n == history.len() || busy => p,
            _ if history.is_empty() => Arc::new(
                GaussianPosterior::prior(DMatrix::zeros(0, d), model.kernel.clone(), model.sigma).into(),
            ),
            _ => {
                let n = history.len();
                let fit = fit_for_iteration(&model, &history, n, seed)?;
                let p = Arc::new(fit.posterior);
                let mut s = cell.lock().expect("session poisoned");
                if s.history.len() == n {
                    s.fit = Some((n, p.clone()));
                }
                p
            }
        };
        let fitted_on = post.train_inputs().nrows() / model.q;
        let (mean, cov) = post.predictor()?.predict(&grid);
        Ok(PosteriorView {
            revision,
            fitted_on,
            grid: matrix_to_rows(&grid),
            mean: mean.iter().copied().collect(),
            sd: cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        })
    }
}

fn default_grid(domain: &SearchDomain) -> DMatrix<f64> {
    let lo = domain.lower();
    let hi = domain.upper();
    let lin = |k: usize, n: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64;
    if domain.dim() == 1 {
        DMatrix::from_fn(101, 1, |i, _| lin(0, 101, i))
    } else {
        DMatrix::from_fn(21 * 21, 2, |i, k| lin(k, 21, if k == 0 { i / 21 } else { i % 21 }))
    }
}

/// Parses `a,b;c,d` into a two-row matrix.
pub fn parse_grid(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|r| {
            r.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad grid coordinate {v:?}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    rows_to_matrix(&rows)
}

pub fn read_events(path: &Path) -> Result<Vec<SessionEvent>> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

fn rebuild(events: &[SessionEvent], log: Option<PathBuf>) -> Result<Session> {
    let mut it = events.iter();
    let mut s = match it.next() {
        Some(SessionEvent::Created { id, config }) => {
            let config = config.clone().resolved()?;
            Session::new(id.clone(), config, log)
        }
        _ => return Err(Error::invalid("event log must start with a created event")),
    };
    for ev in it {
        s.revision += 1;
        match ev {
            SessionEvent::Created { .. } => return Err(Error::invalid("duplicate created event")),
            SessionEvent::Proposed { iter, x, note } => {
                if *iter != s.history.len() || s.batch.is_some() {
                    return Err(Error::invalid(format!("unexpected proposal for batch {iter}")));
                }
                s.batch = Some(rows_to_matrix(x)?);
                s.note = note.clone();
                s.state = SessionState::AwaitingFeedback;
            }
            SessionEvent::Feedback { iter, feedback } => {
                let batch = s
                    .batch
                    .take()
                    .filter(|_| *iter == s.history.len())
                    .ok_or_else(|| Error::invalid(format!("feedback for batch {iter} without a proposal")))?;
                s.history.push(PreferenceRecord::new(batch, feedback.clone())?);
                s.note = None;
                s.state = SessionState::Fitting;
            }
            SessionEvent::Fitted { .. } => s.state = SessionState::Proposing,
            SessionEvent::Done { .. } => s.state = SessionState::Done,
        }
    }
    Ok(s)
}

/// Recomputes every proposal in an event log from its feedback and checks it
/// matches the logged batch exactly. Returns the number of batches checked.
pub fn verify_replay(events: &[SessionEvent]) -> Result<usize> {
    let mut s = rebuild(&events[..1.min(events.len())], None)?;
    let mut checked = 0;
    for ev in &events[1..] {
        match ev {
            SessionEvent::Proposed { iter, x, .. } => {
                let p = s.job().run(&|_| {});
                if *iter != s.history.len() || matrix_to_rows(&p.x) != *x {
                    return Err(Error::invalid(format!("batch {iter} does not replay")));
                }
                s.batch = Some(p.x);
                checked += 1;
            }
            SessionEvent::Feedback { feedback, .. } => {
                let batch = s
                    .batch
                    .take()
                    .ok_or_else(|| Error::invalid("feedback without a proposal"))?;
                s.history.push(PreferenceRecord::new(batch, feedback.clone())?);
            }
            SessionEvent::Fitted { .. } | SessionEvent::Done { .. } => {}
            SessionEvent::Created { .. } => return Err(Error::invalid("duplicate created event")),
        }
    }
    Ok(checked)
}
