//! Experiment manifests, batch execution and report generation behind the
//! `run` and `report` subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionKind;
use crate::bo_loop::{random_search, rank_aggregate, run_pbbo, PbboRunConfig, Trace};
use crate::error::{Error, Result};
use crate::inference::InferenceKind;
use crate::oracles::FeedbackMode;

pub const MANIFEST_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA: &str = "#schema=prefbatch.summary.v1";
pub const SUMMARY_HEADER: &str = "run_id,objective,inference,acquisition,q,seed,iter,best_so_far";
pub const SEED_ENV: &str = "PREFBATCH_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Pbbo,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub id: String,
    #[serde(default)]
    pub strategy: Strategy,
    pub config: PbboRunConfig,
}

/// A grid over batch sizes, backends, acquisitions, feedback modes and seeds
/// sharing one template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub id_prefix: String,
    pub template: PbboRunConfig,
    #[serde(default)]
    pub batch_sizes: Vec<usize>,
    #[serde(default)]
    pub inference: Vec<InferenceKind>,
    #[serde(default)]
    pub acquisition: Vec<AcquisitionKind>,
    #[serde(default)]
    pub feedback_modes: Vec<FeedbackMode>,
    pub seeds: Vec<u64>,
    /// Also add a random-search run per batch size and seed.
    #[serde(default)]
    pub random_baseline: bool,
}

impl Sweep {
    fn expand(&self) -> Result<Vec<RunEntry>> {
        let uniq: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if uniq.len() != self.seeds.len() {
            return Err(Error::invalid(format!("sweep {:?} repeats a seed", self.id_prefix)));
        }
        let t = &self.template;
        let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let qs = or(&self.batch_sizes, t.batch_size);
        let infs = if self.inference.is_empty() { vec![t.inference] } else { self.inference.clone() };
        let acqs = if self.acquisition.is_empty() {
            vec![t.acquisition.kind]
        } else {
            self.acquisition.clone()
        };
        let modes = if self.feedback_modes.is_empty() {
            vec![t.feedback_mode]
        } else {
            self.feedback_modes.clone()
        };
        let mut out = Vec::new();
        for &q in &qs {
            for &seed in &self.seeds {
                if self.random_baseline {
                    let mut c = t.clone();
                    c.batch_size = q;
                    c.seed = seed;
                    out.push(RunEntry {
                        id: format!("{}-q{q}-random-s{seed}", self.id_prefix),
                        strategy: Strategy::Random,
                        config: c,
                    });
                }
                for &inf in &infs {
                    for &acq in &acqs {
                        for &mode in &modes {
                            let mut c = t.clone();
                            c.batch_size = q;
                            c.seed = seed;
                            c.inference = inf;
                            c.acquisition.kind = acq;
                            c.feedback_mode = mode;
                            let label = c.method_label().replace('+', "-").to_lowercase();
                            out.push(RunEntry {
                                id: format!("{}-q{q}-{label}-s{seed}", self.id_prefix),
                                strategy: Strategy::Pbbo,
                                config: c,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub version: u32,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub runs: Vec<RunEntry>,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
}

impl ExperimentManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: ExperimentManifest = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    /// All runs, sweeps expanded, checked for unique ids and valid configs.
    pub fn expanded_runs(&self) -> Result<Vec<RunEntry>> {
        let mut runs = self.runs.clone();
        for s in &self.sweeps {
            runs.extend(s.expand()?);
        }
        let mut seen = BTreeSet::new();
        for r in &runs {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate run id {:?}", r.id)));
            }
            if r.id.is_empty() || r.id.contains(['/', '\\', ',', '\n']) {
                return Err(Error::invalid(format!("run id {:?} is not a plain name", r.id)));
            }
            if r.strategy == Strategy::Pbbo {
                r.config
                    .validate()
                    .map_err(|e| Error::invalid(format!("run {:?}: {e}", r.id)))?;
            }
        }
        Ok(runs)
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run_id: String,
    pub objective: String,
    pub inference: String,
    pub acquisition: String,
    pub q: usize,
    pub seed: u64,
    pub iter: usize,
    pub best_so_far: f64,
}

fn summary_rows(entry: &RunEntry, objective: &str, trace: &Trace) -> Vec<SummaryRow> {
    let c = &entry.config;
    let (inference, acquisition) = match entry.strategy {
        Strategy::Random => ("none".to_string(), "RANDOM".to_string()),
        Strategy::Pbbo => {
            let acq = match c.feedback_mode {
                FeedbackMode::Winner => c.acquisition.kind.to_string(),
                FeedbackMode::Ranking => format!("{}@ranking", c.acquisition.kind),
            };
            (c.inference.to_string(), acq)
        }
    };
    trace
        .records
        .iter()
        .map(|r| SummaryRow {
            run_id: entry.id.clone(),
            objective: objective.to_string(),
            inference: inference.clone(),
            acquisition: acquisition.clone(),
            q: c.batch_size,
            seed: c.seed,
            iter: r.iter,
            best_so_far: r.best_so_far,
        })
        .collect()
}

pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_SCHEMA}\n{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.run_id, r.objective, r.inference, r.acquisition, r.q, r.seed, r.iter, r.best_so_far
        );
    }
    s
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_SCHEMA) {
        return Err(Error::invalid(format!("summary must start with {SUMMARY_SCHEMA:?}")));
    }
    let body: String = lines.collect::<Vec<_>>().join("\n");
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != SUMMARY_HEADER {
        return Err(Error::invalid(format!("summary header must be {SUMMARY_HEADER:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::invalid(format!("summary row {}: bad {what}", i + 1));
        rows.push(SummaryRow {
            run_id: rec[0].to_string(),
            objective: rec[1].to_string(),
            inference: rec[2].to_string(),
            acquisition: rec[3].to_string(),
            q: rec[4].parse().map_err(|_| bad("q"))?,
            seed: rec[5].parse().map_err(|_| bad("seed"))?,
            iter: rec[6].parse().map_err(|_| bad("iter"))?,
            best_so_far: rec[7]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad("best_so_far"))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
}

/// Seed override from `PREFBATCH_SEED`, if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Executes every run of a manifest and writes traces plus the summary CSV.
///
/// `workers` and `out` override the manifest's values. Runs are independent,
/// so the outputs do not depend on the worker count.
pub fn cmd_run(config_path: &Path, workers: Option<usize>, out: Option<&Path>) -> Result<RunOutcome> {
    let manifest = ExperimentManifest::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out_dir = match (out, &manifest.out_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("results"),
    };
    let mut runs = manifest.expanded_runs()?;
    if let Some(seed) = seed_override()? {
        for r in &mut runs {
            r.config.seed = seed;
        }
    }
    let workers = workers.or(manifest.workers).unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;

    let trace_dir = out_dir.join("traces");
    let results: Vec<Result<(Vec<SummaryRow>, PathBuf)>> = pool.install(|| {
        runs.par_iter()
            .map(|entry| {
                let objective = entry.config.objective.resolve(base)?;
                let trace = match entry.strategy {
                    Strategy::Pbbo => run_pbbo(&entry.config, &objective),
                    Strategy::Random => random_search(&entry.config, &objective),
                }
                .map_err(|e| Error::invalid(format!("run {:?} failed: {e}", entry.id)))?;
                let mut buf = Vec::new();
                trace.write_jsonl(&mut buf)?;
                let path = trace_dir.join(format!("{}.jsonl", entry.id));
                write_atomic(&path, &buf)?;
                Ok((summary_rows(entry, &objective.name(), &trace), path))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut trace_paths = Vec::new();
    for r in results {
        let (mut rs, p) = r?;
        rows.append(&mut rs);
        trace_paths.push(p);
    }
    rows.sort_by(|a, b| a.run_id.cmp(&b.run_id).then(a.iter.cmp(&b.iter)));
    let summary_path = out_dir.join("summary.csv");
    write_atomic(&summary_path, render_summary(&rows).as_bytes())?;
    Ok(RunOutcome {
        summary_path,
        trace_paths,
    })
}

/// Mean and standard error of one method's best-so-far at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub objective: String,
    pub q: usize,
    pub method: String,
    pub iter: usize,
    pub mean: f64,
    pub std_error: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankPoint {
    pub q: usize,
    pub method: String,
    pub iter: usize,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub curves: Vec<CurvePoint>,
    pub ranks: Vec<RankPoint>,
}

fn method_of(r: &SummaryRow) -> String {
    if r.inference == "none" {
        r.acquisition.clone()
    } else {
        format!("{}+{}", r.inference, r.acquisition)
    }
}

/// Mean curves per (objective, q, method) and their ranks across objectives.
pub fn build_report(rows: &[SummaryRow]) -> Result<Report> {
    // (objective, q, method) -> run -> curve
    let mut groups: BTreeMap<(String, usize, String), BTreeMap<String, Vec<(usize, f64)>>> =
        BTreeMap::new();
    for r in rows {
        groups
            .entry((r.objective.clone(), r.q, method_of(r)))
            .or_default()
            .entry(r.run_id.clone())
            .or_default()
            .push((r.iter, r.best_so_far));
    }
    let mut report = Report::default();
    let mut means: BTreeMap<usize, BTreeMap<String, BTreeMap<String, Vec<f64>>>> = BTreeMap::new();
    for ((obj, q, method), runs) in &groups {
        let mut curves: Vec<Vec<f64>> = Vec::new();
        for (id, pts) in runs {
            let mut pts = pts.clone();
            pts.sort_by_key(|p| p.0);
            if pts.iter().enumerate().any(|(i, p)| p.0 != i) {
                return Err(Error::invalid(format!("run {id:?} has missing or repeated iterations")));
            }
            curves.push(pts.into_iter().map(|p| p.1).collect());
        }
        let len = curves[0].len();
        if let Some(c) = curves.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                found: c.len(),
            });
        }
        let n = curves.len() as f64;
        let mut mean_curve = Vec::with_capacity(len);
        for t in 0..len {
            let m = curves.iter().map(|c| c[t]).sum::<f64>() / n;
            let var = if curves.len() > 1 {
                curves.iter().map(|c| (c[t] - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            report.curves.push(CurvePoint {
                objective: obj.clone(),
                q: *q,
                method: method.clone(),
                iter: t,
                mean: m,
                std_error: (var / n).sqrt(),
                runs: curves.len(),
            });
            mean_curve.push(m);
        }
        means
            .entry(*q)
            .or_default()
            .entry(obj.clone())
            .or_default()
            .insert(method.clone(), mean_curve);
    }

    for (q, by_obj) in &means {
        // rank only methods present on every objective
        let mut common: Option<BTreeSet<String>> = None;
        for m in by_obj.values() {
            let keys: BTreeSet<String> = m.keys().cloned().collect();
            common = Some(match common {
                None => keys,
                Some(c) => c.intersection(&keys).cloned().collect(),
            });
        }
        let methods: Vec<String> = common.unwrap_or_default().into_iter().collect();
        if methods.is_empty() {
            continue;
        }
        let table: Vec<Vec<Vec<f64>>> = by_obj
            .values()
            .map(|m| methods.iter().map(|k| m[k].clone()).collect())
            .collect();
        let ranks = rank_aggregate(&table)?;
        for (method, curve) in methods.iter().zip(ranks) {
            for (t, r) in curve.into_iter().enumerate() {
                report.ranks.push(RankPoint {
                    q: *q,
                    method: method.clone(),
                    iter: t,
                    mean_rank: r,
                });
            }
        }
    }
    Ok(report)
}

/// Reads a summary CSV and writes `curves.csv` and `ranks.csv` into `out`.
pub fn cmd_report(summary: &Path, out: &Path) -> Result<Report> {
    let rows = parse_summary(&std::fs::read_to_string(summary)?)?;
    let report = build_report(&rows)?;
    let mut curves = String::from("objective,q,method,iter,mean,std_error,runs\n");
    for c in &report.curves {
        let _ = writeln!(
            curves,
            "{},{},{},{},{},{},{}",
            c.objective, c.q, c.method, c.iter, c.mean, c.std_error, c.runs
        );
    }
    let mut ranks = String::from("q,method,iter,mean_rank\n");
    for r in &report.ranks {
        let _ = writeln!(ranks, "{},{},{},{}", r.q, r.method, r.iter, r.mean_rank);
    }
    write_atomic(&out.join("curves.csv"), curves.as_bytes())?;
    write_atomic(&out.join("ranks.csv"), ranks.as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(run: &str, obj: &str, acq: &str, iter: usize, v: f64) -> SummaryRow {
        SummaryRow {
            run_id: run.into(),
            objective: obj.into(),
            inference: "EP".into(),
            acquisition: acq.into(),
            q: 2,
            seed: 0,
            iter,
            best_so_far: v,
        }
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![row("a", "toy", "QEI", 0, 0.25), row("a", "toy", "QEI", 1, 0.1)];
        let text = render_summary(&rows);
        assert!(text.starts_with("#schema=prefbatch.summary.v1\nrun_id,"));
        assert_eq!(parse_summary(&text).unwrap(), rows);
        assert!(parse_summary("run_id\n").is_err());
        let bad = text.replace("0.25", "abc");
        assert!(parse_summary(&bad).is_err());
    }

    #[test]
    fn single_run_has_zero_standard_error() {
        let rows = vec![row("a", "toy", "QEI", 0, 0.5), row("a", "toy", "QEI", 1, 0.2)];
        let rep = build_report(&rows).unwrap();
        assert_eq!(rep.curves.len(), 2);
        assert_eq!(rep.curves[1].mean, 0.2);
        assert_eq!(rep.curves[1].std_error, 0.0);
        assert!(rep.ranks.iter().all(|r| r.mean_rank == 1.0));
    }

    #[test]
    fn mismatched_curve_lengths_are_rejected() {
        let rows = vec![
            row("a", "toy", "QEI", 0, 0.5),
            row("a", "toy", "QEI", 1, 0.2),
            row("b", "toy", "QEI", 0, 0.5),
        ];
        assert!(build_report(&rows).is_err());
    }

    #[test]
    fn sweep_expansion_names_and_counts() {
        let template: PbboRunConfig = serde_json::from_str(
            r#"{"batch_size":2,"inference":"EP","max_batches":2,"seed":0,
                "objective":{"benchmark":"toy_cubic"}}"#,
        )
        .unwrap();
        let sweep = Sweep {
            id_prefix: "toy".into(),
            template,
            batch_sizes: vec![2, 3],
            inference: vec![],
            acquisition: vec![AcquisitionKind::Qei, AcquisitionKind::Ts],
            feedback_modes: vec![FeedbackMode::Winner, FeedbackMode::Ranking],
            seeds: vec![1, 2],
            random_baseline: true,
        };
        let runs = sweep.expand().unwrap();
        assert_eq!(runs.len(), 2 * 2 * (1 + 4));
        assert!(runs.iter().any(|r| r.id == "toy-q3-ep-ts@ranking-s2"));
        assert!(runs.iter().any(|r| r.id == "toy-q2-random-s1"));
        let mut dup = sweep.clone();
        dup.seeds = vec![1, 1];
        assert!(dup.expand().is_err());
    }

    #[test]
    fn unknown_manifest_keys_are_rejected() {
        let r: std::result::Result<ExperimentManifest, _> =
            serde_json::from_str(r#"{"version":1,"runs":[],"colour":"red"}"#);
        assert!(r.is_err());
    }
}
