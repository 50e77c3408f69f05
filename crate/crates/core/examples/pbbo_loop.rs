//! One optimization run against a simulated observer, next to random search
//! on the same budget.
//!
//!     cargo run --release --example pbbo_loop -- [benchmark] [QEI|TS|PQEI_MC]

use std::path::Path;

use prefbatch::acquisition::AcquisitionKind;
use prefbatch::bo_loop::{random_search, run_pbbo, PbboRunConfig};
use prefbatch::inference::InferenceKind;
use prefbatch::oracles::OracleSpec;

fn main() -> prefbatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let bench = args.next().unwrap_or_else(|| "ursem_waves".into());
    let acq = args.next().unwrap_or_else(|| "QEI".into());
    let spec: OracleSpec = serde_json::from_value(serde_json::json!({ "benchmark": bench }))?;
    let acq: AcquisitionKind = serde_json::from_value(serde_json::Value::String(acq))?;

    let mut cfg = PbboRunConfig::new(spec, InferenceKind::Ep, acq);
    cfg.batch_size = 4;
    cfg.max_batches = 8;
    cfg.seed = 2;
    let obj = cfg.objective.resolve(Path::new("."))?;

    let trace = run_pbbo(&cfg, &obj)?;
    let base = random_search(&cfg, &obj)?;
    println!("{} with {}, q = {}", obj.name(), cfg.method_label(), cfg.batch_size);
    println!("iter  points  {:>10}  {:>10}  ms", "pbbo", "random");
    for (r, b) in trace.records.iter().zip(&base.records) {
        println!(
            "{:>4}  {:>6}  {:>10.5}  {:>10.5}  {:.0}{}",
            r.iter,
            (r.iter + 1) * cfg.batch_size,
            r.best_so_far,
            b.best_so_far,
            r.wall_ms,
            r.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default()
        );
    }
    Ok(())
}
