//! A small experiment manifest run through the harness: two batch sizes,
//! q-EI and Thompson sampling, random search, three seeds. Writes the summary,
//! traces and the report tables to a temporary directory (or the first
//! argument).
//!
//!     cargo run --release --example benchmark_sweep -- [out_dir]

use std::path::PathBuf;

use prefbatch::harness::{cmd_report, cmd_run};

const MANIFEST: &str = r#"{
  "version": 1,
  "sweeps": [{
    "id_prefix": "adj",
    "template": {"batch_size": 2, "inference": "EP", "max_batches": 5, "seed": 0,
                 "objective": {"benchmark": "adjiman"},
                 "acquisition": {"kind": "QEI", "mc_samples": 1000, "restarts": 4}},
    "batch_sizes": [2, 3],
    "acquisition": ["QEI", "TS"],
    "seeds": [1, 2, 3],
    "random_baseline": true
  }]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let keep = std::env::args().nth(1).map(PathBuf::from);
    let out = keep.clone().unwrap_or_else(|| tmp.path().join("out"));
    let manifest = tmp.path().join("manifest.json");
    std::fs::write(&manifest, MANIFEST)?;

    let started = std::time::Instant::now();
    let runs = cmd_run(&manifest, None, Some(&out))?;
    println!("{} runs in {:.1?}", runs.trace_paths.len(), started.elapsed());
    let report = cmd_report(&runs.summary_path, &out)?;

    let last = report.curves.iter().map(|c| c.iter).max().unwrap_or(0);
    println!("\nfinal mean best_so_far");
    for c in report.curves.iter().filter(|c| c.iter == last) {
        println!("  q={} {:<8} {:.4} ± {:.4}", c.q, c.method, c.mean, c.std_error);
    }
    println!("\nmean rank at the last iteration");
    for r in report.ranks.iter().filter(|r| r.iter == last) {
        println!("  q={} {:<8} {:.2}", r.q, r.method, r.mean_rank);
    }
    match keep {
        Some(dir) => println!("\nwrote {}", dir.display()),
        None => println!("\npass a directory to keep the files"),
    }
    Ok(())
}
