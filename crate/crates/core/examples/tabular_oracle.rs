//! Optimizing over a table of ranked configurations: the table answers for
//! its own rows and a local linear fit answers in between.
//!
//!     cargo run --release --example tabular_oracle -- [table.csv]

use std::path::{Path, PathBuf};

use prefbatch::acquisition::AcquisitionKind;
use prefbatch::bo_loop::{random_search, run_pbbo, PbboRunConfig};
use prefbatch::inference::InferenceKind;
use prefbatch::oracles::{OracleSpec, TabularOracle};

fn main() -> prefbatch::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/planted_ranking.csv")
    });
    let table = TabularOracle::from_csv_path(&path)?;
    println!("{}: {} rows, {} features", path.display(), table.len(), table.dim());

    let mut cfg = PbboRunConfig::new(OracleSpec::Tabular { path }, InferenceKind::Ep, AcquisitionKind::Ts);
    cfg.batch_size = 3;
    cfg.max_batches = 6;
    cfg.seed = 4;
    let obj = cfg.objective.resolve(Path::new("."))?;
    let (xmin, _) = obj.known_min().expect("tables know their best row");
    println!("best row at unit coordinates {xmin:.3?}");

    let t = run_pbbo(&cfg, &obj)?;
    let r = random_search(&cfg, &obj)?;
    println!("\niter  pbbo     random");
    for (a, b) in t.records.iter().zip(&r.records) {
        println!("{:>4}  {:.4}   {:.4}", a.iter, a.best_so_far, b.best_so_far);
    }
    Ok(())
}
