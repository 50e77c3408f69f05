//! Fits EP, VI and HMC to one winner observation on the 1-D cubic toy and
//! prints the latent posterior on a coarse grid.
//!
//!     cargo run --release --example toy_inference

use nalgebra::DMatrix;
use prefbatch::inference::{fit_posterior, InferenceConfig, InferenceKind};
use prefbatch::oracles::{feedback_from_values, Benchmark, Objective};
use prefbatch::preference::PreferenceRecord;

fn main() -> prefbatch::Result<()> {
    let obj = Objective::Benchmark(Benchmark::ToyCubic);
    let kernel = obj.default_kernel()?;
    let x = DMatrix::from_column_slice(3, 1, &[0.15, 0.5, 0.85]);
    let y = obj.eval_rows(&x)?;
    let fb = feedback_from_values(&y, Default::default());
    println!("batch {:?}, objective {y:.3?}, feedback {fb:?}", x.as_slice());
    let records = vec![PreferenceRecord::new(x, fb)?];

    let grid = DMatrix::from_fn(11, 1, |i, _| i as f64 / 10.0);
    for kind in [InferenceKind::Ep, InferenceKind::Vi, InferenceKind::Hmc] {
        let started = std::time::Instant::now();
        let fit = fit_posterior(kind, &kernel, &records, 0.05, &InferenceConfig::default(), 7)?;
        let (mean, cov) = fit.posterior.predictor()?.predict(&grid);
        println!("\n{kind} ({:.2?}){}", started.elapsed(), fit.note.map(|n| format!(": {n}")).unwrap_or_default());
        for i in 0..grid.nrows() {
            let sd = cov[(i, i)].max(0.0).sqrt();
            println!("  x = {:.1}  mean {:+.3}  sd {:.3}", grid[(i, 0)], mean[i], sd);
        }
    }
    Ok(())
}
