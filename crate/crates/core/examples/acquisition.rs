//! Scores and optimizes batches with q-EI, pq-EI and Thompson sampling after
//! two rounds of feedback on the cubic toy.
//!
//!     cargo run --release --example acquisition

use nalgebra::DMatrix;
use prefbatch::acquisition::{
    min_pairwise_distance, optimize_acquisition, pqei_mc, qei, ts_batch, AcquisitionKind, AcquisitionSpec,
    QeiEvaluator,
};
use prefbatch::inference::{fit_posterior, InferenceConfig, InferenceKind};
use prefbatch::numerics::seeded_rng;
use prefbatch::oracles::{feedback_from_values, Benchmark, Objective};
use prefbatch::preference::PreferenceRecord;

fn main() -> prefbatch::Result<()> {
    let obj = Objective::Benchmark(Benchmark::ToyCubic);
    let mut records = Vec::new();
    for xs in [[0.1, 0.4, 0.7, 0.95], [0.2, 0.3, 0.55, 0.8]] {
        let x = DMatrix::from_column_slice(4, 1, &xs);
        let fb = feedback_from_values(&obj.eval_rows(&x)?, Default::default());
        records.push(PreferenceRecord::new(x, fb)?);
    }
    let post = fit_posterior(
        InferenceKind::Ep,
        &obj.default_kernel()?,
        &records,
        0.05,
        &InferenceConfig::default(),
        3,
    )?
    .posterior;

    let spec = AcquisitionSpec::with_kind(AcquisitionKind::Qei);
    let mut rng = seeded_rng(11);
    for xs in [[0.05, 0.5, 0.9], [0.25, 0.3, 0.35], [0.6, 0.7, 0.8]] {
        let x = DMatrix::from_column_slice(3, 1, &xs);
        let a = qei(&post, &x, &spec, &mut rng)?;
        let b = pqei_mc(&post, &x, &spec, &mut rng)?;
        println!(
            "batch {xs:?}: q-EI {:.4} ± {:.4}, pq-EI {:.4} ± {:.4}",
            a.value, a.std_error, b.value, b.std_error
        );
    }

    let domain = obj.domain();
    let ev = QeiEvaluator::new(&post, 3, spec.mc_samples, &mut rng)?;
    let best = optimize_acquisition(|x| ev.value(x), &domain, 3, &spec, 5)?;
    println!("\nq-EI optimum {:.3?} with value {:.4}", best.x.as_slice(), best.value);

    let ts = AcquisitionSpec::with_kind(AcquisitionKind::Ts);
    let x = ts_batch(&post, &domain, 3, &ts, &mut rng)?;
    println!(
        "Thompson batch {:.3?}, closest pair {:.3}",
        x.as_slice(),
        min_pairwise_distance(&x)
    );
    Ok(())
}
