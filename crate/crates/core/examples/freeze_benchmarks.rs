//! Recomputes the frozen scaling constants and kernels in `data/benchmarks.json`.
//!
//!     cargo run --release --example freeze_benchmarks [-- --check]
//!
//! Each function is scanned on a dense grid of about a million points, the
//! best grid points are polished with L-BFGS, and an SE kernel is fitted to
//! 2500 noise-free scaled values. `--check` prints the table without writing.

use nalgebra::{DMatrix, DVector};
use prefbatch::gp::{fit_hyperparams_direct, HyperFitOptions};
use prefbatch::numerics::{numeric_gradient, seeded_rng, BoxMinimizer};
use prefbatch::oracles::{Benchmark, FrozenBenchmark, FrozenTable, ALL_BENCHMARKS};
use rand::Rng;

const GRID_TARGET: usize = 1_000_000;

fn grid_side(d: usize) -> usize {
    (GRID_TARGET as f64).powf(1.0 / d as f64).round() as usize
}

/// Returns the `keep` lowest grid points of `sign * f` and the grid size.
fn scan(b: Benchmark, sign: f64, keep: usize) -> (Vec<(f64, Vec<f64>)>, usize) {
    let d = b.dim();
    let side = grid_side(d);
    let total = side.pow(d as u32);
    let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut u = vec![0.0; d];
    for idx in 0..total {
        let mut r = idx;
        for v in u.iter_mut() {
            *v = (r % side) as f64 / (side - 1) as f64;
            r /= side;
        }
        let val = sign * b.eval_raw(&b.to_native(&u));
        if best.len() < keep || val < best[best.len() - 1].0 {
            best.push((val, u.clone()));
            best.sort_by(|a, c| a.0.total_cmp(&c.0));
            best.truncate(keep);
        }
    }
    (best, total)
}

fn polish(b: Benchmark, sign: f64, starts: &[(f64, Vec<f64>)]) -> (f64, Vec<f64>) {
    let d = b.dim();
    let lo = vec![0.0; d];
    let hi = vec![1.0; d];
    let f = |u: &[f64]| sign * b.eval_raw(&b.to_native(u));
    let opt = BoxMinimizer {
        max_iters: 200,
        grad_tol: 1e-10,
        max_step: 0.01,
        ..Default::default()
    };
    let mut best = starts[0].clone();
    for (_, x0) in starts {
        let r = opt.minimize(
            |u| (f(u), numeric_gradient(f, u, 1e-7, &lo, &hi)),
            x0,
            &lo,
            &hi,
            None,
        );
        if r.value < best.0 {
            best = (r.value, r.x);
        }
    }
    (sign * best.0, best.1)
}

fn main() -> prefbatch::Result<()> {
    let check = std::env::args().any(|a| a == "--check");
    let mut table = FrozenTable::default();
    for b in ALL_BENCHMARKS {
        let (mins, grid_points) = scan(b, 1.0, 8);
        let (maxs, _) = scan(b, -1.0, 8);
        let (raw_min, argmin) = polish(b, 1.0, &mins);
        let (raw_max, _) = polish(b, -1.0, &maxs);

        let d = b.dim();
        let mut rng = seeded_rng(2500);
        let x = DMatrix::from_fn(2500, d, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(2500, |i, _| {
            let u: Vec<f64> = x.row(i).iter().copied().collect();
            (b.eval_raw(&b.to_native(&u)) - raw_min) / (raw_max - raw_min)
        });
        let fit = fit_hyperparams_direct(&x, &y, &HyperFitOptions::default())?;
        println!(
            "{:<24} min {:>10.5} max {:>10.5} argmin {:?} var {:.4} ls {:?}",
            b.name(),
            raw_min,
            raw_max,
            argmin.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            fit.kernel.variance,
            fit.kernel.lengthscales.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        );
        table.benchmarks.insert(
            b.name().to_string(),
            FrozenBenchmark {
                raw_min,
                raw_max,
                argmin,
                kernel: fit.kernel,
                grid_points,
            },
        );
    }
    if !check {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/benchmarks.json");
        std::fs::write(path, serde_json::to_string_pretty(&table)? + "\n")?;
        println!("wrote {path}");
    }
    Ok(())
}
