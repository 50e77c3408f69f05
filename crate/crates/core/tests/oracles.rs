use nalgebra::DMatrix;
use prefbatch::oracles::{Benchmark, Objective, OracleSpec, TabularOracle, ALL_BENCHMARKS};
use std::path::Path;

fn fixture() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures"))
}

fn grid_points(d: usize) -> usize {
    match d {
        1 => 20_001,
        2 => 301,
        3 => 61,
        _ => 25,
    }
}

/// Min and max of the scaled objective over a regular grid on the unit box.
fn grid_range(obj: &Objective) -> (f64, f64) {
    let d = obj.dim();
    let n = grid_points(d);
    let total = n.pow(d as u32);
    let mut x = vec![0.0; d];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for mut idx in 0..total {
        for v in x.iter_mut() {
            *v = (idx % n) as f64 / (n - 1) as f64;
            idx /= n;
        }
        let y = obj.eval(&x).unwrap();
        lo = lo.min(y);
        hi = hi.max(y);
    }
    (lo, hi)
}

#[test]
fn scaled_benchmarks_span_the_unit_interval() {
    for b in ALL_BENCHMARKS {
        let obj = Objective::Benchmark(b);
        let (lo, hi) = grid_range(&obj);
        assert!((-1e-9..=0.005).contains(&lo), "{}: grid min {lo}", b.name());
        assert!((0.995..=1.0 + 1e-9).contains(&hi), "{}: grid max {hi}", b.name());
    }
}

#[test]
fn published_minima() {
    let h3 = Benchmark::Hartmann3.eval_raw(&[0.114614, 0.555649, 0.852547]);
    assert!((h3 + 3.86278).abs() < 1e-4, "{h3}");
    let adj = Benchmark::Adjiman.eval_raw(&[2.0, 0.10578]);
    assert!((adj + 2.02181).abs() < 1e-4, "{adj}");
    // the frozen argmin scores zero after scaling
    for b in ALL_BENCHMARKS {
        let (_, v) = Objective::Benchmark(b).known_min().unwrap();
        assert!(v.abs() < 1e-9, "{}: {v}", b.name());
    }
}

#[test]
fn out_of_box_points_are_rejected() {
    let obj = Objective::Benchmark(Benchmark::UrsemWaves);
    assert!(obj.eval(&[0.5, 1.2]).is_err());
    assert!(obj.eval(&[0.5]).is_err());
}

#[test]
fn planted_fixture_loads_and_reproduces_its_rows() {
    let t = TabularOracle::from_csv_path(fixture().join("planted_ranking.csv")).unwrap();
    assert_eq!((t.len(), t.dim()), (40, 2));
    for i in 0..t.len() {
        let x: Vec<f64> = t.rows().row(i).iter().copied().collect();
        assert_eq!(t.eval(&x), t.rank_values()[i]);
    }
    // columns were stored as f2, rank_value, f1
    let best = t.rank_values().argmin().0;
    let row = t.rows().row(best);
    assert!((row[0] - 7.663).abs() < 1e-12 && (row[1] + 0.996).abs() < 1e-12, "{row}");
}

#[test]
fn tabular_objective_resolves_relative_to_the_manifest() {
    let spec: OracleSpec = serde_json::from_str(r#"{"tabular":{"path":"planted_ranking.csv"}}"#).unwrap();
    let obj = spec.resolve(fixture()).unwrap();
    assert_eq!(obj.dim(), 2);
    let (xmin, vmin) = obj.known_min().unwrap();
    assert_eq!(vmin, 0.0);
    assert_eq!(obj.eval(&xmin).unwrap(), 0.0);
    // values off the table come from the local linear fit and stay finite
    let y = obj.eval_rows(&DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.01, 0.99])).unwrap();
    assert!(y.iter().all(|v| v.is_finite()));
    assert!(obj.default_kernel().unwrap().lengthscales.iter().all(|l| *l > 0.0));
}
