use std::path::{Path, PathBuf};
use std::process::Command;

use prefbatch::harness::{cmd_report, cmd_run, parse_summary, SUMMARY_HEADER, SUMMARY_SCHEMA};

fn fixture(name: &str) -> PathBuf {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures")).join(name)
}

fn write_manifest(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("manifest.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL_ACQ: &str = r#"{"kind":"TS","ts_candidate_grid":80,"ts_neighbours":20,"local_iters":10}"#;

fn two_run_manifest() -> String {
    format!(
        r#"{{"version":1,"runs":[
          {{"id":"toy-ts","config":{{"batch_size":2,"inference":"EP","max_batches":3,"seed":4,
            "objective":{{"benchmark":"toy_cubic"}},"acquisition":{SMALL_ACQ},
            "inference_config":{{"ep":{{"moment_samples":400}}}}}}}},
          {{"id":"toy-random","strategy":"random","config":{{"batch_size":3,"inference":"EP",
            "max_batches":4,"seed":9,"objective":{{"benchmark":"toy_cubic"}}}}}}
        ]}}"#
    )
}

#[test]
fn empty_manifest_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), r#"{"version":1,"runs":[]}"#);
    let out = cmd_run(&m, None, Some(&dir.path().join("out"))).unwrap();
    let text = std::fs::read_to_string(out.summary_path).unwrap();
    assert_eq!(text, format!("{SUMMARY_SCHEMA}\n{SUMMARY_HEADER}\n"));
    // and the report of nothing is empty but well-formed
    let rep = cmd_report(&dir.path().join("out/summary.csv"), dir.path()).unwrap();
    assert!(rep.curves.is_empty() && rep.ranks.is_empty());
}

#[test]
fn worker_count_and_reruns_do_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), &two_run_manifest());
    let one = cmd_run(&m, Some(1), Some(&dir.path().join("w1"))).unwrap();
    let two = cmd_run(&m, Some(2), Some(&dir.path().join("w2"))).unwrap();
    let again = cmd_run(&m, Some(1), Some(&dir.path().join("w1"))).unwrap();
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&one.summary_path), read(&two.summary_path));
    assert_eq!(read(&one.summary_path), read(&again.summary_path));
    for name in ["toy-ts.jsonl", "toy-random.jsonl"] {
        let a = read(&dir.path().join("w1/traces").join(name));
        let b = read(&dir.path().join("w2/traces").join(name));
        // wall-clock times differ between runs, everything else must not
        let strip = |v: &[u8]| -> Vec<serde_json::Value> {
            String::from_utf8(v.to_vec())
                .unwrap()
                .lines()
                .map(|l| {
                    let mut j: serde_json::Value = serde_json::from_str(l).unwrap();
                    j.as_object_mut().unwrap().remove("wall_ms");
                    j
                })
                .collect()
        };
        assert_eq!(strip(&a), strip(&b), "{name}");
    }
    let rows = parse_summary(&std::fs::read_to_string(&one.summary_path).unwrap()).unwrap();
    assert_eq!(rows.len(), 3 + 4);
    assert_eq!(rows[0].run_id, "toy-random");
    assert_eq!(rows[4].acquisition, "TS");
    // best_so_far never increases within a run
    for w in rows.windows(2) {
        if w[0].run_id == w[1].run_id {
            assert!(w[1].best_so_far <= w[0].best_so_far);
        }
    }
}

#[test]
fn random_search_report_matches_order_statistics() {
    // scaled linear objective on [0, 1]: values are uniform, so after k
    // points the expected best is 1 / (k + 1)
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<String> = (0..10)
        .map(|s| {
            format!(
                r#"{{"id":"lin-{s}","strategy":"random","config":{{"batch_size":2,"inference":"EP",
                    "max_batches":5,"seed":{s},"objective":{{"benchmark":"linear"}}}}}}"#
            )
        })
        .collect();
    let m = write_manifest(dir.path(), &format!(r#"{{"version":1,"runs":[{}]}}"#, runs.join(",")));
    let out = cmd_run(&m, Some(1), Some(&dir.path().join("out"))).unwrap();
    let summary = out.summary_path;
    let rep = cmd_report(&summary, &dir.path().join("report")).unwrap();
    assert_eq!(rep.curves.len(), 5);
    for c in &rep.curves {
        let k = (c.iter + 1) * 2;
        let expect = 1.0 / (k as f64 + 1.0);
        assert_eq!(c.runs, 10);
        assert!(
            (c.mean - expect).abs() <= 3.0 * c.std_error.max(1e-12),
            "iter {}: {} vs {expect} (s.e. {})",
            c.iter,
            c.mean,
            c.std_error
        );
    }
    let curves = std::fs::read_to_string(dir.path().join("report/curves.csv")).unwrap();
    assert!(curves.starts_with("objective,q,method,iter,mean,std_error,runs\nlinear,2,RANDOM,0,"));
}

#[test]
fn crossing_fixture_rank_table() {
    let dir = tempfile::tempdir().unwrap();
    let rep = cmd_report(&fixture("crossing_summary.csv"), dir.path()).unwrap();
    // worked out by hand from the fixture
    let expect = [
        ("EP+QEI", [2.5, 1.25, 1.0]),
        ("EP+TS", [1.0, 1.75, 2.0]),
        ("RANDOM", [2.5, 3.0, 3.0]),
    ];
    for (method, ranks) in expect {
        let got: Vec<f64> = rep
            .ranks
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.mean_rank)
            .collect();
        assert_eq!(got, ranks, "{method}");
    }
    let table = std::fs::read_to_string(dir.path().join("ranks.csv")).unwrap();
    assert!(table.contains("2,EP+QEI,1,1.25\n"), "{table}");
}

#[test]
fn binary_reports_bad_input_with_nonzero_exit() {
    let bin = env!("CARGO_BIN_EXE_prefbatch");
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), r#"{"version":1,"runs":[],"typo":3}"#);
    let out = Command::new(bin).args(["run", "--config"]).arg(&m).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "run_id,objective\nx,y\n").unwrap();
    let out = Command::new(bin)
        .args(["report", "--summary"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));

    let dup = write_manifest(
        dir.path(),
        r#"{"version":1,"runs":[
            {"id":"a","strategy":"random","config":{"batch_size":2,"inference":"EP","max_batches":1,"seed":0,"objective":{"benchmark":"linear"}}},
            {"id":"a","strategy":"random","config":{"batch_size":2,"inference":"EP","max_batches":1,"seed":1,"objective":{"benchmark":"linear"}}}]}"#,
    );
    let out = Command::new(bin).args(["run", "--config"]).arg(&dup).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate run id"));
}

#[test]
fn seed_env_overrides_manifest_seeds() {
    let bin = env!("CARGO_BIN_EXE_prefbatch");
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(
        dir.path(),
        r#"{"version":1,"out_dir":"res","runs":[
            {"id":"r1","strategy":"random","config":{"batch_size":2,"inference":"EP","max_batches":2,"seed":3,"objective":{"benchmark":"adjiman"}}},
            {"id":"r2","strategy":"random","config":{"batch_size":2,"inference":"EP","max_batches":2,"seed":8,"objective":{"benchmark":"adjiman"}}}]}"#,
    );
    let st = Command::new(bin)
        .args(["run", "--config"])
        .arg(&m)
        .env("PREFBATCH_SEED", "77")
        .output()
        .unwrap();
    assert!(st.status.success());
    let rows = parse_summary(&std::fs::read_to_string(dir.path().join("res/summary.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.seed == 77));
    // identical seeds, identical curves
    assert_eq!(rows[0].best_so_far, rows[2].best_so_far);

    let out = dir.path().join("report");
    let st = Command::new(bin)
        .args(["report", "--summary"])
        .arg(dir.path().join("res/summary.csv"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success());
    assert!(out.join("curves.csv").exists() && out.join("ranks.csv").exists());
}
