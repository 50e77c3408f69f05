//! Drives the session HTTP API in-process, with a scripted observer standing
//! in for the person at the UI. The same router is what `prefbatch serve`
//! exposes.
//!
//!     cargo run --release --example session_walkthrough

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use prefbatch::oracles::{Benchmark, Objective};
use prefbatch::session::{http::router, SessionStore};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (u16, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_default())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::main(flavor = "current_thread")]
async fn main() {
    let app = router(Arc::new(SessionStore::in_memory()));
    let observer = Objective::Benchmark(Benchmark::ToyCubic);

    let (status, mut snap) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"domain": {"lower": [0.0], "upper": [1.0]}, "q": 3, "budget": 4, "seed": 9})),
    )
    .await;
    let id = snap["id"].as_str().unwrap().to_string();
    println!("POST /sessions -> {status}, id {id}, config {}", snap["config"]);

    while snap["state"] == "awaiting_feedback" {
        let batch: Vec<Vec<f64>> = serde_json::from_value(snap["batch"].clone()).unwrap();
        let values: Vec<f64> = batch.iter().map(|x| observer.eval(x).unwrap()).collect();
        let winner = 1 + (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        println!("batch {batch:.3?} -> picks {winner}");
        let body = json!({"revision": snap["revision"], "feedback": {"winner": winner}});
        let (status, next) = call(&app, "POST", &format!("/sessions/{id}/feedback"), Some(body.clone())).await;
        assert_eq!(status, 200, "{next}");
        // the same request again is stale
        let (stale, err) = call(&app, "POST", &format!("/sessions/{id}/feedback"), Some(body)).await;
        println!("  resubmitting -> {stale} {}", err["code"]);
        snap = next;
    }
    println!("state {} after {} batches", snap["state"], snap["iteration"]);

    let (_, view) = call(&app, "GET", &format!("/sessions/{id}/posterior?grid=0.1;0.3;0.5;0.7;0.9"), None).await;
    println!("\nposterior on {} records", view["fitted_on"]);
    for i in 0..5 {
        println!("  x = {}  mean {:+.3}  sd {:.3}", view["grid"][i][0], view["mean"][i].as_f64().unwrap(), view["sd"][i].as_f64().unwrap());
    }
}
