use std::process::Command;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use lexpath_cli::{run_index, server};
use lexpath_core::synthetic::write_fixture;
use lexpath_core::{Pipeline, PipelineConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    config: std::path::PathBuf,
    queries: std::path::PathBuf,
    app: Router,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path()).unwrap();
    let cfg = PipelineConfig::load(&paths.config).unwrap();
    run_index(&cfg).unwrap();
    let app = server::router(Pipeline::open(cfg).unwrap());
    Fixture {
        _dir: dir,
        config: paths.config,
        queries: paths.queries,
        app,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

#[tokio::test]
async fn healthz_and_articles() {
    let f = fixture();
    assert_eq!(
        call(&f.app, "GET", "/healthz", None).await,
        (StatusCode::OK, json!({"status": "ok"}))
    );
    let (status, body) = call(&f.app, "GET", "/articles/L02A03", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["law_title"], "Charlie Regulation");
    assert_eq!(body["article_number"], 4);
    assert_eq!(body["hierarchy_level"], 2);
    let (status, body) = call(&f.app, "GET", "/articles/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));
}

#[tokio::test]
async fn malformed_search_is_400() {
    let f = fixture();
    for body in [
        "{not json",
        r#"{"k": 3}"#,
        r#"{"query": "x", "bogus": 1}"#,
        r#"{"query": "  "}"#,
        r#"{"query": "x", "k": 0}"#,
    ] {
        let (status, resp) = call(&f.app, "POST", "/search", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(resp["error"].is_string());
    }
}

#[tokio::test]
async fn search_matches_cli_output() {
    let f = fixture();
    let query = "question about lay05x and lay05y";
    let (status, body) = call(
        &f.app,
        "POST",
        "/search",
        Some(
            &json!({"query": query, "k": 5, "options": {"expand": false, "rerank": true}})
                .to_string(),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let cli = Command::new(env!("CARGO_BIN_EXE_lexpath"))
        .arg("--config")
        .arg(&f.config)
        .args(["search", query, "-k", "5", "--no-expand", "--json"])
        .output()
        .unwrap();
    assert!(cli.status.success());
    let cli: Value = serde_json::from_slice(&cli.stdout).unwrap();
    assert_eq!(body, cli);
}

async fn wait_job(app: &Router, id: u64) -> Value {
    for _ in 0..600 {
        let (status, body) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if body["status"] == "done" || body["status"] == "failed" {
            return body;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test]
async fn mine_and_eval_jobs() {
    let f = fixture();
    let req = json!({"queries_file": f.queries}).to_string();
    let (status, body) = call(&f.app, "POST", "/mine", Some(&req)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let mine_id = body["job_id"].as_u64().unwrap();

    let inline = json!({
        "queries": [{"query_id": "x1", "text": "question about u0303a under topic03", "gold_ids": ["L03A03"]}],
        "split": "all"
    })
    .to_string();
    let (status, body) = call(&f.app, "POST", "/eval", Some(&inline)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let eval_id = body["job_id"].as_u64().unwrap();

    let mined = wait_job(&f.app, mine_id).await;
    assert_eq!(mined["status"], "done", "{mined}");
    assert_eq!(mined["result"]["triplets"].as_array().unwrap().len(), 20);
    let evaluated = wait_job(&f.app, eval_id).await;
    assert_eq!(evaluated["status"], "done", "{evaluated}");
    assert_eq!(evaluated["result"]["recall"]["1"], 100.0);

    assert_eq!(
        call(&f.app, "GET", "/jobs/999", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&f.app, "POST", "/eval", Some("{}")).await.0,
        StatusCode::BAD_REQUEST
    );
}
