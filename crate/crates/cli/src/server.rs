//! HTTP service over one shared, immutable [`Pipeline`].
//!
//! Searches run concurrently on the blocking pool. Mining and evaluation are
//! queued as jobs and executed one at a time by a dedicated worker thread.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use lexpath_core::eval::{load_queries, parse_queries, split_dataset, LabeledQuery, Split};
use lexpath_core::{Error, Pipeline, SearchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobStatus {
    pub id: u64,
    pub kind: &'static str,
    pub status: JobState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum JobSpec {
    Mine(Vec<LabeledQuery>),
    Eval {
        queries: Vec<LabeledQuery>,
        split: Split,
        options: SearchOptions,
    },
}

struct AppState {
    pipeline: Arc<Pipeline>,
    jobs: Arc<Mutex<BTreeMap<u64, JobStatus>>>,
    next_id: AtomicU64,
    queue: Mutex<mpsc::Sender<(u64, JobSpec)>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchRequest {
    query: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    options: Option<SearchOptions>,
}

/// Queries either inline (the query-file record shape) or from a file the
/// server can read.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobRequest {
    #[serde(default)]
    queries: Option<Vec<Value>>,
    #[serde(default)]
    queries_file: Option<PathBuf>,
    #[serde(default)]
    split: Option<Split>,
    #[serde(default)]
    options: Option<SearchOptions>,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownArticle(_) => StatusCode::NOT_FOUND,
            Error::Provider { .. } | Error::Embedding { .. } => StatusCode::BAD_GATEWAY,
            Error::Config(_)
            | Error::OutOfRange(_)
            | Error::MalformedRecord { .. }
            | Error::EmptyGold(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn bad_request(msg: impl ToString) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.to_string())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("malformed request: {e}")))
}

fn run_job(pipeline: &Pipeline, spec: JobSpec) -> Result<Value, Error> {
    match spec {
        JobSpec::Mine(queries) => Ok(serde_json::to_value(pipeline.mine(&queries))?),
        JobSpec::Eval {
            queries,
            split,
            options,
        } => {
            let cfg = pipeline.config();
            let selected =
                split_dataset(&queries, cfg.split_ratios, cfg.seed, cfg.group_aware_split)?
                    .get(split);
            let report = pipeline.evaluate(&options.label(), &selected, options)?;
            Ok(serde_json::to_value(report)?)
        }
    }
}

fn spawn_worker(
    pipeline: Arc<Pipeline>,
    jobs: Arc<Mutex<BTreeMap<u64, JobStatus>>>,
) -> mpsc::Sender<(u64, JobSpec)> {
    let (tx, rx) = mpsc::channel::<(u64, JobSpec)>();
    std::thread::spawn(move || {
        for (id, spec) in rx {
            let set = |f: &dyn Fn(&mut JobStatus)| {
                if let Some(j) = jobs.lock().expect("job table").get_mut(&id) {
                    f(j);
                }
            };
            set(&|j| j.status = JobState::Running);
            let outcome = run_job(&pipeline, spec);
            set(&|j| match &outcome {
                Ok(v) => {
                    j.status = JobState::Done;
                    j.result = Some(v.clone());
                }
                Err(e) => {
                    j.status = JobState::Failed;
                    j.error = Some(e.to_string());
                }
            });
        }
    });
    tx
}

pub fn router(pipeline: Pipeline) -> Router {
    let pipeline = Arc::new(pipeline);
    let jobs = Arc::new(Mutex::new(BTreeMap::new()));
    let queue = spawn_worker(pipeline.clone(), jobs.clone());
    let state = Arc::new(AppState {
        pipeline,
        jobs,
        next_id: AtomicU64::new(1),
        queue: Mutex::new(queue),
    });
    Router::new()
        .route("/healthz", get(healthz))
        .route("/articles/{id}", get(article))
        .route("/search", post(search))
        .route("/mine", post(mine))
        .route("/eval", post(eval))
        .route("/jobs/{id}", get(job))
        .with_state(state)
}

pub async fn serve(pipeline: Pipeline, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(pipeline)).await
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn article(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    match s.pipeline.indexes().corpus.get(&id) {
        Some(a) => Ok(Json(a.clone()).into_response()),
        None => Err(Error::UnknownArticle(id).into()),
    }
}

async fn search(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: SearchRequest = parse_body(&body)?;
    if req.query.trim().is_empty() {
        return Err(bad_request("query must not be empty"));
    }
    let k = req.k.unwrap_or(s.pipeline.config().top_k);
    let options = req.options.unwrap_or_default();
    let pipeline = s.pipeline.clone();
    let resp = tokio::task::spawn_blocking(move || pipeline.search(&req.query, k, options))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(resp).into_response())
}

fn job_queries(pipeline: &Pipeline, req: &JobRequest) -> Result<Vec<LabeledQuery>, ApiError> {
    let corpus = Some(&pipeline.indexes().corpus);
    let loaded = match (&req.queries, &req.queries_file) {
        (Some(rows), None) => {
            let text: String = rows.iter().map(|r| r.to_string() + "\n").collect();
            parse_queries(&text, Path::new("<request>"), corpus)?
        }
        (None, Some(path)) => load_queries(path, corpus).map_err(|e| bad_request(e.to_string()))?,
        _ => {
            return Err(bad_request(
                "exactly one of queries / queries_file is required",
            ))
        }
    };
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    Ok(loaded.queries)
}

fn enqueue(s: &AppState, kind: &'static str, spec: JobSpec) -> Response {
    let id = s.next_id.fetch_add(1, Ordering::Relaxed);
    s.jobs.lock().expect("job table").insert(
        id,
        JobStatus {
            id,
            kind,
            status: JobState::Queued,
            result: None,
            error: None,
        },
    );
    let sent = s.queue.lock().expect("job queue").send((id, spec));
    if sent.is_err() {
        return ApiError(StatusCode::SERVICE_UNAVAILABLE, "job worker stopped".into())
            .into_response();
    }
    (
        StatusCode::ACCEPTED,
        Json(json!({"job_id": id, "status": "queued"})),
    )
        .into_response()
}

async fn mine(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: JobRequest = parse_body(&body)?;
    if req.split.is_some() || req.options.is_some() {
        return Err(bad_request("mine takes only queries / queries_file"));
    }
    let queries = job_queries(&s.pipeline, &req)?;
    Ok(enqueue(&s, "mine", JobSpec::Mine(queries)))
}

async fn eval(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: JobRequest = parse_body(&body)?;
    let queries = job_queries(&s.pipeline, &req)?;
    let spec = JobSpec::Eval {
        queries,
        split: req.split.unwrap_or(Split::Test),
        options: req.options.unwrap_or_default(),
    };
    Ok(enqueue(&s, "eval", spec))
}

async fn job(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let id: u64 = id
        .parse()
        .map_err(|_| bad_request(format!("invalid job id {id:?}")))?;
    match s.jobs.lock().expect("job table").get(&id) {
        Some(j) => Ok(Json(j.clone()).into_response()),
        None => Err(ApiError(StatusCode::NOT_FOUND, format!("unknown job {id}"))),
    }
}
