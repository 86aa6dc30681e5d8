//! The `/v1` JSON API backing the workbench.
//!
//! Models are loaded once and shared read-only. Every model call runs on
//! the blocking pool behind a semaphore sized by `workers`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lacuna::baseline::RestoreOptions;
use lacuna::corpus::CorpusKind;
use lacuna::inference::{Client, Secret};
use lacuna::metrics::{TOP_K_PLACE, TOP_K_RESTORE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::engine::{self, Backend, LoadedBaseline};
use crate::input::GapQuery;

/// Optional bearer token required on every route but `/v1/health`.
pub const SERVE_TOKEN_ENV: &str = "LACUNA_SERVE_TOKEN";
/// Upper bound on `n` and `top` in requests.
pub const MAX_RESULTS: usize = 100;

pub struct ServiceConfig {
    pub baseline: Option<LoadedBaseline>,
    pub remote: Option<Client>,
    pub workers: usize,
    pub seed: u64,
    pub beam_width: usize,
    pub bearer: Option<Secret>,
}

struct Inner {
    baseline: Option<LoadedBaseline>,
    remote: Option<Client>,
    limiter: Arc<Semaphore>,
    seed: u64,
    beam_width: usize,
    bearer: Option<Secret>,
    models: HeaderValue,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BackendChoice {
    Baseline,
    Endpoint,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        let ids: Vec<String> = cfg
            .baseline
            .iter()
            .map(|b| b.id.clone())
            .chain(cfg.remote.iter().map(Client::produced_by))
            .collect();
        let models = HeaderValue::from_str(&ids.join(",")).unwrap_or_else(|_| HeaderValue::from_static("unknown"));
        AppState(Arc::new(Inner {
            baseline: cfg.baseline,
            remote: cfg.remote,
            limiter: Arc::new(Semaphore::new(cfg.workers.max(1))),
            seed: cfg.seed,
            beam_width: cfg.beam_width,
            bearer: cfg.bearer,
            models,
        }))
    }

    fn choose(&self, want: Option<BackendChoice>) -> Result<BackendChoice, ApiError> {
        let has_baseline = self.0.baseline.is_some();
        let has_remote = self.0.remote.is_some();
        match want {
            Some(BackendChoice::Baseline) if has_baseline => Ok(BackendChoice::Baseline),
            Some(BackendChoice::Endpoint) if has_remote => Ok(BackendChoice::Endpoint),
            Some(BackendChoice::Baseline) => Err(ApiError::unavailable("no baseline model is loaded")),
            Some(BackendChoice::Endpoint) => Err(ApiError::unavailable("no remote endpoint is configured")),
            None if has_baseline => Ok(BackendChoice::Baseline),
            None if has_remote => Ok(BackendChoice::Endpoint),
            None => Err(ApiError::unavailable("no model is loaded")),
        }
    }

    fn backend(&self, choice: BackendChoice) -> Backend<'_> {
        match choice {
            BackendChoice::Baseline => Backend::Baseline(self.0.baseline.as_ref().expect("checked by choose")),
            BackendChoice::Endpoint => Backend::Remote(self.0.remote.as_ref().expect("checked by choose")),
        }
    }

    /// Runs `f` against the chosen backend on the blocking pool.
    async fn run<T, F>(&self, choice: BackendChoice, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Backend) -> lacuna::Result<T> + Send + 'static,
    {
        let _permit = self.0.limiter.clone().acquire_owned().await.expect("semaphore is never closed");
        let st = self.clone();
        tokio::task::spawn_blocking(move || f(&st.backend(choice)))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, None, format!("worker failed: {e}")))?
            .map_err(ApiError::from)
    }

    fn respond(&self, body: impl Serialize, model: &str) -> Json<Value> {
        let mut v = serde_json::to_value(body).expect("json serializes");
        if let Value::Object(m) = &mut v {
            m.insert(
                "provenance".into(),
                json!({ "model": model, "seed": self.0.seed, "version": lacuna::VERSION }),
            );
        }
        Json(v)
    }
}

/// An error response: `{"error": {"field": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    field: Option<String>,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, field: Option<String>, message: impl Into<String>) -> Self {
        ApiError { status, field, message: message.into() }
    }

    fn bad_request(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, Some(field.into()), message)
    }

    fn unavailable(message: &str) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, None, message)
    }
}

impl From<lacuna::Error> for ApiError {
    fn from(e: lacuna::Error) -> Self {
        use lacuna::Error as E;
        let status = match &e {
            E::InvalidArgument(_) => return ApiError::bad_request("text", e.to_string()),
            E::Untrained(_) => StatusCode::SERVICE_UNAVAILABLE,
            E::Endpoint { .. } | E::Transport(_) | E::Protocol(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, None, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({ "message": self.message });
        if let Some(f) = self.field {
            err["field"] = Value::String(f);
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

fn quoted_name(msg: &str, prefix: &str) -> Option<String> {
    let rest = msg.strip_prefix(prefix)?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Decodes a JSON body, naming the offending field on failure.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let leaf = quoted_name(&message, "missing field `").or_else(|| quoted_name(&message, "unknown field `"));
        let field = match (path.as_str(), leaf) {
            ("." | "?", Some(l)) => l,
            ("." | "?", None) => "body".to_string(),
            (p, Some(l)) if !p.ends_with(&l) => format!("{p}.{l}"),
            (p, _) => p.to_string(),
        };
        ApiError::bad_request(field, message)
    })?;
    de.end().map_err(|e| ApiError::bad_request("body", e.to_string()))?;
    Ok(value)
}

fn check_count(field: &str, n: usize) -> Result<(), ApiError> {
    if (1..=MAX_RESULTS).contains(&n) {
        Ok(())
    } else {
        Err(ApiError::bad_request(field, format!("{n} not in 1..={MAX_RESULTS}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GapSpec {
    start: usize,
    letters: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RestoreRequest {
    text: String,
    #[serde(default)]
    gap: Option<GapSpec>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    kind: Option<CorpusKind>,
    #[serde(default)]
    backend: Option<BackendChoice>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaceRequest {
    text: String,
    #[serde(default)]
    top: Option<usize>,
    #[serde(default)]
    kind: Option<CorpusKind>,
    #[serde(default)]
    backend: Option<BackendChoice>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DateRequest {
    text: String,
    #[serde(default)]
    kind: Option<CorpusKind>,
    #[serde(default)]
    backend: Option<BackendChoice>,
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn corpus_stats(State(s): State<AppState>) -> Result<Json<Value>, ApiError> {
    let b = s.0.baseline.as_ref().ok_or_else(|| ApiError::unavailable("no baseline model is loaded"))?;
    Ok(s.respond(json!({ "stats": b.model.stats }), &b.id))
}

async fn restore(State(s): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: RestoreRequest = parse_body(&body)?;
    let n = req.n.unwrap_or(TOP_K_RESTORE);
    check_count("n", n)?;
    let query = match &req.gap {
        Some(g) => GapQuery::from_span(&req.text, g.start, g.letters).map_err(|e| {
            if e.field == "text" {
                e
            } else {
                e.prefixed("gap.")
            }
        }),
        None => GapQuery::from_placeholder(&req.text),
    }
    .map_err(|e| ApiError::bad_request(e.field, e.message))?;
    let choice = s.choose(req.backend)?;
    let kind = req.kind.unwrap_or(CorpusKind::Inscription);
    let opts = RestoreOptions { beam_width: s.0.beam_width, top_n: n };
    let res = s.run(choice, move |b| engine::restore(b, &query, kind, opts)).await?;
    Ok(s.respond(&res, &res.produced_by))
}

async fn attribute_place(State(s): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: PlaceRequest = parse_body(&body)?;
    let top = req.top.unwrap_or(TOP_K_PLACE);
    check_count("top", top)?;
    let choice = s.choose(req.backend)?;
    let kind = req.kind.unwrap_or(CorpusKind::Inscription);
    let res = s.run(choice, move |b| engine::attribute_place(b, &req.text, kind, top)).await?;
    Ok(s.respond(&res, &res.produced_by))
}

async fn attribute_date(State(s): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: DateRequest = parse_body(&body)?;
    let choice = s.choose(req.backend)?;
    let kind = req.kind.unwrap_or(CorpusKind::Papyrus);
    let res = s.run(choice, move |b| engine::attribute_date(b, &req.text, kind)).await?;
    Ok(s.respond(&res, &res.produced_by))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, None, "no such route; the API lives under /v1/")
}

/// Bearer check plus provenance headers on every response.
async fn stamp(State(s): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.0.bearer {
        let ok = req.uri().path() == "/v1/health"
            || req
                .headers()
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "))
                .is_some_and(|t| t == token.expose());
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, None, "missing or wrong bearer token").into_response();
        }
    }
    let mut resp = next.run(req).await;
    let h = resp.headers_mut();
    h.insert("x-lacuna-version", HeaderValue::from_static(lacuna::VERSION));
    h.insert("x-lacuna-seed", HeaderValue::from(s.0.seed));
    h.insert("x-lacuna-models", s.0.models.clone());
    resp
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/corpus/stats", get(corpus_stats))
        .route("/v1/restore", post(restore))
        .route("/v1/attribute/place", post(attribute_place))
        .route("/v1/attribute/date", post(attribute_date))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(state.clone(), stamp))
        .with_state(state)
}
