//! Local HTTP service over one candidate file and one annotation log.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use frforge_core::corpus::DomainId;
use frforge_core::detector::{read_candidates, Candidate};
use frforge_core::feedback::{Annotation, AnnotationLog, AnnotationSource, AppendOutcome, Verdict};
use frforge_core::Result;

pub const DEFAULT_LIMIT: usize = 50;
pub const MAX_LIMIT: usize = 1000;

pub struct TriageState {
    /// Score-descending, as written by `detect`.
    candidates: Vec<Candidate>,
    position: HashMap<String, usize>,
    /// Every append goes through this lock, one at a time.
    log: Mutex<AnnotationLog>,
}

impl TriageState {
    pub fn open(candidates: &Path, annotations: &Path) -> Result<Self> {
        let (_, list) = read_candidates(candidates)?;
        let log = AnnotationLog::open(annotations)?;
        let position = list.entries.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
        Ok(Self {
            candidates: list.entries,
            position,
            log: Mutex::new(log),
        })
    }
}

#[derive(Serialize)]
struct CandidateItem<'a> {
    id: &'a str,
    text: &'a str,
    routed_domain: DomainId,
    score: f64,
}

#[derive(Serialize)]
struct Progress {
    reviewed: usize,
    remaining: usize,
    confirmed: usize,
}

fn error(status: StatusCode, field: Option<&str>, message: impl Into<String>) -> Response {
    let mut body = json!({ "error": message.into() });
    if let Some(f) = field {
        body["field"] = json!(f);
    }
    (status, Json(body)).into_response()
}

async fn candidates(State(state): State<Arc<TriageState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    if let Some(unknown) = q.keys().find(|k| *k != "after" && *k != "limit") {
        return error(StatusCode::BAD_REQUEST, Some(unknown), format!("unknown query parameter `{unknown}`"));
    }
    let limit = match q.get("limit") {
        None => DEFAULT_LIMIT,
        Some(raw) => match raw.parse::<usize>() {
            Ok(n) if (1..=MAX_LIMIT).contains(&n) => n,
            _ => return error(StatusCode::BAD_REQUEST, Some("limit"), format!("limit must be an integer in 1..={MAX_LIMIT}")),
        },
    };
    let start = match q.get("after") {
        None => 0,
        Some(id) => match state.position.get(id) {
            Some(&i) => i + 1,
            None => return error(StatusCode::NOT_FOUND, Some("after"), format!("unknown candidate id `{id}`")),
        },
    };
    let items: Vec<CandidateItem> = state
        .candidates
        .iter()
        .skip(start)
        .take(limit)
        .map(|c| CandidateItem {
            id: &c.id,
            text: &c.text,
            routed_domain: c.routed_domain,
            score: c.score,
        })
        .collect();
    Json(items).into_response()
}

/// Validates `{id, verdict}`, naming the offending field on failure.
fn parse_annotation(body: &[u8]) -> std::result::Result<(String, Verdict), Response> {
    let bad = |field: Option<&str>, msg: &str| error(StatusCode::BAD_REQUEST, field, msg);
    let value: Value = serde_json::from_slice(body).map_err(|_| bad(None, "body is not valid JSON"))?;
    let obj = value.as_object().ok_or_else(|| bad(None, "body must be a JSON object"))?;
    if let Some(extra) = obj.keys().find(|k| *k != "id" && *k != "verdict") {
        return Err(bad(Some(extra), "unexpected field"));
    }
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => return Err(bad(Some("id"), "id must be a non-empty string")),
        None => return Err(bad(Some("id"), "missing field")),
    };
    let verdict = match obj.get("verdict") {
        Some(v) => serde_json::from_value::<Verdict>(v.clone())
            .map_err(|_| bad(Some("verdict"), "verdict must be \"fr\" or \"not_fr\""))?,
        None => return Err(bad(Some("verdict"), "missing field")),
    };
    Ok((id, verdict))
}

async fn annotate(State(state): State<Arc<TriageState>>, body: Bytes) -> Response {
    let (id, verdict) = match parse_annotation(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    if !state.position.contains_key(&id) {
        return error(StatusCode::NOT_FOUND, Some("id"), format!("unknown candidate id `{id}`"));
    }
    let mut log = state.log.lock().await;
    let annotation = Annotation {
        utterance_id: id.clone(),
        verdict,
        source: AnnotationSource::Human,
        timestamp: log.next_timestamp(),
    };
    match log.append(annotation.clone()) {
        Ok(AppendOutcome::Appended) => Json(annotation).into_response(),
        Ok(AppendOutcome::Duplicate) => error(StatusCode::CONFLICT, Some("id"), format!("`{id}` is already annotated")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, None, e.to_string()),
    }
}

async fn progress(State(state): State<Arc<TriageState>>) -> Json<Progress> {
    let log = state.log.lock().await;
    let reviewed = log.len();
    let confirmed = log.entries().iter().filter(|a| a.verdict == Verdict::Fr).count();
    Json(Progress {
        reviewed,
        remaining: state.candidates.len().saturating_sub(reviewed),
        confirmed,
    })
}

pub fn router(state: Arc<TriageState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/candidates", get(candidates))
        .route("/api/annotations", post(annotate))
        .route("/api/progress", get(progress))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(state: TriageState, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("triage service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state), static_dir)).await
}
