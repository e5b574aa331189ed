use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use frforge_cli::serve::{router, TriageState};
use frforge_core::detector::{filter_candidates, write_candidates, Head, ScoreRecord};
use frforge_core::feedback::{AnnotationLog, AnnotationSource, Verdict};

const TARGET: usize = 7;

fn score(id: &str, p: f64) -> ScoreRecord {
    ScoreRecord {
        id: id.into(),
        p_domain: p,
        p_fr: None,
        routed_domain: 2,
        text: format!("text of {id}"),
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    candidates: PathBuf,
    annotations: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let scores = vec![
        score("u3", 0.61),
        score("u1", 0.97),
        score("u5", 0.55),
        score("u2", 0.83),
        score("u4", 0.72),
        score("u6", 0.10),
    ];
    let list = filter_candidates(&scores, TARGET, 0.5, Head::Domain).unwrap();
    assert_eq!(list.len(), 5);
    let candidates = dir.path().join("candidates.jsonl");
    write_candidates(&candidates, &list, "digest").unwrap();
    let annotations = dir.path().join("triage").join("annotations.jsonl");
    Fixture {
        _dir: dir,
        candidates,
        annotations,
    }
}

fn app(f: &Fixture) -> Router {
    router(Arc::new(TriageState::open(&f.candidates, &f.annotations).unwrap()), None)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn post(app: &Router, body: &str) -> (StatusCode, Value) {
    call(app, Method::POST, "/api/annotations", Some(body)).await
}

fn ids(v: &Value) -> Vec<&str> {
    v.as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect()
}

fn log_ids(path: &Path) -> Vec<String> {
    AnnotationLog::open(path)
        .unwrap()
        .entries()
        .iter()
        .map(|a| a.utterance_id.clone())
        .collect()
}

#[tokio::test]
async fn limit_returns_highest_scores_first() {
    let f = fixture();
    let app = app(&f);
    let (status, body) = call(&app, Method::GET, "/api/candidates?limit=2", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ids(&body), ["u1", "u2"]);
    assert_eq!(body[0]["score"], json!(0.97));
    assert_eq!(body[0]["routed_domain"], json!(2));
    assert_eq!(body[0]["text"], json!("text of u1"));
}

#[tokio::test]
async fn after_pages_through_the_list() {
    let f = fixture();
    let app = app(&f);
    let (_, page) = call(&app, Method::GET, "/api/candidates?after=u2&limit=2", None).await;
    assert_eq!(ids(&page), ["u4", "u3"]);
    let (_, rest) = call(&app, Method::GET, "/api/candidates?after=u3", None).await;
    assert_eq!(ids(&rest), ["u5"]);
    let (_, tail) = call(&app, Method::GET, "/api/candidates?after=u5", None).await;
    assert!(ids(&tail).is_empty());
}

#[tokio::test]
async fn bad_queries_are_rejected() {
    let f = fixture();
    let app = app(&f);
    for limit in ["0", "-1", "abc", "1001"] {
        let (status, body) = call(&app, Method::GET, &format!("/api/candidates?limit={limit}"), None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "limit={limit}");
        assert_eq!(body["field"], "limit");
    }
    let (status, body) = call(&app, Method::GET, "/api/candidates?offset=3", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "offset");
    let (status, body) = call(&app, Method::GET, "/api/candidates?after=nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["field"], "after");
}

#[tokio::test]
async fn annotation_is_appended_once() {
    let f = fixture();
    let app = app(&f);
    let (status, body) = post(&app, r#"{"id":"u2","verdict":"fr"}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["utterance_id"], "u2");
    assert_eq!(body["verdict"], "fr");
    assert_eq!(body["source"], "human");

    let before = std::fs::read(&f.annotations).unwrap();
    let (status, body) = post(&app, r#"{"id":"u2","verdict":"not_fr"}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["field"], "id");
    assert_eq!(std::fs::read(&f.annotations).unwrap(), before);

    let log = AnnotationLog::open(&f.annotations).unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(log.entries()[0].verdict, Verdict::Fr);
    assert_eq!(log.entries()[0].source, AnnotationSource::Human);
}

#[tokio::test]
async fn malformed_bodies_name_the_field() {
    let f = fixture();
    let app = app(&f);
    let cases = [
        (r#"{"verdict":"fr"}"#, Some("id")),
        (r#"{"id":3,"verdict":"fr"}"#, Some("id")),
        (r#"{"id":"","verdict":"fr"}"#, Some("id")),
        (r#"{"id":"u1"}"#, Some("verdict")),
        (r#"{"id":"u1","verdict":"maybe"}"#, Some("verdict")),
        (r#"{"id":"u1","verdict":"fr","note":"x"}"#, Some("note")),
        ("not json", None),
        ("[1,2]", None),
    ];
    for (body, field) in cases {
        let (status, resp) = post(&app, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(resp["error"].is_string(), "{body}");
        match field {
            Some(name) => assert_eq!(resp["field"], name, "{body}"),
            None => assert!(resp.get("field").is_none(), "{body}"),
        }
    }
    assert!(!f.annotations.exists());
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let f = fixture();
    let app = app(&f);
    // u6 scored below the threshold, so it is not a candidate.
    for id in ["u6", "zzz"] {
        let (status, body) = post(&app, &format!(r#"{{"id":"{id}","verdict":"fr"}}"#)).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["field"], "id");
    }
    assert!(!f.annotations.exists());
}

#[tokio::test]
async fn progress_tracks_the_log() {
    let f = fixture();
    let app = app(&f);
    let (_, p) = call(&app, Method::GET, "/api/progress", None).await;
    assert_eq!(p, json!({"reviewed": 0, "remaining": 5, "confirmed": 0}));
    post(&app, r#"{"id":"u1","verdict":"fr"}"#).await;
    post(&app, r#"{"id":"u3","verdict":"not_fr"}"#).await;
    post(&app, r#"{"id":"u3","verdict":"fr"}"#).await;
    let (status, p) = call(&app, Method::GET, "/api/progress", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p, json!({"reviewed": 2, "remaining": 3, "confirmed": 1}));
}

#[tokio::test]
async fn full_session_leaves_one_line_per_candidate() {
    let f = fixture();
    let app = app(&f);
    let (_, all) = call(&app, Method::GET, "/api/candidates", None).await;
    let all: Vec<String> = ids(&all).into_iter().map(String::from).collect();
    assert_eq!(all.len(), 5);
    for (i, id) in all.iter().enumerate() {
        let verdict = if i % 2 == 0 { "fr" } else { "not_fr" };
        let body = format!(r#"{{"id":"{id}","verdict":"{verdict}"}}"#);
        assert_eq!(post(&app, &body).await.0, StatusCode::OK);
        // Retries from a flaky client must not add lines.
        assert_eq!(post(&app, &body).await.0, StatusCode::CONFLICT);
    }
    let text = std::fs::read_to_string(&f.annotations).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(log_ids(&f.annotations), all);

    let log = AnnotationLog::open(&f.annotations).unwrap();
    let stamps: Vec<u64> = log.entries().iter().map(|a| a.timestamp).collect();
    assert_eq!(stamps, [1, 2, 3, 4, 5]);
}

#[tokio::test]
async fn restart_resumes_from_the_existing_log() {
    let f = fixture();
    {
        let app = app(&f);
        post(&app, r#"{"id":"u1","verdict":"fr"}"#).await;
    }
    let app = app(&f);
    let (status, _) = post(&app, r#"{"id":"u1","verdict":"fr"}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = post(&app, r#"{"id":"u4","verdict":"not_fr"}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["timestamp"], 2);
    let (_, p) = call(&app, Method::GET, "/api/progress", None).await;
    assert_eq!(p["reviewed"], 2);
}

#[tokio::test]
async fn concurrent_posts_for_one_id_append_once() {
    let f = fixture();
    let app = app(&f);
    let mut handles = Vec::new();
    for _ in 0..16 {
        let app = app.clone();
        handles.push(tokio::spawn(async move { post(&app, r#"{"id":"u5","verdict":"fr"}"#).await.0 }));
    }
    let mut ok = 0;
    for h in handles {
        match h.await.unwrap() {
            StatusCode::OK => ok += 1,
            StatusCode::CONFLICT => {}
            other => panic!("unexpected status {other}"),
        }
    }
    assert_eq!(ok, 1);
    assert_eq!(log_ids(&f.annotations), ["u5"]);
}

#[tokio::test]
async fn static_files_are_served_beside_the_api() {
    let f = fixture();
    let site = tempfile::tempdir().unwrap();
    std::fs::write(site.path().join("index.html"), "<p>console</p>").unwrap();
    let state = Arc::new(TriageState::open(&f.candidates, &f.annotations).unwrap());
    let app = router(state, Some(site.path().to_path_buf()));
    let req = Request::builder().uri("/index.html").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = to_bytes(resp.into_body(), 1 << 16).await.unwrap();
    assert_eq!(&bytes[..], b"<p>console</p>");
    let (status, _) = call(&app, Method::GET, "/api/progress", None).await;
    assert_eq!(status, StatusCode::OK);
}
