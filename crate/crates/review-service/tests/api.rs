use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use criterion_lab::corpus::{Corpus, Criterion, CriterionSet};
use criterion_lab::review::ReviewBook;
use criterion_lab::syngen::{builtin_profiles, generate};
use criterion_review_service::{router, CasePage, ReviewState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus() -> Corpus {
    let mut p = builtin_profiles()["addm-like"].clone();
    p.n_cases = 12;
    p.lines_per_case.mean = 20.0;
    p.labeled_line_fraction = 0.35;
    generate(&p, 9).unwrap()
}

/// Case 0 gets exactly one A3 sentence and enough else to be positive.
fn labels(corpus: &Corpus) -> BTreeMap<(String, String), CriterionSet> {
    use Criterion::*;
    let mut labels: BTreeMap<_, _> = corpus
        .cases
        .iter()
        .flat_map(|c| {
            c.sentences
                .iter()
                .map(|s| ((c.case_id.clone(), s.sentence_id.clone()), s.gold_criteria))
        })
        .collect();
    let case = &corpus.cases[0];
    for (i, s) in case.sentences.iter().enumerate() {
        let set: CriterionSet = match i {
            0 => [A1, B1].into_iter().collect(),
            1 => [A2, B2].into_iter().collect(),
            2 => [A3].into_iter().collect(),
            _ => CriterionSet::EMPTY,
        };
        labels.insert((case.case_id.clone(), s.sentence_id.clone()), set);
    }
    labels
}

fn app(corpus: &Corpus, store: &Path) -> Router {
    let book = ReviewBook::from_labels(corpus, &labels(corpus), 1);
    router(Arc::new(ReviewState::open(book, store).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn override_body(sentence_id: &str, criterion: &str, action: &str) -> Value {
    json!({"sentence_id": sentence_id, "criterion": criterion, "action": action, "reviewer": "dr-k"})
}

#[tokio::test]
async fn pages_cover_every_case_once() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, &dir.path().join("audit.jsonl"));
    let mut seen = Vec::new();
    let mut offset = 0;
    loop {
        let (status, body) = call(&app, "GET", &format!("/cases?offset={offset}&limit=5"), None).await;
        assert_eq!(status, StatusCode::OK);
        let page: CasePage = serde_json::from_value(body).unwrap();
        assert_eq!(page.total, corpus.cases.len());
        if page.cases.is_empty() {
            break;
        }
        seen.extend(page.cases.into_iter().map(|c| c.case_id));
        offset += 5;
    }
    let expected: Vec<String> = corpus.cases.iter().map(|c| c.case_id.clone()).collect();
    assert_eq!(seen, expected);
    assert_eq!(
        call(&app, "GET", "/cases?limit=0", None).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&app, "GET", "/cases?limit=abc", None).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn unknown_case_and_route_are_404() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, &dir.path().join("audit.jsonl"));
    let (status, body) = call(&app, "GET", "/cases/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
    assert_eq!(
        call(&app, "GET", "/cases/nope/decision", None).await.0,
        StatusCode::NOT_FOUND
    );
    let (status, _) = call(
        &app,
        "POST",
        "/cases/nope/overrides",
        Some(override_body("s1", "A1", "add")),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/elsewhere", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn overrides_validate_and_get_monotone_indices() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, &dir.path().join("audit.jsonl"));
    let case = &corpus.cases[1];
    let uri = format!("/cases/{}/overrides", case.case_id);
    let sid = &case.sentences[0].sentence_id;

    let mut last = 0;
    for criterion in ["A1", "B4", "A2"] {
        let (status, body) = call(&app, "POST", &uri, Some(override_body(sid, criterion, "add"))).await;
        assert_eq!(status, StatusCode::CREATED);
        let index = body["index"].as_u64().unwrap();
        assert!(index > last);
        last = index;
    }

    let mut empty_reviewer = override_body(sid, "A1", "add");
    empty_reviewer["reviewer"] = json!("");
    assert_eq!(
        call(&app, "POST", &uri, Some(empty_reviewer)).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&app, "POST", &uri, Some(json!({"sentence_id": sid}))).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&app, "POST", &uri, Some(override_body(sid, "C9", "add"))).await.0,
        StatusCode::BAD_REQUEST
    );
    let (status, body) = call(&app, "POST", &uri, Some(override_body("missing", "A1", "add"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "unknown_sentence");

    let (_, audit) = call(&app, "GET", "/export/audit", None).await;
    assert_eq!(audit.as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn removing_the_sole_a3_sentence_flips_the_decision() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let app = app(&corpus, &dir.path().join("audit.jsonl"));
    let case = &corpus.cases[0];
    let decision_uri = format!("/cases/{}/decision", case.case_id);

    let (_, before) = call(&app, "GET", &decision_uri, None).await;
    assert_eq!(before["effective_decision"]["verdict"], true);
    let a3 = &case.sentences[2].sentence_id;
    let (status, _) = call(
        &app,
        "POST",
        &format!("/cases/{}/overrides", case.case_id),
        Some(override_body(a3, "A3", "remove")),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);

    let (_, after) = call(&app, "GET", &decision_uri, None).await;
    assert_eq!(after["model_decision"]["verdict"], true);
    assert_eq!(after["effective_decision"]["verdict"], false);
    assert_eq!(after["override_count"], 1);
    let (_, view) = call(&app, "GET", &format!("/cases/{}", case.case_id), None).await;
    assert_eq!(view["checklist"]["A3"]["satisfied"], false);
}

#[tokio::test]
async fn state_survives_restart() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("audit.jsonl");
    let first = app(&corpus, &store);
    for (i, case) in corpus.cases.iter().take(4).enumerate() {
        let body = override_body(
            &case.sentences[i].sentence_id,
            "B3",
            if i % 2 == 0 { "add" } else { "remove" },
        );
        let uri = format!("/cases/{}/overrides", case.case_id);
        assert_eq!(call(&first, "POST", &uri, Some(body)).await.0, StatusCode::CREATED);
    }
    let (_, audit_before) = call(&first, "GET", "/export/audit", None).await;
    let (_, cases_before) = call(&first, "GET", "/cases?limit=500", None).await;
    drop(first);

    let second = app(&corpus, &store);
    assert_eq!(call(&second, "GET", "/export/audit", None).await.1, audit_before);
    assert_eq!(call(&second, "GET", "/cases?limit=500", None).await.1, cases_before);
    let uri = format!("/cases/{}/overrides", corpus.cases[5].case_id);
    let body = override_body(&corpus.cases[5].sentences[0].sentence_id, "A1", "add");
    assert_eq!(call(&second, "POST", &uri, Some(body)).await.1["index"], 5);
}

#[tokio::test]
async fn full_disk_is_a_500_and_leaves_state_alone() {
    let corpus = corpus();
    let app = app(&corpus, Path::new("/dev/full"));
    let case = &corpus.cases[0];
    let (status, body) = call(
        &app,
        "POST",
        &format!("/cases/{}/overrides", case.case_id),
        Some(override_body(&case.sentences[2].sentence_id, "A3", "remove")),
    )
    .await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(body["error"], "storage_failure");
    let (_, decision) = call(&app, "GET", &format!("/cases/{}/decision", case.case_id), None).await;
    assert_eq!(decision["override_count"], 0);
    assert_eq!(decision["effective_decision"]["verdict"], true);
    assert_eq!(call(&app, "GET", "/export/audit", None).await.1, json!([]));
}
